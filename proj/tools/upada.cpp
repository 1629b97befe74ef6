/*
 * Copyright 2026 The upada authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <CLI11.hpp>

#include "upada/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pose-aware adversarial domain adaptation on synthetic faces"};
  app.require_subcommand(1);

  upada::cli::GenerateArgs gen;
  std::uint64_t gen_seed = 0;
  auto* cmd_gen = app.add_subcommand("generate", "render a factor-controlled dataset");
  cmd_gen->add_option("--spec", gen.spec_file, "factor spec file (key = value)");
  auto* gen_seed_opt = cmd_gen->add_option("--seed", gen_seed, "master seed override");
  cmd_gen->add_option("--out", gen.out_dir, "output directory")->required();

  upada::cli::TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "train one leave-one-subject-out run");
  cmd_train->add_option("--config", tr.config_file, "train config file (key = value)");
  cmd_train->add_option("--data", tr.data_dir, "dataset directory")->required();
  cmd_train->add_option("--subject", tr.subject, "held-out subject id")->required();
  cmd_train->add_option("--out", tr.out_dir, "output directory")->required();

  upada::cli::AblateArgs ab;
  auto* cmd_ablate = app.add_subcommand("ablate", "run the ablation grid");
  cmd_ablate->add_option("--config", ab.config_file, "base train config file");
  cmd_ablate->add_option("--data", ab.data_dir, "dataset directory")->required();
  cmd_ablate->add_option("--modes", ab.modes, "modes (default: all four)")
      ->delimiter(',');
  cmd_ablate->add_option("--subjects", ab.subjects, "held-out subject ids")
      ->delimiter(',')
      ->required();
  cmd_ablate->add_option("--seeds", ab.seeds, "seeds (default: config seed)")
      ->delimiter(',');
  cmd_ablate->add_option("--out", ab.out_dir, "output directory")->required();
  cmd_ablate->add_option("--jobs", ab.jobs, "parallel grid cells (default 1)");

  upada::cli::ProbeArgs pr;
  auto* cmd_probe = app.add_subcommand("probe", "domain and disentanglement probes");
  cmd_probe->add_option("--checkpoint", pr.checkpoint, "checkpoint file")->required();
  cmd_probe->add_option("--data", pr.data_dir, "dataset directory")->required();
  cmd_probe->add_option("--out", pr.out_dir, "output directory")->required();

  upada::cli::ExportArgs ex;
  auto* cmd_export = app.add_subcommand("export", "export feature embeddings to CSV");
  cmd_export->add_option("--checkpoint", ex.checkpoint, "checkpoint file")->required();
  cmd_export->add_option("--data", ex.data_dir, "dataset directory")->required();
  cmd_export->add_option("--out", ex.out_dir, "output directory")->required();

  upada::cli::GradcheckArgs gc;
  auto* cmd_gc = app.add_subcommand("gradcheck", "finite-difference check of all losses");
  cmd_gc->add_option("--seed", gc.seed, "fixture seed");
  cmd_gc->add_flag("--corrupt", gc.corrupt)->group("");  // test hook, hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? upada::cli::kExitBadInput : upada::cli::kExitOk;
  }

  if (cmd_gen->parsed()) {
    if (gen_seed_opt->count()) gen.seed = gen_seed;
    return upada::cli::run_generate(gen);
  }
  if (cmd_train->parsed()) return upada::cli::run_train(tr);
  if (cmd_ablate->parsed()) return upada::cli::run_ablate(ab);
  if (cmd_probe->parsed()) return upada::cli::run_probe(pr);
  if (cmd_export->parsed()) return upada::cli::run_export(ex);
  if (cmd_gc->parsed()) return upada::cli::run_gradcheck(gc);
  return upada::cli::kExitBadInput;
}
