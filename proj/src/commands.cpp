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

#include "upada/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include <json.hpp>

#include "upada/config.hpp"
#include "upada/errors.hpp"
#include "upada/evaluation.hpp"
#include "upada/gradcheck.hpp"
#include "upada/training.hpp"

namespace upada::cli {

namespace {

constexpr const char* kVersion = "upada 0.1.0";
constexpr std::uint64_t kTagProbeCmd = 0x50434d44;  // "PCMD"

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  }
}

std::string dataset_base(const std::string& data_dir) { return data_dir + "/faces"; }

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Sufficient to re-run the experiment: the fully resolved config, the input
// dataset hashes and the output locations.
void write_run_manifest(const std::string& path, const TrainConfig& cfg,
                        const std::string& data_dir, int subject,
                        const std::vector<std::string>& outputs) {
  nlohmann::ordered_json manifest;
  manifest["version"] = kVersion;
  manifest["timestamp"] = timestamp_utc();
  manifest["subject"] = subject;
  nlohmann::ordered_json cfgj;
  for (const auto& [k, v] : train_config_to_kv(cfg)) cfgj[k] = v;
  manifest["config"] = std::move(cfgj);
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(
                    mix_seed(fnv1a_file(dataset_base(data_dir) + ".json"),
                             fnv1a_file(dataset_base(data_dir) + ".bin"))));
  manifest["dataset_hash"] = hash;
  manifest["outputs"] = outputs;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write run manifest " + path);
  f << manifest.dump(2) << "\n";
}

MetricsRecord evaluate_run(const ModelBundle& bundle,
                           const std::vector<EpochRecord>& history,
                           const TrainConfig& cfg, const LosoSplit& split, int subject) {
  MetricsRecord rec;
  rec.mode = mode_name(cfg.mode);
  rec.subject = subject;
  rec.seed = cfg.seed;
  rec.run_id = "m-" + rec.mode + "_s" + std::to_string(subject) + "_k" +
               std::to_string(cfg.seed);

  auto acc = evaluate_accuracy(bundle, split.target_test);
  rec.acc_overall = acc.overall;
  rec.acc_per_pose = acc.per_pose;

  std::vector<Sample> tgt;
  for (std::size_t i = 0; i < split.target_train.size(); ++i)
    tgt.push_back(split.target_train.sample(i));
  for (std::size_t i = 0; i < split.target_test.size(); ++i)
    tgt.push_back(split.target_test.sample(i));
  Dataset target_all(split.source.spec(), std::move(tgt));

  auto dom = domain_confusion_report(bundle, split.source, target_all,
                                     mix_seed(cfg.seed, kTagProbeCmd));
  auto dis = disentanglement_report(bundle, split.source,
                                    mix_seed(cfg.seed, kTagProbeCmd, 1ULL));
  rec.probe_domain_fe = dom.on_expr;
  rec.probe_domain_fp = dom.on_pose;
  rec.probe_pose_fe = dis.pose_on_expr;
  rec.probe_expr_fp = dis.expr_on_pose;

  if (!history.empty()) {
    rec.final_losses = history.back().losses;
    rec.fallback_expr_rate = history.back().fallback_expr_rate;
    rec.invalid_rate = history.back().invalid_rate;
    rec.final_total =
        joint_objective(rec.final_losses, cfg.weights, ObjectiveRole::Encoder);
  }
  return rec;
}

}  // namespace

int run_generate(const GenerateArgs& args) {
  return guarded([&] {
    FactorSpec spec;
    if (!args.spec_file.empty()) spec = factor_spec_from_kv(parse_kv_file(args.spec_file));
    if (args.seed) spec.seed = *args.seed;
    spec.validate();

    std::filesystem::create_directories(args.out_dir);
    auto dataset = generate_dataset(spec);
    const std::string base = dataset_base(args.out_dir);
    save_dataset(dataset, base);

    std::cout << "generated " << dataset.size() << " samples (" << spec.n_subjects
              << " subjects x " << spec.n_expressions << " expressions x " << spec.n_poses
              << " poses x " << spec.samples_per_cell << " per cell)\n";
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a_file(base + ".bin")));
    std::cout << "wrote " << base << ".json and " << base << ".bin (blob fnv1a " << hash
              << ")\n";
    return kExitOk;
  });
}

int run_train(const TrainArgs& args) {
  return guarded([&] {
    TrainConfig cfg;
    if (!args.config_file.empty()) cfg = train_config_from_kv(parse_kv_file(args.config_file));
    auto dataset = load_dataset(dataset_base(args.data_dir));
    auto split = split_for_run(dataset, args.subject, cfg.seed);

    auto result = train(cfg, split.source, split.target_train);
    auto rec = evaluate_run(result.bundle, result.history, cfg, split, args.subject);

    std::filesystem::create_directories(args.out_dir);
    const std::string ckpt = args.out_dir + "/checkpoint.upada";
    CheckpointMeta meta;
    meta.mode = mode_name(cfg.mode);
    meta.subject = args.subject;
    meta.seed = cfg.seed;
    meta.data_seed = dataset.spec().seed;
    save_checkpoint(ckpt, result.bundle, meta);

    const std::string metrics = args.out_dir + "/metrics.csv";
    write_metrics({rec}, metrics, dataset.spec().n_poses);
    write_run_manifest(args.out_dir + "/run_manifest.json", cfg, args.data_dir,
                       args.subject, {ckpt, metrics});

    std::cout << rec.run_id << ": target-test accuracy " << format_g9(rec.acc_overall)
              << " over " << split.target_test.size() << " samples\n";
    return kExitOk;
  });
}

int run_ablate(const AblateArgs& args) {
  return guarded([&] {
    TrainConfig base;
    if (!args.config_file.empty())
      base = train_config_from_kv(parse_kv_file(args.config_file));
    auto dataset = load_dataset(dataset_base(args.data_dir));

    GridSpec grid;
    grid.base = base;
    grid.jobs = args.jobs;
    if (args.modes.empty()) {
      grid.modes = {Mode::R, Mode::RAdv, Mode::RAdvCross, Mode::Full};
    } else {
      for (const auto& m : args.modes) grid.modes.push_back(mode_from_name(m));
    }
    grid.subjects = args.subjects;
    grid.seeds = args.seeds;
    if (grid.subjects.empty()) throw ConfigError("ablate: need at least one subject");
    if (grid.seeds.empty()) grid.seeds = {base.seed};

    auto records = run_ablation_grid(dataset, grid);

    std::filesystem::create_directories(args.out_dir);
    write_metrics(records, args.out_dir + "/metrics.csv", dataset.spec().n_poses);

    auto aggregates = aggregate_by_mode(records, dataset.spec().n_poses);
    std::ofstream agg(args.out_dir + "/aggregate.csv", std::ios::binary);
    agg << "mode,cells,acc_mean,acc_stddev";
    for (int p = 0; p < dataset.spec().n_poses; ++p) agg << ",acc_pose_" << p << "_mean";
    agg << "\n";
    for (const auto& a : aggregates) {
      agg << a.mode << "," << a.cells << "," << format_g9(a.acc_mean) << ","
          << format_g9(a.acc_stddev);
      for (double v : a.pose_mean) agg << "," << format_g9(v);
      agg << "\n";
    }
    agg.close();

    const std::string table = format_pose_table(aggregates);
    std::ofstream tf(args.out_dir + "/ablation_table.txt", std::ios::binary);
    tf << table;
    tf.close();
    std::cout << table;

    std::size_t ok = 0;
    for (const auto& r : records) {
      if (r.failed)
        std::cerr << r.run_id << " failed: " << r.error << "\n";
      else
        ++ok;
    }
    std::cout << ok << "/" << records.size() << " cells succeeded\n";
    return ok > 0 ? kExitOk : kExitRunFailure;
  });
}

namespace {

struct ReloadedRun {
  CheckpointMeta meta;  // filled while the bundle loads; must come first
  ModelBundle bundle;
  LosoSplit split;

  ReloadedRun(const std::string& checkpoint, const std::string& data_dir)
      : bundle(load_checkpoint(checkpoint, &meta)),
        split([&] {
          auto dataset = load_dataset(dataset_base(data_dir));
          if (dataset.spec().seed != meta.data_seed)
            throw ConfigError("checkpoint was trained on dataset seed " +
                              std::to_string(meta.data_seed) + ", not " +
                              std::to_string(dataset.spec().seed));
          return split_for_run(dataset, meta.subject, meta.seed);
        }()) {}
};

}  // namespace

int run_probe(const ProbeArgs& args) {
  return guarded([&] {
    ReloadedRun run(args.checkpoint, args.data_dir);

    std::vector<Sample> tgt;
    for (std::size_t i = 0; i < run.split.target_train.size(); ++i)
      tgt.push_back(run.split.target_train.sample(i));
    for (std::size_t i = 0; i < run.split.target_test.size(); ++i)
      tgt.push_back(run.split.target_test.sample(i));
    Dataset target_all(run.split.source.spec(), std::move(tgt));

    auto dom = domain_confusion_report(run.bundle, run.split.source, target_all,
                                       mix_seed(run.meta.seed, kTagProbeCmd));
    auto dis = disentanglement_report(run.bundle, run.split.source,
                                      mix_seed(run.meta.seed, kTagProbeCmd, 1ULL));

    std::filesystem::create_directories(args.out_dir);
    const std::string path = args.out_dir + "/probes.csv";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f << "kind,train_accuracy,test_accuracy,chance\n";
    for (const auto& p : {dom.on_expr, dom.on_pose, dis.pose_on_expr, dis.expr_on_pose}) {
      f << p.kind << "," << format_g9(p.train_accuracy) << "," << format_g9(p.test_accuracy)
        << "," << format_g9(p.chance) << "\n";
      std::cout << p.kind << ": test accuracy " << format_g9(p.test_accuracy)
                << " (chance " << format_g9(p.chance) << ")\n";
    }
    return kExitOk;
  });
}

int run_export(const ExportArgs& args) {
  return guarded([&] {
    ReloadedRun run(args.checkpoint, args.data_dir);
    std::filesystem::create_directories(args.out_dir);
    const std::string path = args.out_dir + "/embeddings.csv";
    export_embeddings(run.bundle,
                      {&run.split.source, &run.split.target_train, &run.split.target_test},
                      path);
    std::cout << "wrote " << path << "\n";
    return kExitOk;
  });
}

int run_gradcheck(const GradcheckArgs& args) {
  return guarded([&] {
    auto entries = upada::run_gradcheck(args.seed, args.corrupt);
    auto row = [&entries](const char* name) {
      for (const auto& e : entries)
        if (e.loss == name) return e.max_rel_err;
      throw UsageError(std::string("gradcheck: missing entry ") + name);
    };
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", row("l_p"));
    std::cout << "l_p      max_rel_err " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.3e", row("l_e"));
    std::cout << "l_e      max_rel_err " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.3e", row("l_adv_d"));
    std::cout << "l_adv    max_rel_err " << buf;
    std::snprintf(buf, sizeof(buf), "%.3e", row("l_adv_g"));
    std::cout << " (discriminator role), " << buf << " (encoder role)\n";
    std::snprintf(buf, sizeof(buf), "%.3e", row("l_cross"));
    std::cout << "l_cross  max_rel_err " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.3e", row("l_clc"));
    std::cout << "l_clc    max_rel_err " << buf << "\n";
    const bool ok = gradcheck_passed(entries);
    std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance 1e-04)\n";
    return ok ? kExitOk : kExitRunFailure;
  });
}

}  // namespace upada::cli
