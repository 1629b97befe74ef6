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

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "upada/evaluation.hpp"
#include "upada/faces.hpp"
#include "upada/losses.hpp"
#include "upada/model.hpp"
#include "upada/params.hpp"
#include "upada/rng.hpp"

namespace upada {

// Ablation modes, each enabling one more loss term.
enum class Mode { R, RAdv, RAdvCross, Full };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);
inline bool mode_has_adv(Mode m) { return m >= Mode::RAdv; }
inline bool mode_has_cross(Mode m) { return m >= Mode::RAdvCross; }
inline bool mode_has_recon(Mode m) { return m == Mode::Full; }

struct TrainConfig {
  LossWeights weights;
  int epochs = 60;
  int k1 = 1, k2 = 1, k3 = 1;  // inner steps per phase
  int batch_size = 32;
  OptimizerSettings optimizer;
  Mode mode = Mode::Full;
  std::uint64_t seed = 0;
  ConfusionMode confusion = ConfusionMode::Uniform;
  ReconNorm recon_norm = ReconNorm::L2;
  // In adversarial modes, E_t restarts from a copy of the current E_s at
  // this epoch boundary. A fresh random E_t fools the domain discriminators
  // by collapsing its outputs instead of aligning them; seeding it with the
  // source encoder gives the game (and the pseudo-label pairing) usable
  // features to adapt. 0 copies at the very start.
  int warmup_epochs = 0;
  // Learning rates for the encoder-side adaptation steps. Adam's normalized
  // steps cancel plain loss weights, so the games stay stable only if the
  // encoders move slower than the heads that score them; each alternating
  // objective keeps its own optimizer state.
  double adapt_lr = 1e-4;  // domain confusion and the encoder half of recon
  double cross_lr = 1e-3;  // cross-feature confusion
  // Architecture widths; image size and class counts come from the dataset.
  std::size_t trunk_hidden = 128, d_pose = 16, d_expr = 32, clf_hidden = 64,
              gen_hidden = 128;

  void validate() const;
  ArchConfig arch_for(const FactorSpec& spec) const;
};

struct EpochRecord {
  LossBreakdown losses;  // mean of the values observed during the epoch
  double fallback_expr_rate = 0.0;
  double invalid_rate = 0.0;
  int phase2_skipped = 0;
  bool operator==(const EpochRecord&) const = default;
};

// Everything one training run owns. Datasets are bound by pointer and are
// not part of the serialized state.
struct TrainState {
  TrainConfig cfg;
  ModelBundle bundle;
  Optimizer optimizer;        // supervised heads, discriminators, generators
  Optimizer adv_optimizer;    // encoder side of the domain game, cfg.adapt_lr
  Optimizer cross_optimizer;  // encoder side of the cross game, cfg.cross_lr
  Optimizer recon_optimizer;  // encoder half of reconstruction, cfg.adapt_lr
  int epoch = 0;
  Rng batch_rng;
  Rng pairing_rng;
  std::vector<EpochRecord> history;
  LabelIndex target_pseudo_index;  // rebuilt from the bundle each epoch
  const Dataset* source = nullptr;
  const Dataset* target_train = nullptr;

  TrainState(const TrainConfig& cfg, const ArchConfig& arch);
};

TrainState make_train_state(const TrainConfig& cfg, const Dataset& source);
void bind_data(TrainState& st, const Dataset& source, const Dataset& target_train);

SourceBatch sample_source_batch(const Dataset& source, int m, Rng& rng);
TargetBatch sample_target_batch(const Dataset& target, int m, Rng& rng);

// Pseudo-label index over the whole target-train split with the current
// bundle; called at the start of every epoch in full mode.
void refresh_pseudo_index(TrainState& st);

// Phase 1: (a) supervised step, l_p + alpha*l_e over E_s and R;
// (b) cross confusion, gamma*l_cross over E_s alone;
// (c) adversarial encoder step, beta*inverted-label loss over E_s and E_t.
// (b) and (c) run only in the modes that enable them; each sub-update is its
// own optimizer step, in this order.
struct Phase1Stats {
  double l_p = 0, l_e = 0;
  std::optional<double> l_cross, l_adv_g;
};
Phase1Stats phase1_step(TrainState& st, const SourceBatch& sb, const TargetBatch& tb);

// Phase 2 (full mode only): eta*reconstruction over encoders and generators,
// with fresh batch pseudo-labels and the epoch's pairing index. An
// all-invalid pairing skips the step and counts it.
struct Phase2Stats {
  std::optional<double> l_clc;
  bool skipped = false;
  std::size_t lookups = 0, expr_only_fallbacks = 0, invalid_pairs = 0;
};
Phase2Stats phase2_step(TrainState& st, const SourceBatch& sb, const TargetBatch& tb);

// Phase 3: D_p on l_p (source only); with adversarial modes additionally
// D_de and D_dp on the true-label domain loss. Encoders are untouched.
struct Phase3Stats {
  double l_p = 0;
  std::optional<double> l_adv_d;
};
Phase3Stats phase3_step(TrainState& st, const SourceBatch& sb, const TargetBatch& tb);

void run_epochs(TrainState& st, int n_epochs);

struct TrainResult {
  ModelBundle bundle;
  std::vector<EpochRecord> history;
};

// The full run: per epoch K1 phase-1 steps, K2 phase-2 steps, K3 phase-3
// steps. The returned bundle classifies target images through R over E_t's
// expression features; in mode R (no E_t training) E_t is a copy of the
// trained E_s, so the same classifier path serves every mode.
TrainResult train(const TrainConfig& cfg, const Dataset& source,
                  const Dataset& target_train);

// Resumable state file ("UPADAST1"): parameters, optimizer moments, rng
// engine states, epoch counter and history. Resuming at an epoch boundary
// reproduces the uninterrupted run bit-exactly.
void save_train_state(const TrainState& st, const std::string& path);
TrainState load_train_state(const std::string& path);

// LOSO split whose shuffle stream derives from the run seed, so one seed
// drives split, init and sampling together.
LosoSplit split_for_run(const Dataset& full, int subject, std::uint64_t run_seed);

struct GridSpec {
  TrainConfig base;
  std::vector<Mode> modes;
  std::vector<int> subjects;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
};

// Trains and evaluates every (mode, subject, seed) cell against the full
// dataset; cell failures are recorded and the grid continues.
std::vector<MetricsRecord> run_ablation_grid(const Dataset& full, const GridSpec& grid);

struct ModeAggregate {
  std::string mode;
  int cells = 0;
  double acc_mean = 0.0, acc_stddev = 0.0;
  std::vector<double> pose_mean;  // length P
};

std::vector<ModeAggregate> aggregate_by_mode(const std::vector<MetricsRecord>& records,
                                             int n_poses);

// Per-pose accuracy table, one row per mode, P pose columns plus Avg.
std::string format_pose_table(const std::vector<ModeAggregate>& aggregates);

}  // namespace upada
