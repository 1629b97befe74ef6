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

#include <vector>

#include "upada/faces.hpp"
#include "upada/model.hpp"
#include "upada/tensor.hpp"

namespace upada {

struct LossWeights {
  double alpha = 1.0;  // expression term
  double beta = 0.5;   // adversarial domain term
  double gamma = 0.1;  // cross confusion term
  double eta = 0.5;    // reconstruction term
  void validate() const;  // ConfigError on negative weights
};

struct LossBreakdown {
  double l_p = 0.0;      // pose classification
  double l_e = 0.0;      // expression classification
  double l_adv_d = 0.0;  // domain discriminators, true labels
  double l_adv_g = 0.0;  // encoders, inverted labels
  double l_cross = 0.0;  // cross confusion
  double l_clc = 0.0;    // cross-domain reconstruction
};

enum class ObjectiveRole { Encoder, Discriminator };

// Weighted composition of the breakdown. Encoder role:
// l_p + alpha*l_e + eta*l_clc + beta*l_adv_g + gamma*l_cross.
// Discriminator role: l_adv_d + l_p. Every role is minimized; the minmax
// game is realized by alternating role-specific updates.
double joint_objective(const LossBreakdown& b, const LossWeights& w, ObjectiveRole role);

struct SourceBatch {
  TensorPtr images;             // m x H*W
  std::vector<int> expression;  // length m
  std::vector<int> pose;        // length m
  std::size_t size() const { return images ? images->n_rows : 0; }
};

struct TargetBatch {
  TensorPtr images;                    // m x H*W, no labels
  std::vector<std::size_t> positions;  // within the target-train dataset
  std::size_t size() const { return images ? images->n_rows : 0; }
};

// Supervised heads over source features.
TensorPtr loss_pose(Tape& tape, const ModelBundle& bundle, const SourceBatch& batch);
TensorPtr loss_expr(Tape& tape, const ModelBundle& bundle, const SourceBatch& batch);

// Domain game. The discriminator side scores true domain labels
// (source -> 1, target -> 0) on both feature kinds; the encoder side is the
// same expression with inverted labels, and its gradients are only ever
// applied to E_s/E_t.
TensorPtr loss_adv_discriminator(Tape& tape, const ModelBundle& bundle,
                                 const SourceBatch& sb, const TargetBatch& tb);
TensorPtr loss_adv_encoder(Tape& tape, const ModelBundle& bundle, const SourceBatch& sb,
                           const TargetBatch& tb);

// Cross confusion on source features: push R(f_pose) and D_p(f_expr) toward
// uniform predictions (minimum ln E + ln P). Ascent mode instead climbs the
// true-label cross entropies, mirroring a plain inverted-gradient update.
enum class ConfusionMode { Uniform, Ascent };
TensorPtr loss_cross(Tape& tape, const ModelBundle& bundle, const SourceBatch& batch,
                     ConfusionMode mode = ConfusionMode::Uniform);

// Adversary side of the cross game: teach R to read expression out of pose
// features and D_p to read pose out of expression features (true labels,
// heads only). Without this chase, the encoder can silence the fixed heads
// through dead units while the information stays linearly readable.
TensorPtr loss_cross_heads(Tape& tape, const ModelBundle& bundle, const SourceBatch& batch);

// Reconstruction pairing: for batch row i, the source-like target shares the
// source pose and the target's pseudo expression; the target-like target is
// drawn from the pseudo-label index with the target's pseudo pose and the
// source expression. Empty buckets fall back to an expression-only match and
// finally mark the pair invalid.
struct ReconTargets {
  TensorPtr source_like;  // m x H*W
  TensorPtr target_like;  // m x H*W
  std::vector<unsigned char> valid;
  std::size_t expr_only_fallbacks = 0;  // lookups resolved by fallback (a)
  std::size_t invalid_pairs = 0;
};

ReconTargets sample_recon_targets(const SourceBatch& sb, const TargetBatch& tb,
                                  const PseudoLabels& pseudo, const Dataset& source,
                                  const LabelIndex& target_pseudo_index,
                                  const Dataset& target_train, Rng& rng);

enum class ReconNorm { L2, Squared };

// Mean over valid pairs of |G_s(f_s^p, f_t^e) - x_s^j| + |G_t(f_t^p, f_s^e) - x_t^k|
// (per-sample Euclidean norms). All-invalid masks yield 0 and set the flag.
TensorPtr loss_recon(Tape& tape, const ModelBundle& bundle, const SourceBatch& sb,
                     const TargetBatch& tb, const ReconTargets& targets,
                     ReconNorm norm = ReconNorm::L2, bool* all_invalid = nullptr);

}  // namespace upada
