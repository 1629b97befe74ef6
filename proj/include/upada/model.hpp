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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "upada/params.hpp"
#include "upada/tensor.hpp"

namespace upada {

struct ArchConfig {
  std::size_t image_pixels = 24 * 24;
  std::size_t trunk_hidden = 128;
  std::size_t d_pose = 16;
  std::size_t d_expr = 32;
  std::size_t clf_hidden = 64;
  std::size_t gen_hidden = 128;
  std::size_t n_expressions = 6;
  std::size_t n_poses = 5;

  // The expression classifier and the pose classifier are also applied to
  // each other's features (cross confusion), so both take the wider of the
  // two feature widths; narrower features ride in zero-padded.
  std::size_t head_width() const { return std::max(d_pose, d_expr); }

  bool operator==(const ArchConfig&) const = default;
};

struct FeaturePair {
  TensorPtr pose;  // m x d_pose
  TensorPtr expr;  // m x d_expr
};

struct PseudoLabels {
  std::vector<int> expression;
  std::vector<int> pose;
};

// The eight trainable components: two encoders (E_s, E_t), pose classifier
// D_p, expression classifier R, two domain discriminators (D_de on
// expression features, D_dp on pose features) and two generators (G_s, G_t).
// All parameters live in one ParamSet under disjoint component prefixes.
class ModelBundle {
 public:
  static const std::array<std::string, 8> kComponents;

  ModelBundle(const ArchConfig& arch, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Shared trunk then the two feature heads. encoder is "E_s" or "E_t".
  FeaturePair encode(Tape& tape, const std::string& encoder, const TensorPtr& images) const;

  // Classifier heads; features narrower than head_width() are zero-padded,
  // wider ones are a dimension error.
  TensorPtr expr_logits(Tape& tape, const TensorPtr& features) const;   // R
  TensorPtr pose_logits(Tape& tape, const TensorPtr& features) const;   // D_p

  TensorPtr domain_logits_expr(Tape& tape, const TensorPtr& f_expr) const;  // D_de
  TensorPtr domain_logits_pose(Tape& tape, const TensorPtr& f_pose) const;  // D_dp

  // generator is "G_s" or "G_t"; inputs are concat(f_pose, f_expr); sigmoid
  // output keeps pixels strictly inside (0, 1).
  TensorPtr generate(Tape& tape, const std::string& generator, const TensorPtr& f_pose,
                     const TensorPtr& f_expr) const;

  // Argmax class predictions of R and D_p over the target encoder's
  // features; ties break toward the lowest class id.
  PseudoLabels pseudo_label(const TensorPtr& target_images) const;

  std::uint64_t component_checksum(const std::string& component) const;
  // Overwrites `to`'s parameters with `from`'s (same architecture assumed).
  void copy_component(const std::string& from, const std::string& to);

 private:
  TensorPtr dense(Tape& tape, const std::string& prefix, const TensorPtr& x) const;
  TensorPtr classifier_head(Tape& tape, const std::string& prefix,
                            const TensorPtr& features) const;

  ArchConfig arch_;
  ParamSet params_;
};

// Checkpoint file: magic "UPADA001", u64 little-endian JSON header length,
// JSON header (arch, run metadata, component and tensor tables with shapes
// and blob offsets), then raw little-endian f64 blobs in header order.
// Round-trips are bit-exact.
struct CheckpointMeta {
  std::string mode;     // ablation mode the checkpoint was trained with
  int subject = -1;     // held-out subject
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;  // factor-spec seed of the training dataset
};

void save_checkpoint(const std::string& path, const ModelBundle& bundle,
                     const CheckpointMeta& meta);
ModelBundle load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace upada
