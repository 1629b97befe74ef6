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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "upada/rng.hpp"
#include "upada/tensor.hpp"

namespace upada {

// Procedural face-like image generator with independent ground-truth
// subject, expression and pose factors.
struct FactorSpec {
  int n_subjects = 10;
  int n_expressions = 6;
  int n_poses = 5;          // pan classes, shear angles evenly spaced in [-30, +30] deg
  int image_side = 24;      // H = W
  int samples_per_cell = 6; // per (subject, expression, pose)
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;

  int pixels() const { return image_side * image_side; }
  int total_samples() const {
    return n_subjects * n_expressions * n_poses * samples_per_cell;
  }
  void validate() const;  // ConfigError on violation
  bool operator==(const FactorSpec&) const = default;
};

enum class Domain { Source, Target };

std::string domain_name(Domain d);
Domain domain_from_name(const std::string& s);

// Pixels are stored as 32-bit floats so that in-memory images round-trip the
// on-disk blob bit-exactly.
struct Sample {
  std::vector<float> image;  // H*W, row-major, values in [0, 1]
  int expression = 0;
  int pose = 0;
  int subject = 0;
  Domain domain = Domain::Source;
  std::uint64_t noise_seed = 0;
};

// (pose, expression) -> sample positions, with an expression-only side index
// for pairing fallbacks.
class LabelIndex {
 public:
  LabelIndex() = default;
  LabelIndex(int n_poses, int n_expressions, const std::vector<int>& poses,
             const std::vector<int>& expressions);

  std::optional<std::size_t> lookup(int pose, int expression, Rng& rng) const;
  std::optional<std::size_t> lookup_expression_only(int expression, Rng& rng) const;
  std::size_t bucket_size(int pose, int expression) const;
  std::size_t total() const { return total_; }

 private:
  int n_poses_ = 0, n_expressions_ = 0;
  std::size_t total_ = 0;
  std::vector<std::vector<std::size_t>> buckets_;       // pose * E + expr
  std::vector<std::vector<std::size_t>> expr_buckets_;  // expr
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(FactorSpec spec, std::vector<Sample> samples, bool hide_expression = false);

  const FactorSpec& spec() const { return spec_; }
  std::size_t size() const { return samples_.size(); }
  const Sample& sample(std::size_t i) const { return samples_.at(i); }
  int pose_of(std::size_t i) const { return samples_.at(i).pose; }
  int subject_of(std::size_t i) const { return samples_.at(i).subject; }
  Domain domain_of(std::size_t i) const { return samples_.at(i).domain; }

  // Expression label through the training interface; unavailable on
  // label-hidden splits (target train).
  int expression_of(std::size_t i) const;
  // Ground-truth expression for probes and scoring only.
  int oracle_expression(std::size_t i) const { return samples_.at(i).expression; }
  bool expression_hidden() const { return hide_expression_; }

  // Uniformly random member of the (pose, expression) bucket, or nullopt
  // when the bucket is empty. Uses ground-truth labels; pairing over
  // pseudo-labels builds its own LabelIndex instead.
  std::optional<std::size_t> lookup_by_labels(int pose, int expression, Rng& rng) const;
  const LabelIndex& label_index() const { return index_; }

  // Batch of images as an m x H*W tensor (no grad).
  TensorPtr images_tensor(const std::vector<std::size_t>& positions) const;

  bool operator==(const Dataset& other) const;

 private:
  FactorSpec spec_;
  std::vector<Sample> samples_;
  bool hide_expression_ = false;
  LabelIndex index_;
};

// One image as a pure function of (spec, subject, expression, pose,
// noise_seed): clamp01(subject field + oval mask + pose-sheared expression
// glyph + Gaussian noise).
std::vector<float> render_sample(const FactorSpec& spec, int subject, int expression,
                                 int pose, std::uint64_t noise_seed);

Dataset generate_dataset(const FactorSpec& spec);

struct LosoSplit {
  Dataset source;        // all other subjects, labels visible
  Dataset target_train;  // 2/3 of held-out subject, expression labels hidden
  Dataset target_test;   // 1/3 of held-out subject, labels kept for scoring
};

LosoSplit split_loso(const Dataset& dataset, int held_out_subject, std::uint64_t seed);

// Persistence: <base>.json manifest + <base>.bin pixel blob
// (magic "FFACES01", then H*W little-endian f32 per sample in manifest order).
void save_dataset(const Dataset& dataset, const std::string& basepath);
Dataset load_dataset(const std::string& basepath);

}  // namespace upada
