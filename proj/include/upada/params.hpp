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
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "upada/tensor.hpp"

namespace upada {

// Named parameter tensors with deterministic (insertion) iteration order.
// Subsets share the underlying tensors, so stepping a subset updates the
// full set in place.
class ParamSet {
 public:
  void add(const std::string& name, TensorPtr t);
  const TensorPtr& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::size_t total_elements() const;

  // Parameters whose name starts with any of the given prefixes.
  ParamSet subset(const std::vector<std::string>& prefixes) const;

  // FNV-1a over names and raw value bytes of parameters matching the prefix
  // ("" checksums everything). Grad buffers are excluded.
  std::uint64_t checksum(std::string_view prefix = "") const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, TensorPtr> by_name_;
};

using GradMap = std::map<std::string, std::vector<double>>;

// Runs the reverse sweep and returns one gradient per parameter in `params`,
// in parameter-name keys. Parameters unreachable from the loss get zeros.
GradMap backward(Tape& tape, const TensorPtr& loss, const ParamSet& params);

struct OptimizerSettings {
  enum class Kind { Sgd, Adam };
  Kind kind = Kind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// SGD / Adam with per-parameter moment state (step counters included, since
// alternating updates step different parameters different numbers of times).
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings s) : settings_(s) {}

  // In-place descent on every parameter in `params`; a parameter without a
  // gradient entry is a usage error.
  void step(ParamSet& params, const GradMap& grads);

  const OptimizerSettings& settings() const { return settings_; }

  struct Moments {
    std::vector<double> m, v;
    std::uint64_t t = 0;
  };
  const std::map<std::string, Moments>& state() const { return state_; }
  std::map<std::string, Moments>& mutable_state() { return state_; }

 private:
  OptimizerSettings settings_;
  std::map<std::string, Moments> state_;
};

}  // namespace upada
