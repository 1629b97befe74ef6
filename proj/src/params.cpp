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

#include "upada/params.hpp"

#include <cmath>
#include <cstring>

#include "upada/errors.hpp"

namespace upada {

void ParamSet::add(const std::string& name, TensorPtr t) {
  if (by_name_.count(name)) throw UsageError("duplicate parameter name: " + name);
  order_.push_back(name);
  by_name_.emplace(name, std::move(t));
}

const TensorPtr& ParamSet::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw UsageError("unknown parameter: " + name);
  return it->second;
}

bool ParamSet::contains(const std::string& name) const {
  return by_name_.count(name) != 0;
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& name : order_) n += by_name_.at(name)->size();
  return n;
}

ParamSet ParamSet::subset(const std::vector<std::string>& prefixes) const {
  ParamSet out;
  for (const auto& name : order_) {
    for (const auto& p : prefixes) {
      if (name.rfind(p, 0) == 0) {
        out.add(name, by_name_.at(name));
        break;
      }
    }
  }
  return out;
}

std::uint64_t ParamSet::checksum(std::string_view prefix) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& name : order_) {
    if (name.rfind(prefix, 0) != 0) continue;
    feed(name.data(), name.size());
    const auto& t = by_name_.at(name);
    feed(t->data.data(), t->data.size() * sizeof(double));
  }
  return h;
}

GradMap backward(Tape& tape, const TensorPtr& loss, const ParamSet& params) {
  // Stale gradients on parameters outside the recorded graph must not leak
  // into the result.
  for (const auto& name : params.names()) {
    auto& g = params.at(name)->grad;
    std::fill(g.begin(), g.end(), 0.0);
  }
  tape.backward(loss);
  GradMap out;
  for (const auto& name : params.names()) out.emplace(name, params.at(name)->grad);
  return out;
}

void Optimizer::step(ParamSet& params, const GradMap& grads) {
  const auto& s = settings_;
  for (const auto& name : params.names()) {
    auto it = grads.find(name);
    if (it == grads.end())
      throw UsageError("optimizer step: missing gradient for parameter " + name);
    auto& t = *params.at(name);
    const auto& g = it->second;
    if (g.size() != t.size())
      throw DimensionError("optimizer step: gradient size mismatch for " + name);
    if (s.kind == OptimizerSettings::Kind::Sgd) {
      for (std::size_t i = 0; i < t.size(); ++i) t.data[i] -= s.lr * g[i];
      continue;
    }
    auto& mom = state_[name];
    if (mom.m.empty()) {
      mom.m.assign(t.size(), 0.0);
      mom.v.assign(t.size(), 0.0);
    }
    mom.t += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(mom.t));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(mom.t));
    for (std::size_t i = 0; i < t.size(); ++i) {
      mom.m[i] = s.beta1 * mom.m[i] + (1.0 - s.beta1) * g[i];
      mom.v[i] = s.beta2 * mom.v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      t.data[i] -= s.lr * mhat / (std::sqrt(vhat) + s.epsilon);
    }
  }
}

}  // namespace upada
