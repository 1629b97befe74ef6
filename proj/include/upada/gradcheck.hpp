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

#include <functional>
#include <string>
#include <vector>

#include "upada/params.hpp"
#include "upada/tensor.hpp"

namespace upada {

// Worst relative disagreement between the tape's gradients and central
// finite differences, over every element of every parameter in `params`.
// The builder must rebuild the loss deterministically from current
// parameter values. The denominator is floored so that near-zero gradient
// pairs compare at an absolute tolerance instead of amplifying fd noise.
double max_rel_grad_err(const std::function<TensorPtr(Tape&)>& build_loss,
                        const ParamSet& params, double h = 1e-6,
                        double denom_floor = 1e-3);

struct GradCheckEntry {
  std::string loss;   // l_p, l_e, l_adv_d, l_adv_g, l_cross, l_clc
  double max_rel_err;
};

// Finite-difference sweep of all five training losses (both adversarial
// roles) on a tiny random bundle and batch. `corrupt` perturbs one analytic
// gradient before comparing, for exercising the failure path.
std::vector<GradCheckEntry> run_gradcheck(std::uint64_t seed, bool corrupt = false);

constexpr double kGradCheckTolerance = 1e-4;

bool gradcheck_passed(const std::vector<GradCheckEntry>& entries);

}  // namespace upada
