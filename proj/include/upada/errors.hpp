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

#include <stdexcept>
#include <string>

namespace upada {

// Incompatible tensor shapes (matmul inner dims, concat rows, head widths).
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: out-of-range labels, non-scalar loss, missing gradients, ...
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration file or flag value. Maps to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed dataset/checkpoint file. Maps to exit code 2.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf surfaced during training. Maps to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace upada
