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

namespace upada::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRunFailure = 1;  // experiment-level failure
inline constexpr int kExitBadInput = 2;    // config/format errors
inline constexpr int kExitNumeric = 3;     // NaN abort during training

struct GenerateArgs {
  std::string spec_file;  // optional; defaults apply when empty
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};
int run_generate(const GenerateArgs& args);

struct TrainArgs {
  std::string config_file;  // optional; defaults apply when empty
  std::string data_dir;
  int subject = 0;
  std::string out_dir;
};
int run_train(const TrainArgs& args);

struct AblateArgs {
  std::string config_file;
  std::string data_dir;
  std::vector<std::string> modes;  // empty -> all four
  std::vector<int> subjects;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  int jobs = 1;
};
int run_ablate(const AblateArgs& args);

struct ProbeArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string out_dir;
};
int run_probe(const ProbeArgs& args);

struct ExportArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string out_dir;
};
int run_export(const ExportArgs& args);

struct GradcheckArgs {
  std::uint64_t seed = 0;
  bool corrupt = false;  // test hook: injects a wrong gradient
};
int run_gradcheck(const GradcheckArgs& args);

}  // namespace upada::cli
