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

#include <map>
#include <string>

#include "upada/faces.hpp"
#include "upada/training.hpp"

namespace upada {

// Flat `key = value` configuration text: one pair per line, '#' comments,
// blank lines ignored. Unknown keys are rejected by the typed readers.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

FactorSpec factor_spec_from_kv(const std::map<std::string, std::string>& kv);
TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv);

// All fields materialized, defaults included; used for run manifests and for
// writing config files back out.
std::map<std::string, std::string> factor_spec_to_kv(const FactorSpec& spec);
std::map<std::string, std::string> train_config_to_kv(const TrainConfig& cfg);

std::uint64_t fnv1a_file(const std::string& path);  // FormatError if unreadable

}  // namespace upada
