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

#include "upada/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "upada/errors.hpp"
#include "upada/evaluation.hpp"

namespace upada {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class KvReader {
 public:
  explicit KvReader(const std::map<std::string, std::string>& kv) : kv_(kv) {}

  template <typename F>
  void take(const std::string& key, F&& apply) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    apply(it->second);
    consumed_.insert(key);
  }

  void finish(const char* what) const {
    for (const auto& [key, value] : kv_)
      if (!consumed_.count(key))
        throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
  }

 private:
  const std::map<std::string, std::string>& kv_;
  std::set<std::string> consumed_;
};

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    if (out.count(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_kv_text(buf.str());
}

FactorSpec factor_spec_from_kv(const std::map<std::string, std::string>& kv) {
  FactorSpec s;
  KvReader r(kv);
  r.take("subjects", [&](const std::string& v) { s.n_subjects = to_int("subjects", v); });
  r.take("expressions", [&](const std::string& v) { s.n_expressions = to_int("expressions", v); });
  r.take("poses", [&](const std::string& v) { s.n_poses = to_int("poses", v); });
  r.take("image_side", [&](const std::string& v) { s.image_side = to_int("image_side", v); });
  r.take("samples_per_cell",
         [&](const std::string& v) { s.samples_per_cell = to_int("samples_per_cell", v); });
  r.take("noise_sigma", [&](const std::string& v) { s.noise_sigma = to_double("noise_sigma", v); });
  r.take("seed", [&](const std::string& v) { s.seed = to_u64("seed", v); });
  r.finish("factor spec");
  s.validate();
  return s;
}

TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  KvReader r(kv);
  r.take("alpha", [&](const std::string& v) { c.weights.alpha = to_double("alpha", v); });
  r.take("beta", [&](const std::string& v) { c.weights.beta = to_double("beta", v); });
  r.take("gamma", [&](const std::string& v) { c.weights.gamma = to_double("gamma", v); });
  r.take("eta", [&](const std::string& v) { c.weights.eta = to_double("eta", v); });
  r.take("epochs", [&](const std::string& v) { c.epochs = to_int("epochs", v); });
  r.take("k1", [&](const std::string& v) { c.k1 = to_int("k1", v); });
  r.take("k2", [&](const std::string& v) { c.k2 = to_int("k2", v); });
  r.take("k3", [&](const std::string& v) { c.k3 = to_int("k3", v); });
  r.take("batch_size", [&](const std::string& v) { c.batch_size = to_int("batch_size", v); });
  r.take("warmup_epochs",
         [&](const std::string& v) { c.warmup_epochs = to_int("warmup_epochs", v); });
  r.take("optimizer", [&](const std::string& v) {
    if (v == "adam") c.optimizer.kind = OptimizerSettings::Kind::Adam;
    else if (v == "sgd") c.optimizer.kind = OptimizerSettings::Kind::Sgd;
    else throw ConfigError("optimizer: expected adam or sgd, got '" + v + "'");
  });
  r.take("learning_rate",
         [&](const std::string& v) { c.optimizer.lr = to_double("learning_rate", v); });
  r.take("adapt_lr", [&](const std::string& v) { c.adapt_lr = to_double("adapt_lr", v); });
  r.take("cross_lr", [&](const std::string& v) { c.cross_lr = to_double("cross_lr", v); });
  r.take("adam_beta1",
         [&](const std::string& v) { c.optimizer.beta1 = to_double("adam_beta1", v); });
  r.take("adam_beta2",
         [&](const std::string& v) { c.optimizer.beta2 = to_double("adam_beta2", v); });
  r.take("adam_epsilon",
         [&](const std::string& v) { c.optimizer.epsilon = to_double("adam_epsilon", v); });
  r.take("mode", [&](const std::string& v) { c.mode = mode_from_name(v); });
  r.take("seed", [&](const std::string& v) { c.seed = to_u64("seed", v); });
  r.take("confusion", [&](const std::string& v) {
    if (v == "uniform") c.confusion = ConfusionMode::Uniform;
    else if (v == "ascent") c.confusion = ConfusionMode::Ascent;
    else throw ConfigError("confusion: expected uniform or ascent, got '" + v + "'");
  });
  r.take("recon_norm", [&](const std::string& v) {
    if (v == "l2") c.recon_norm = ReconNorm::L2;
    else if (v == "squared") c.recon_norm = ReconNorm::Squared;
    else throw ConfigError("recon_norm: expected l2 or squared, got '" + v + "'");
  });
  r.take("trunk_hidden",
         [&](const std::string& v) { c.trunk_hidden = to_int("trunk_hidden", v); });
  r.take("d_pose", [&](const std::string& v) { c.d_pose = to_int("d_pose", v); });
  r.take("d_expr", [&](const std::string& v) { c.d_expr = to_int("d_expr", v); });
  r.take("clf_hidden", [&](const std::string& v) { c.clf_hidden = to_int("clf_hidden", v); });
  r.take("gen_hidden", [&](const std::string& v) { c.gen_hidden = to_int("gen_hidden", v); });
  r.finish("train config");
  c.validate();
  return c;
}

std::map<std::string, std::string> factor_spec_to_kv(const FactorSpec& s) {
  return {{"subjects", std::to_string(s.n_subjects)},
          {"expressions", std::to_string(s.n_expressions)},
          {"poses", std::to_string(s.n_poses)},
          {"image_side", std::to_string(s.image_side)},
          {"samples_per_cell", std::to_string(s.samples_per_cell)},
          {"noise_sigma", format_g9(s.noise_sigma)},
          {"seed", std::to_string(s.seed)}};
}

std::map<std::string, std::string> train_config_to_kv(const TrainConfig& c) {
  return {{"alpha", format_g9(c.weights.alpha)},
          {"beta", format_g9(c.weights.beta)},
          {"gamma", format_g9(c.weights.gamma)},
          {"eta", format_g9(c.weights.eta)},
          {"epochs", std::to_string(c.epochs)},
          {"k1", std::to_string(c.k1)},
          {"k2", std::to_string(c.k2)},
          {"k3", std::to_string(c.k3)},
          {"batch_size", std::to_string(c.batch_size)},
          {"warmup_epochs", std::to_string(c.warmup_epochs)},
          {"optimizer", c.optimizer.kind == OptimizerSettings::Kind::Adam ? "adam" : "sgd"},
          {"learning_rate", format_g9(c.optimizer.lr)},
          {"adapt_lr", format_g9(c.adapt_lr)},
          {"cross_lr", format_g9(c.cross_lr)},
          {"adam_beta1", format_g9(c.optimizer.beta1)},
          {"adam_beta2", format_g9(c.optimizer.beta2)},
          {"adam_epsilon", format_g9(c.optimizer.epsilon)},
          {"mode", mode_name(c.mode)},
          {"seed", std::to_string(c.seed)},
          {"confusion", c.confusion == ConfusionMode::Uniform ? "uniform" : "ascent"},
          {"recon_norm", c.recon_norm == ReconNorm::L2 ? "l2" : "squared"},
          {"trunk_hidden", std::to_string(c.trunk_hidden)},
          {"d_pose", std::to_string(c.d_pose)},
          {"d_expr", std::to_string(c.d_expr)},
          {"clf_hidden", std::to_string(c.clf_hidden)},
          {"gen_hidden", std::to_string(c.gen_hidden)}};
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof(buf));
    const std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace upada
