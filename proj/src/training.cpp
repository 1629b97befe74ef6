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

#include "upada/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "upada/errors.hpp"

namespace upada {

namespace {

constexpr std::uint64_t kTagInit = 0x42554e44;   // "BUND"
constexpr std::uint64_t kTagBatch = 0x42415443;  // "BATC"
constexpr std::uint64_t kTagPair = 0x50414952;   // "PAIR"
constexpr std::uint64_t kTagSplit = 0x53504c54;  // "SPLT"
constexpr std::uint64_t kTagProbe = 0x50524f42;  // "PROB"

constexpr char kStateMagic[8] = {'U', 'P', 'A', 'D', 'A', 'S', 'T', '1'};

double checked(const TensorPtr& loss, const char* name, int epoch, int step) {
  const double v = loss->value();
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + name + " at epoch " +
                       std::to_string(epoch) + " step " + std::to_string(step));
  return v;
}

struct MeanAcc {
  double sum = 0.0;
  int n = 0;
  void add(double v) { sum += v; ++n; }
  double mean() const { return n ? sum / n : 0.0; }
};

}  // namespace

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::R: return "R";
    case Mode::RAdv: return "R+adv";
    case Mode::RAdvCross: return "R+adv+cross";
    case Mode::Full: return "full";
  }
  throw UsageError("mode_name: bad mode");
}

Mode mode_from_name(const std::string& s) {
  if (s == "R") return Mode::R;
  if (s == "R+adv") return Mode::RAdv;
  if (s == "R+adv+cross") return Mode::RAdvCross;
  if (s == "full") return Mode::Full;
  throw ConfigError("mode: expected R, R+adv, R+adv+cross or full, got '" + s + "'");
}

void TrainConfig::validate() const {
  weights.validate();
  if (epochs < 1 || k1 < 1 || k2 < 1 || k3 < 1)
    throw ConfigError("epochs and inner step counts must be >= 1");
  if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (optimizer.lr <= 0) throw ConfigError("learning_rate must be > 0");
  if (adapt_lr <= 0 || cross_lr <= 0)
    throw ConfigError("adapt_lr and cross_lr must be > 0");
  if (trunk_hidden < 1 || d_pose < 1 || d_expr < 1 || clf_hidden < 1 || gen_hidden < 1)
    throw ConfigError("architecture widths must be >= 1");
}

ArchConfig TrainConfig::arch_for(const FactorSpec& spec) const {
  ArchConfig a;
  a.image_pixels = static_cast<std::size_t>(spec.pixels());
  a.n_expressions = static_cast<std::size_t>(spec.n_expressions);
  a.n_poses = static_cast<std::size_t>(spec.n_poses);
  a.trunk_hidden = trunk_hidden;
  a.d_pose = d_pose;
  a.d_expr = d_expr;
  a.clf_hidden = clf_hidden;
  a.gen_hidden = gen_hidden;
  return a;
}

namespace {

OptimizerSettings with_lr(const OptimizerSettings& base, double lr) {
  OptimizerSettings s = base;
  s.lr = lr;
  return s;
}

}  // namespace

TrainState::TrainState(const TrainConfig& c, const ArchConfig& arch)
    : cfg(c),
      bundle(arch, mix_seed(c.seed, kTagInit)),
      optimizer(c.optimizer),
      adv_optimizer(with_lr(c.optimizer, c.adapt_lr)),
      cross_optimizer(with_lr(c.optimizer, c.cross_lr)),
      recon_optimizer(with_lr(c.optimizer, c.adapt_lr)),
      batch_rng(mix_seed(c.seed, kTagBatch)),
      pairing_rng(mix_seed(c.seed, kTagPair)) {}

TrainState make_train_state(const TrainConfig& cfg, const Dataset& source) {
  cfg.validate();
  return TrainState(cfg, cfg.arch_for(source.spec()));
}

void bind_data(TrainState& st, const Dataset& source, const Dataset& target_train) {
  if (!target_train.expression_hidden())
    throw UsageError("train: target-train split must hide expression labels");
  st.source = &source;
  st.target_train = &target_train;
}

SourceBatch sample_source_batch(const Dataset& source, int m, Rng& rng) {
  std::vector<std::size_t> pos(m);
  for (auto& p : pos) p = rng.uniform_index(source.size());
  SourceBatch b;
  b.images = source.images_tensor(pos);
  b.expression.resize(m);
  b.pose.resize(m);
  for (int i = 0; i < m; ++i) {
    b.expression[i] = source.expression_of(pos[i]);
    b.pose[i] = source.pose_of(pos[i]);
  }
  return b;
}

TargetBatch sample_target_batch(const Dataset& target, int m, Rng& rng) {
  TargetBatch b;
  b.positions.resize(m);
  for (auto& p : b.positions) p = rng.uniform_index(target.size());
  b.images = target.images_tensor(b.positions);
  return b;
}

void refresh_pseudo_index(TrainState& st) {
  const auto& tt = *st.target_train;
  std::vector<std::size_t> all(tt.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto pseudo = st.bundle.pseudo_label(tt.images_tensor(all));
  st.target_pseudo_index =
      LabelIndex(static_cast<int>(st.bundle.arch().n_poses),
                 static_cast<int>(st.bundle.arch().n_expressions), pseudo.pose,
                 pseudo.expression);
}

namespace {

// Warm-up epochs run the supervised schedule only; the adversarial, cross
// and reconstruction updates engage once E_t has been seeded from E_s.
bool past_warmup(const TrainState& st) { return st.epoch >= st.cfg.warmup_epochs; }

}  // namespace

Phase1Stats phase1_step(TrainState& st, const SourceBatch& sb, const TargetBatch& tb) {
  Phase1Stats stats;
  // (a) supervised: l_p + alpha*l_e, stepping E_s and R (D_p stays frozen).
  {
    Tape tape;
    auto lp = loss_pose(tape, st.bundle, sb);
    auto le = loss_expr(tape, st.bundle, sb);
    stats.l_p = checked(lp, "l_p", st.epoch, 1);
    stats.l_e = checked(le, "l_e", st.epoch, 1);
    auto total = tape.add(lp, tape.scale(le, st.cfg.weights.alpha));
    auto sub = st.bundle.params().subset({"E_s.", "R."});
    st.optimizer.step(sub, backward(tape, total, sub));
  }
  // (b) cross confusion, E_s only.
  if (mode_has_cross(st.cfg.mode) && past_warmup(st)) {
    Tape tape;
    auto lc = loss_cross(tape, st.bundle, sb, st.cfg.confusion);
    stats.l_cross = checked(lc, "l_cross", st.epoch, 1);
    auto total = tape.scale(lc, st.cfg.weights.gamma);
    auto sub = st.bundle.params().subset({"E_s."});
    st.cross_optimizer.step(sub, backward(tape, total, sub));
  }
  // (c) domain confusion, encoders only.
  if (mode_has_adv(st.cfg.mode) && past_warmup(st)) {
    Tape tape;
    auto la = loss_adv_encoder(tape, st.bundle, sb, tb);
    stats.l_adv_g = checked(la, "l_adv_g", st.epoch, 1);
    auto total = tape.scale(la, st.cfg.weights.beta);
    auto sub = st.bundle.params().subset({"E_s.", "E_t."});
    st.adv_optimizer.step(sub, backward(tape, total, sub));
  }
  return stats;
}

Phase2Stats phase2_step(TrainState& st, const SourceBatch& sb, const TargetBatch& tb) {
  Phase2Stats stats;
  if (!mode_has_recon(st.cfg.mode) || !past_warmup(st)) return stats;

  const auto pseudo = st.bundle.pseudo_label(tb.images);
  auto targets = sample_recon_targets(sb, tb, pseudo, *st.source, st.target_pseudo_index,
                                      *st.target_train, st.pairing_rng);
  stats.lookups = 2 * sb.size();
  stats.expr_only_fallbacks = targets.expr_only_fallbacks;
  stats.invalid_pairs = targets.invalid_pairs;

  Tape tape;
  bool all_invalid = false;
  auto lc = loss_recon(tape, st.bundle, sb, tb, targets, st.cfg.recon_norm, &all_invalid);
  if (all_invalid) {
    stats.skipped = true;
    return stats;
  }
  stats.l_clc = checked(lc, "l_clc", st.epoch, 1);
  auto total = tape.scale(lc, st.cfg.weights.eta);
  auto sub = st.bundle.params().subset({"E_s.", "E_t.", "G_s.", "G_t."});
  auto grads = backward(tape, total, sub);
  auto gens = st.bundle.params().subset({"G_s.", "G_t."});
  auto encs = st.bundle.params().subset({"E_s.", "E_t."});
  st.optimizer.step(gens, grads);
  st.recon_optimizer.step(encs, grads);
  return stats;
}

Phase3Stats phase3_step(TrainState& st, const SourceBatch& sb, const TargetBatch& tb) {
  Phase3Stats stats;
  {
    Tape tape;
    auto lp = loss_pose(tape, st.bundle, sb);
    stats.l_p = checked(lp, "l_p", st.epoch, 3);
    auto sub = st.bundle.params().subset({"D_p."});
    st.optimizer.step(sub, backward(tape, lp, sub));
  }
  if (mode_has_adv(st.cfg.mode) && past_warmup(st)) {
    Tape tape;
    auto la = loss_adv_discriminator(tape, st.bundle, sb, tb);
    stats.l_adv_d = checked(la, "l_adv_d", st.epoch, 3);
    auto sub = st.bundle.params().subset({"D_de.", "D_dp."});
    st.optimizer.step(sub, backward(tape, la, sub));
  }
  if (mode_has_cross(st.cfg.mode) && past_warmup(st)) {
    Tape tape;
    auto lh = loss_cross_heads(tape, st.bundle, sb);
    checked(lh, "l_cross_heads", st.epoch, 3);
    auto sub = st.bundle.params().subset({"R.", "D_p."});
    st.optimizer.step(sub, backward(tape, lh, sub));
  }
  return stats;
}

void run_epochs(TrainState& st, int n_epochs) {
  if (!st.source || !st.target_train) throw UsageError("run_epochs: data not bound");
  const int m = st.cfg.batch_size;
  for (int e = 0; e < n_epochs; ++e) {
    // Past warm-up, E_t re-anchors to E_s at each epoch boundary and the
    // within-epoch adaptation steps adjust it from there; a free-running E_t
    // trained only by the game loses the class structure entirely.
    if (mode_has_adv(st.cfg.mode) && st.epoch >= st.cfg.warmup_epochs)
      st.bundle.copy_component("E_s", "E_t");
    if (mode_has_recon(st.cfg.mode) && past_warmup(st)) refresh_pseudo_index(st);

    MeanAcc mp, me, madvd, madvg, mcross, mclc;
    std::size_t lookups = 0, fallbacks = 0, invalid = 0, pairs = 0;
    EpochRecord rec;

    for (int k = 0; k < st.cfg.k1; ++k) {
      auto sb = sample_source_batch(*st.source, m, st.batch_rng);
      auto tb = sample_target_batch(*st.target_train, m, st.batch_rng);
      auto s = phase1_step(st, sb, tb);
      mp.add(s.l_p);
      me.add(s.l_e);
      if (s.l_cross) mcross.add(*s.l_cross);
      if (s.l_adv_g) madvg.add(*s.l_adv_g);
    }
    for (int k = 0; k < st.cfg.k2; ++k) {
      auto sb = sample_source_batch(*st.source, m, st.batch_rng);
      auto tb = sample_target_batch(*st.target_train, m, st.batch_rng);
      auto s = phase2_step(st, sb, tb);
      if (s.l_clc) mclc.add(*s.l_clc);
      if (s.skipped) ++rec.phase2_skipped;
      lookups += s.lookups;
      fallbacks += s.expr_only_fallbacks;
      invalid += s.invalid_pairs;
      pairs += sb.size();
    }
    for (int k = 0; k < st.cfg.k3; ++k) {
      auto sb = sample_source_batch(*st.source, m, st.batch_rng);
      auto tb = sample_target_batch(*st.target_train, m, st.batch_rng);
      auto s = phase3_step(st, sb, tb);
      mp.add(s.l_p);
      if (s.l_adv_d) madvd.add(*s.l_adv_d);
    }

    rec.losses.l_p = mp.mean();
    rec.losses.l_e = me.mean();
    rec.losses.l_adv_d = madvd.mean();
    rec.losses.l_adv_g = madvg.mean();
    rec.losses.l_cross = mcross.mean();
    rec.losses.l_clc = mclc.mean();
    rec.fallback_expr_rate = lookups ? static_cast<double>(fallbacks) / lookups : 0.0;
    rec.invalid_rate = pairs ? static_cast<double>(invalid) / pairs : 0.0;
    st.history.push_back(rec);
    ++st.epoch;
  }
}

TrainResult train(const TrainConfig& cfg, const Dataset& source,
                  const Dataset& target_train) {
  auto st = make_train_state(cfg, source);
  bind_data(st, source, target_train);
  run_epochs(st, cfg.epochs);
  if (cfg.mode == Mode::R) {
    // The baseline never trains E_t; the shared classifier path R(E_t(x))
    // then means applying the source model directly to the target.
    st.bundle.copy_component("E_s", "E_t");
  }
  return TrainResult{std::move(st.bundle), std::move(st.history)};
}

// ---------------------------------------------------------------------------
// state serialization

namespace {

void write_u64_le(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

std::uint64_t read_u64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  return {{"alpha", c.weights.alpha},
          {"beta", c.weights.beta},
          {"gamma", c.weights.gamma},
          {"eta", c.weights.eta},
          {"epochs", c.epochs},
          {"k1", c.k1},
          {"k2", c.k2},
          {"k3", c.k3},
          {"batch_size", c.batch_size},
          {"warmup_epochs", c.warmup_epochs},
          {"optimizer", c.optimizer.kind == OptimizerSettings::Kind::Adam ? "adam" : "sgd"},
          {"learning_rate", c.optimizer.lr},
          {"adapt_lr", c.adapt_lr},
          {"cross_lr", c.cross_lr},
          {"adam_beta1", c.optimizer.beta1},
          {"adam_beta2", c.optimizer.beta2},
          {"adam_epsilon", c.optimizer.epsilon},
          {"mode", mode_name(c.mode)},
          {"seed", c.seed},
          {"confusion", c.confusion == ConfusionMode::Uniform ? "uniform" : "ascent"},
          {"recon_norm", c.recon_norm == ReconNorm::L2 ? "l2" : "squared"},
          {"trunk_hidden", c.trunk_hidden},
          {"d_pose", c.d_pose},
          {"d_expr", c.d_expr},
          {"clf_hidden", c.clf_hidden},
          {"gen_hidden", c.gen_hidden}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.weights.alpha = j.at("alpha").get<double>();
  c.weights.beta = j.at("beta").get<double>();
  c.weights.gamma = j.at("gamma").get<double>();
  c.weights.eta = j.at("eta").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.k1 = j.at("k1").get<int>();
  c.k2 = j.at("k2").get<int>();
  c.k3 = j.at("k3").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.warmup_epochs = j.at("warmup_epochs").get<int>();
  c.optimizer.kind = j.at("optimizer").get<std::string>() == "sgd"
                         ? OptimizerSettings::Kind::Sgd
                         : OptimizerSettings::Kind::Adam;
  c.optimizer.lr = j.at("learning_rate").get<double>();
  c.adapt_lr = j.at("adapt_lr").get<double>();
  c.cross_lr = j.at("cross_lr").get<double>();
  c.optimizer.beta1 = j.at("adam_beta1").get<double>();
  c.optimizer.beta2 = j.at("adam_beta2").get<double>();
  c.optimizer.epsilon = j.at("adam_epsilon").get<double>();
  c.mode = mode_from_name(j.at("mode").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.confusion = j.at("confusion").get<std::string>() == "ascent" ? ConfusionMode::Ascent
                                                                 : ConfusionMode::Uniform;
  c.recon_norm = j.at("recon_norm").get<std::string>() == "squared" ? ReconNorm::Squared
                                                                    : ReconNorm::L2;
  c.trunk_hidden = j.at("trunk_hidden").get<std::size_t>();
  c.d_pose = j.at("d_pose").get<std::size_t>();
  c.d_expr = j.at("d_expr").get<std::size_t>();
  c.clf_hidden = j.at("clf_hidden").get<std::size_t>();
  c.gen_hidden = j.at("gen_hidden").get<std::size_t>();
  return c;
}

nlohmann::ordered_json record_to_json(const EpochRecord& r) {
  return {{"l_p", r.losses.l_p},
          {"l_e", r.losses.l_e},
          {"l_adv_d", r.losses.l_adv_d},
          {"l_adv_g", r.losses.l_adv_g},
          {"l_cross", r.losses.l_cross},
          {"l_clc", r.losses.l_clc},
          {"fallback_expr_rate", r.fallback_expr_rate},
          {"invalid_rate", r.invalid_rate},
          {"phase2_skipped", r.phase2_skipped}};
}

EpochRecord record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.losses.l_p = j.at("l_p").get<double>();
  r.losses.l_e = j.at("l_e").get<double>();
  r.losses.l_adv_d = j.at("l_adv_d").get<double>();
  r.losses.l_adv_g = j.at("l_adv_g").get<double>();
  r.losses.l_cross = j.at("l_cross").get<double>();
  r.losses.l_clc = j.at("l_clc").get<double>();
  r.fallback_expr_rate = j.at("fallback_expr_rate").get<double>();
  r.invalid_rate = j.at("invalid_rate").get<double>();
  r.phase2_skipped = j.at("phase2_skipped").get<int>();
  return r;
}

nlohmann::ordered_json arch_to_json_state(const ArchConfig& a) {
  return {{"image_pixels", a.image_pixels}, {"trunk_hidden", a.trunk_hidden},
          {"d_pose", a.d_pose},             {"d_expr", a.d_expr},
          {"clf_hidden", a.clf_hidden},     {"gen_hidden", a.gen_hidden},
          {"expressions", a.n_expressions}, {"poses", a.n_poses}};
}

ArchConfig arch_from_json_state(const nlohmann::json& j) {
  ArchConfig a;
  a.image_pixels = j.at("image_pixels").get<std::size_t>();
  a.trunk_hidden = j.at("trunk_hidden").get<std::size_t>();
  a.d_pose = j.at("d_pose").get<std::size_t>();
  a.d_expr = j.at("d_expr").get<std::size_t>();
  a.clf_hidden = j.at("clf_hidden").get<std::size_t>();
  a.gen_hidden = j.at("gen_hidden").get<std::size_t>();
  a.n_expressions = j.at("expressions").get<std::size_t>();
  a.n_poses = j.at("poses").get<std::size_t>();
  return a;
}

}  // namespace

void save_train_state(const TrainState& st, const std::string& path) {
  nlohmann::ordered_json header;
  header["format"] = "upada-train-state-v1";
  header["epoch"] = st.epoch;
  header["config"] = config_to_json(st.cfg);
  header["arch"] = arch_to_json_state(st.bundle.arch());
  header["batch_rng"] = st.batch_rng.save_state();
  header["pairing_rng"] = st.pairing_rng.save_state();
  auto hist = nlohmann::ordered_json::array();
  for (const auto& r : st.history) hist.push_back(record_to_json(r));
  header["history"] = std::move(hist);

  auto params = nlohmann::ordered_json::array();
  for (const auto& name : st.bundle.params().names()) params.push_back(name);
  header["params"] = std::move(params);

  auto moments = nlohmann::ordered_json::array();
  for (const auto& [name, mom] : st.optimizer.state())
    moments.push_back({{"name", name}, {"t", mom.t}, {"count", mom.m.size()}});
  header["moments"] = std::move(moments);
  auto dump_moments = [](const Optimizer& opt) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [name, mom] : opt.state())
      arr.push_back({{"name", name}, {"t", mom.t}, {"count", mom.m.size()}});
    return arr;
  };
  header["adv_moments"] = dump_moments(st.adv_optimizer);
  header["cross_moments"] = dump_moments(st.cross_optimizer);
  header["recon_moments"] = dump_moments(st.recon_optimizer);

  const std::string text = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write train state " + path);
  f.write(kStateMagic, sizeof(kStateMagic));
  write_u64_le(f, text.size());
  f.write(text.data(), text.size());
  for (const auto& name : st.bundle.params().names()) {
    const auto& t = st.bundle.params().at(name);
    f.write(reinterpret_cast<const char*>(t->data.data()), t->size() * sizeof(double));
  }
  for (const Optimizer* opt :
       {&st.optimizer, &st.adv_optimizer, &st.cross_optimizer, &st.recon_optimizer}) {
    for (const auto& [name, mom] : opt->state()) {
      f.write(reinterpret_cast<const char*>(mom.m.data()), mom.m.size() * sizeof(double));
      f.write(reinterpret_cast<const char*>(mom.v.data()), mom.v.size() * sizeof(double));
    }
  }
  if (!f) throw FormatError("short write on train state " + path);
}

TrainState load_train_state(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open train state " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kStateMagic, sizeof(kStateMagic)) != 0)
    throw FormatError("train state: bad magic (expected UPADAST1)");
  const std::uint64_t len = read_u64_le(f);
  std::string text(len, '\0');
  f.read(text.data(), len);
  if (!f) throw FormatError("train state: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train state header: ") + e.what());
  }
  if (header.value("format", "") != "upada-train-state-v1")
    throw FormatError("train state: missing or unknown 'format'");

  TrainConfig cfg;
  ArchConfig arch;
  try {
    cfg = config_from_json(header.at("config"));
    arch = arch_from_json_state(header.at("arch"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train state header: ") + e.what());
  }

  TrainState st(cfg, arch);
  st.epoch = header.at("epoch").get<int>();
  st.batch_rng.load_state(header.at("batch_rng").get<std::string>());
  st.pairing_rng.load_state(header.at("pairing_rng").get<std::string>());
  for (const auto& r : header.at("history")) st.history.push_back(record_from_json(r));

  const auto& params = header.at("params");
  if (params.size() != st.bundle.params().size())
    throw FormatError("train state: parameter count mismatch");
  for (const auto& pname : params) {
    const auto& t = st.bundle.params().at(pname.get<std::string>());
    f.read(reinterpret_cast<char*>(t->data.data()), t->size() * sizeof(double));
    if (!f) throw FormatError("train state: truncated parameter blob");
  }
  auto read_moments = [&f](const nlohmann::json& list, Optimizer& opt) {
    for (const auto& rec : list) {
      const std::string name = rec.at("name").get<std::string>();
      const std::size_t count = rec.at("count").get<std::size_t>();
      auto& mom = opt.mutable_state()[name];
      mom.t = rec.at("t").get<std::uint64_t>();
      mom.m.resize(count);
      mom.v.resize(count);
      f.read(reinterpret_cast<char*>(mom.m.data()), count * sizeof(double));
      f.read(reinterpret_cast<char*>(mom.v.data()), count * sizeof(double));
      if (!f) throw FormatError("train state: truncated moment blob");
    }
  };
  read_moments(header.at("moments"), st.optimizer);
  read_moments(header.at("adv_moments"), st.adv_optimizer);
  read_moments(header.at("cross_moments"), st.cross_optimizer);
  read_moments(header.at("recon_moments"), st.recon_optimizer);
  return st;
}

// ---------------------------------------------------------------------------
// ablation grid

LosoSplit split_for_run(const Dataset& full, int subject, std::uint64_t run_seed) {
  return split_loso(full, subject, mix_seed(run_seed, kTagSplit));
}

std::vector<MetricsRecord> run_ablation_grid(const Dataset& full, const GridSpec& grid) {
  struct Cell {
    Mode mode;
    int subject;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Mode m : grid.modes)
    for (int s : grid.subjects)
      for (std::uint64_t k : grid.seeds) cells.push_back({m, s, k});

  std::vector<MetricsRecord> records(cells.size());
  std::mutex next_mutex;
  std::size_t next = 0;

  auto worker = [&] {
    for (;;) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= cells.size()) return;
        idx = next++;
      }
      const Cell& cell = cells[idx];
      MetricsRecord& rec = records[idx];
      rec.mode = mode_name(cell.mode);
      rec.subject = cell.subject;
      rec.seed = cell.seed;
      rec.run_id = "m-" + rec.mode + "_s" + std::to_string(cell.subject) + "_k" +
                   std::to_string(cell.seed);
      try {
        // The split is shared by every mode of the same (subject, seed) cell
        // so the ablation comparison sees identical data; the run's private
        // streams still differ by mode.
        const std::uint64_t data_seed =
            mix_seed(cell.seed, static_cast<std::uint64_t>(cell.subject));
        const std::uint64_t cell_seed = mix_seed(data_seed, hash_string(rec.mode));
        auto split = split_for_run(full, cell.subject, data_seed);
        TrainConfig cfg = grid.base;
        cfg.mode = cell.mode;
        cfg.seed = cell_seed;
        auto result = train(cfg, split.source, split.target_train);

        auto acc = evaluate_accuracy(result.bundle, split.target_test);
        rec.acc_overall = acc.overall;
        rec.acc_per_pose = acc.per_pose;

        // Probe over all held-out-subject samples, train and test portions.
        std::vector<Sample> tgt;
        for (std::size_t i = 0; i < split.target_train.size(); ++i)
          tgt.push_back(split.target_train.sample(i));
        for (std::size_t i = 0; i < split.target_test.size(); ++i)
          tgt.push_back(split.target_test.sample(i));
        Dataset target_all(full.spec(), std::move(tgt));
        auto dom = domain_confusion_report(result.bundle, split.source, target_all,
                                           mix_seed(cell_seed, kTagProbe));
        auto dis = disentanglement_report(result.bundle, split.source,
                                          mix_seed(cell_seed, kTagProbe, 1ULL));
        rec.probe_domain_fe = dom.on_expr;
        rec.probe_domain_fp = dom.on_pose;
        rec.probe_pose_fe = dis.pose_on_expr;
        rec.probe_expr_fp = dis.expr_on_pose;

        if (!result.history.empty()) {
          const auto& last = result.history.back();
          rec.final_losses = last.losses;
          rec.fallback_expr_rate = last.fallback_expr_rate;
          rec.invalid_rate = last.invalid_rate;
          rec.final_total = joint_objective(last.losses, cfg.weights, ObjectiveRole::Encoder);
        }
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
      }
    }
  };

  const int jobs = std::max(1, grid.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return records;
}

std::vector<ModeAggregate> aggregate_by_mode(const std::vector<MetricsRecord>& records,
                                             int n_poses) {
  std::vector<ModeAggregate> out;
  for (const char* name : {"R", "R+adv", "R+adv+cross", "full"}) {
    ModeAggregate agg;
    agg.mode = name;
    agg.pose_mean.assign(n_poses, 0.0);
    double sum = 0, sum2 = 0;
    for (const auto& r : records) {
      if (r.failed || r.mode != name) continue;
      ++agg.cells;
      sum += r.acc_overall;
      sum2 += r.acc_overall * r.acc_overall;
      for (int p = 0; p < n_poses && p < static_cast<int>(r.acc_per_pose.size()); ++p)
        agg.pose_mean[p] += r.acc_per_pose[p];
    }
    if (agg.cells == 0) continue;
    agg.acc_mean = sum / agg.cells;
    const double var = sum2 / agg.cells - agg.acc_mean * agg.acc_mean;
    agg.acc_stddev = var > 0 ? std::sqrt(var) : 0.0;
    for (auto& v : agg.pose_mean) v /= agg.cells;
    out.push_back(std::move(agg));
  }
  return out;
}

std::string format_pose_table(const std::vector<ModeAggregate>& aggregates) {
  std::ostringstream os;
  os << "mode";
  if (!aggregates.empty())
    for (std::size_t p = 0; p < aggregates.front().pose_mean.size(); ++p)
      os << "\tpose_" << p;
  os << "\tAvg\n";
  char buf[32];
  for (const auto& a : aggregates) {
    os << a.mode;
    for (double v : a.pose_mean) {
      std::snprintf(buf, sizeof(buf), "%.3f", v);
      os << "\t" << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.3f", a.acc_mean);
    os << "\t" << buf << "\n";
  }
  return os.str();
}

}  // namespace upada
