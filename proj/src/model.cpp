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

#include "upada/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "upada/errors.hpp"
#include "upada/rng.hpp"

namespace upada {

const std::array<std::string, 8> ModelBundle::kComponents = {
    "E_s", "E_t", "D_p", "R", "D_de", "D_dp", "G_s", "G_t"};

namespace {

constexpr char kCheckpointMagic[8] = {'U', 'P', 'A', 'D', 'A', '0', '0', '1'};
constexpr std::uint64_t kTagInitLayer = 0x494e4954;  // "INIT"

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases. Each layer
// draws from its own stream so the values do not depend on registration
// order of unrelated components.
void add_layer(ParamSet& ps, const std::string& prefix, std::size_t fan_in,
               std::size_t fan_out, std::uint64_t seed) {
  Rng rng(mix_seed(seed, kTagInitLayer, hash_string(prefix)));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  auto w = make_tensor(fan_in, fan_out, /*requires_grad=*/true);
  for (double& v : w->data) v = rng.uniform(-bound, bound);
  auto b = make_tensor(1, fan_out, /*requires_grad=*/true);
  ps.add(prefix + ".W", std::move(w));
  ps.add(prefix + ".b", std::move(b));
}

}  // namespace

ModelBundle::ModelBundle(const ArchConfig& arch, std::uint64_t seed) : arch_(arch) {
  const std::size_t head_in = arch.head_width();
  for (const char* enc : {"E_s", "E_t"}) {
    add_layer(params_, std::string(enc) + ".trunk", arch.image_pixels, arch.trunk_hidden, seed);
    add_layer(params_, std::string(enc) + ".pose", arch.trunk_hidden, arch.d_pose, seed);
    add_layer(params_, std::string(enc) + ".expr", arch.trunk_hidden, arch.d_expr, seed);
  }
  add_layer(params_, "D_p.h", head_in, arch.clf_hidden, seed);
  add_layer(params_, "D_p.out", arch.clf_hidden, arch.n_poses, seed);
  add_layer(params_, "R.h", head_in, arch.clf_hidden, seed);
  add_layer(params_, "R.out", arch.clf_hidden, arch.n_expressions, seed);
  add_layer(params_, "D_de.h", arch.d_expr, arch.clf_hidden, seed);
  add_layer(params_, "D_de.out", arch.clf_hidden, 1, seed);
  add_layer(params_, "D_dp.h", arch.d_pose, arch.clf_hidden, seed);
  add_layer(params_, "D_dp.out", arch.clf_hidden, 1, seed);
  for (const char* gen : {"G_s", "G_t"}) {
    add_layer(params_, std::string(gen) + ".h", arch.d_pose + arch.d_expr, arch.gen_hidden, seed);
    add_layer(params_, std::string(gen) + ".out", arch.gen_hidden, arch.image_pixels, seed);
  }
}

TensorPtr ModelBundle::dense(Tape& tape, const std::string& prefix,
                             const TensorPtr& x) const {
  return tape.add_bias(tape.matmul(x, params_.at(prefix + ".W")),
                       params_.at(prefix + ".b"));
}

FeaturePair ModelBundle::encode(Tape& tape, const std::string& encoder,
                                const TensorPtr& images) const {
  if (encoder != "E_s" && encoder != "E_t")
    throw UsageError("encode: unknown encoder " + encoder);
  if (images->n_cols != arch_.image_pixels)
    throw DimensionError("encode: images " + images->shape_str() + ", expected " +
                         std::to_string(arch_.image_pixels) + " pixels");
  auto h = tape.relu(dense(tape, encoder + ".trunk", images));
  FeaturePair out;
  out.pose = dense(tape, encoder + ".pose", h);
  out.expr = dense(tape, encoder + ".expr", h);
  return out;
}

TensorPtr ModelBundle::classifier_head(Tape& tape, const std::string& prefix,
                                       const TensorPtr& features) const {
  const std::size_t head_in = arch_.head_width();
  if (features->n_cols > head_in)
    throw DimensionError(prefix + ": features " + features->shape_str() +
                         " wider than head input " + std::to_string(head_in));
  auto x = tape.pad_cols(features, head_in);
  return dense(tape, prefix + ".out", tape.relu(dense(tape, prefix + ".h", x)));
}

TensorPtr ModelBundle::expr_logits(Tape& tape, const TensorPtr& features) const {
  return classifier_head(tape, "R", features);
}

TensorPtr ModelBundle::pose_logits(Tape& tape, const TensorPtr& features) const {
  return classifier_head(tape, "D_p", features);
}

TensorPtr ModelBundle::domain_logits_expr(Tape& tape, const TensorPtr& f_expr) const {
  if (f_expr->n_cols != arch_.d_expr)
    throw DimensionError("D_de: features " + f_expr->shape_str() + ", expected width " +
                         std::to_string(arch_.d_expr));
  return dense(tape, "D_de.out", tape.relu(dense(tape, "D_de.h", f_expr)));
}

TensorPtr ModelBundle::domain_logits_pose(Tape& tape, const TensorPtr& f_pose) const {
  if (f_pose->n_cols != arch_.d_pose)
    throw DimensionError("D_dp: features " + f_pose->shape_str() + ", expected width " +
                         std::to_string(arch_.d_pose));
  return dense(tape, "D_dp.out", tape.relu(dense(tape, "D_dp.h", f_pose)));
}

TensorPtr ModelBundle::generate(Tape& tape, const std::string& generator,
                                const TensorPtr& f_pose, const TensorPtr& f_expr) const {
  if (generator != "G_s" && generator != "G_t")
    throw UsageError("generate: unknown generator " + generator);
  if (f_pose->n_cols != arch_.d_pose || f_expr->n_cols != arch_.d_expr)
    throw DimensionError("generate: feature widths " + f_pose->shape_str() + ", " +
                         f_expr->shape_str());
  auto code = tape.concat_cols(f_pose, f_expr);
  auto h = tape.relu(dense(tape, generator + ".h", code));
  return tape.sigmoid(dense(tape, generator + ".out", h));
}

PseudoLabels ModelBundle::pseudo_label(const TensorPtr& target_images) const {
  Tape tape;
  auto f = encode(tape, "E_t", target_images);
  auto ye = expr_logits(tape, f.expr);
  auto yp = pose_logits(tape, f.pose);
  const std::size_t m = target_images->n_rows;
  PseudoLabels out;
  out.expression.resize(m);
  out.pose.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.expression[i] = static_cast<int>(
        argmax_row(ye->data.data() + i * ye->n_cols, ye->n_cols));
    out.pose[i] = static_cast<int>(
        argmax_row(yp->data.data() + i * yp->n_cols, yp->n_cols));
  }
  return out;
}

std::uint64_t ModelBundle::component_checksum(const std::string& component) const {
  return params_.checksum(component + ".");
}

void ModelBundle::copy_component(const std::string& from, const std::string& to) {
  for (const auto& name : params_.names()) {
    if (name.rfind(from + ".", 0) != 0) continue;
    const std::string peer = to + name.substr(from.size());
    params_.at(peer)->data = params_.at(name)->data;
  }
}

namespace {

nlohmann::ordered_json arch_to_json(const ArchConfig& a) {
  return {{"image_pixels", a.image_pixels}, {"trunk_hidden", a.trunk_hidden},
          {"d_pose", a.d_pose},             {"d_expr", a.d_expr},
          {"clf_hidden", a.clf_hidden},     {"gen_hidden", a.gen_hidden},
          {"expressions", a.n_expressions}, {"poses", a.n_poses}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
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

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle,
                     const CheckpointMeta& meta) {
  static_assert(sizeof(double) == 8);
  nlohmann::ordered_json header;
  header["format"] = "upada-checkpoint-v1";
  header["arch"] = arch_to_json(bundle.arch());
  header["meta"] = {{"mode", meta.mode},
                    {"subject", meta.subject},
                    {"seed", meta.seed},
                    {"data_seed", meta.data_seed}};
  auto components = nlohmann::ordered_json::array();
  for (const auto& c : ModelBundle::kComponents) components.push_back(c);
  header["components"] = std::move(components);

  std::uint64_t offset = 0;
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& name : bundle.params().names()) {
    const auto& t = bundle.params().at(name);
    tensors.push_back({{"name", name},
                       {"shape", {t->n_rows, t->n_cols}},
                       {"offset", offset}});
    offset += t->size() * sizeof(double);
  }
  header["tensors"] = std::move(tensors);

  const std::string header_text = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write checkpoint " + path);
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u64_le(f, header_text.size());
  f.write(header_text.data(), header_text.size());
  for (const auto& name : bundle.params().names()) {
    const auto& t = bundle.params().at(name);
    f.write(reinterpret_cast<const char*>(t->data.data()), t->size() * sizeof(double));
  }
  if (!f) throw FormatError("short write on checkpoint " + path);
}

ModelBundle load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw FormatError("checkpoint: bad magic (expected UPADA001)");
  const std::uint64_t header_len = read_u64_le(f);
  if (!f) throw FormatError("checkpoint: truncated header length");
  std::string header_text(header_len, '\0');
  f.read(header_text.data(), header_len);
  if (!f) throw FormatError("checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "upada-checkpoint-v1")
    throw FormatError("checkpoint header: missing or unknown 'format'");

  ArchConfig arch;
  try {
    arch = arch_from_json(header.at("arch"));
    if (meta) {
      const auto& m = header.at("meta");
      meta->mode = m.at("mode").get<std::string>();
      meta->subject = m.at("subject").get<int>();
      meta->seed = m.at("seed").get<std::uint64_t>();
      meta->data_seed = m.at("data_seed").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  ModelBundle bundle(arch, /*seed=*/0);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != bundle.params().size())
    throw FormatError("checkpoint header: tensor count " + std::to_string(tensors.size()) +
                      " does not match architecture");
  for (const auto& rec : tensors) {
    std::string name;
    try {
      name = rec.at("name").get<std::string>();
      const auto shape = rec.at("shape").get<std::vector<std::size_t>>();
      auto& t = *bundle.params().at(name);
      if (shape.size() != 2 || shape[0] != t.n_rows || shape[1] != t.n_cols)
        throw FormatError("checkpoint header: shape mismatch for " + name);
      f.read(reinterpret_cast<char*>(t.data.data()), t.size() * sizeof(double));
      if (!f) throw FormatError("checkpoint: truncated blob for " + name);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint header: tensor record: ") + e.what());
    }
  }
  return bundle;
}

}  // namespace upada
