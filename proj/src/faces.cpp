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

#include "upada/faces.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "upada/errors.hpp"

namespace upada {

namespace {

constexpr char kBlobMagic[8] = {'F', 'F', 'A', 'C', 'E', 'S', '0', '1'};

// Seed-stream tags so the per-purpose streams never collide.
constexpr std::uint64_t kTagSubjectField = 0x53464c44;  // "SFLD"
constexpr std::uint64_t kTagCell = 0x43454c4c;          // "CELL"

void stamp(std::vector<double>& canvas, int side, double x, double y, double value) {
  // 2 px tall stamp keeps the strokes visible after shear resampling.
  const int ix = static_cast<int>(std::lround(x));
  for (int dy = 0; dy <= 1; ++dy) {
    const int iy = static_cast<int>(std::lround(y)) + dy;
    if (ix < 0 || ix >= side || iy < 0 || iy >= side) continue;
    canvas[iy * side + ix] = std::max(canvas[iy * side + ix], value);
  }
}

// Mouth parabola + eyebrow segment at fixed canvas positions, intensity 0.8.
std::vector<double> expression_glyph(const FactorSpec& spec, int expression) {
  const int side = spec.image_side;
  std::vector<double> g(side * side, 0.0);
  const double cx = (side - 1) / 2.0;
  const double curv =
      spec.n_expressions == 1
          ? 0.0
          : -1.0 + 2.0 * expression / static_cast<double>(spec.n_expressions - 1);
  const double slope = curv / 2.0;

  const double mouth_y = 0.70 * side;
  const double mouth_half = 0.22 * side;
  const double mouth_amp = 0.14 * side;
  const double brow_y = 0.30 * side;
  const double brow_half = 0.20 * side;

  const int steps = side * 6;
  for (int k = 0; k <= steps; ++k) {
    const double u = -1.0 + 2.0 * k / steps;
    stamp(g, side, cx + u * mouth_half, mouth_y + curv * mouth_amp * u * u, 0.8);
    stamp(g, side, cx + u * brow_half, brow_y + slope * (u * brow_half) * 0.6, 0.8);
  }
  return g;
}

// Horizontal shear x' = x + tan(theta) * (y - H/2) with bilinear resampling;
// pixels pulled from outside the frame are 0.
std::vector<double> shear_horizontal(const std::vector<double>& src, int side,
                                     double theta_deg) {
  const double t = std::tan(theta_deg * std::numbers::pi / 180.0);
  std::vector<double> out(side * side, 0.0);
  for (int y = 0; y < side; ++y) {
    const double shift = t * (y - side / 2.0);
    for (int x = 0; x < side; ++x) {
      const double xs = x - shift;
      const int x0 = static_cast<int>(std::floor(xs));
      const double f = xs - x0;
      double v = 0.0;
      if (x0 >= 0 && x0 < side) v += (1.0 - f) * src[y * side + x0];
      if (x0 + 1 >= 0 && x0 + 1 < side) v += f * src[y * side + x0 + 1];
      out[y * side + x] = v;
    }
  }
  return out;
}

// Low-frequency per-subject bias: a 4x4 standard-normal grid bilinearly
// upsampled to the full frame, amplitude 0.3.
std::vector<double> subject_field(const FactorSpec& spec, int subject) {
  Rng rng(mix_seed(spec.seed, kTagSubjectField, static_cast<std::uint64_t>(subject)));
  constexpr int kGrid = 4;
  double grid[kGrid * kGrid];
  for (double& v : grid) v = rng.normal();

  const int side = spec.image_side;
  std::vector<double> out(side * side);
  for (int y = 0; y < side; ++y) {
    const double gy = y * (kGrid - 1) / static_cast<double>(side - 1);
    const int y0 = std::min(static_cast<int>(gy), kGrid - 2);
    const double fy = gy - y0;
    for (int x = 0; x < side; ++x) {
      const double gx = x * (kGrid - 1) / static_cast<double>(side - 1);
      const int x0 = std::min(static_cast<int>(gx), kGrid - 2);
      const double fx = gx - x0;
      const double v00 = grid[y0 * kGrid + x0];
      const double v01 = grid[y0 * kGrid + x0 + 1];
      const double v10 = grid[(y0 + 1) * kGrid + x0];
      const double v11 = grid[(y0 + 1) * kGrid + x0 + 1];
      const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                       fy * ((1 - fx) * v10 + fx * v11);
      out[y * side + x] = 0.3 * v;
    }
  }
  return out;
}

// Fixed elliptical base intensity shared by every subject.
double oval_mask(int side, int x, int y) {
  const double cx = (side - 1) / 2.0, cy = (side - 1) / 2.0;
  const double a = 0.40 * side, b = 0.46 * side;
  const double dx = (x - cx) / a, dy = (y - cy) / b;
  const double r = dx * dx + dy * dy;
  if (r <= 1.0) return 0.45;
  if (r <= 1.3) return 0.45 * (1.3 - r) / 0.3;
  return 0.0;
}

nlohmann::ordered_json spec_to_json(const FactorSpec& s) {
  return {{"subjects", s.n_subjects},
          {"expressions", s.n_expressions},
          {"poses", s.n_poses},
          {"image_side", s.image_side},
          {"samples_per_cell", s.samples_per_cell},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed}};
}

FactorSpec spec_from_json(const nlohmann::json& j) {
  FactorSpec s;
  try {
    s.n_subjects = j.at("subjects").get<int>();
    s.n_expressions = j.at("expressions").get<int>();
    s.n_poses = j.at("poses").get<int>();
    s.image_side = j.at("image_side").get<int>();
    s.samples_per_cell = j.at("samples_per_cell").get<int>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: bad spec field: ") + e.what());
  }
  return s;
}

}  // namespace

void FactorSpec::validate() const {
  if (n_subjects < 2) throw ConfigError("subjects: need at least 2");
  if (n_expressions < 2) throw ConfigError("expressions: need at least 2");
  if (n_poses < 2) throw ConfigError("poses: need at least 2");
  if (image_side < 16) throw ConfigError("image_side: need at least 16");
  if (samples_per_cell < 1) throw ConfigError("samples_per_cell: need at least 1");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma: must be >= 0");
}

std::string domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }

Domain domain_from_name(const std::string& s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw FormatError("dataset manifest: unknown domain tag '" + s + "'");
}

LabelIndex::LabelIndex(int n_poses, int n_expressions, const std::vector<int>& poses,
                       const std::vector<int>& expressions)
    : n_poses_(n_poses), n_expressions_(n_expressions), total_(poses.size()) {
  if (poses.size() != expressions.size())
    throw UsageError("label index: pose/expression length mismatch");
  buckets_.resize(static_cast<std::size_t>(n_poses) * n_expressions);
  expr_buckets_.resize(n_expressions);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const int p = poses[i], e = expressions[i];
    if (p < 0 || p >= n_poses || e < 0 || e >= n_expressions)
      throw UsageError("label index: label out of range at position " + std::to_string(i));
    buckets_[static_cast<std::size_t>(p) * n_expressions + e].push_back(i);
    expr_buckets_[e].push_back(i);
  }
}

std::optional<std::size_t> LabelIndex::lookup(int pose, int expression, Rng& rng) const {
  if (pose < 0 || pose >= n_poses_ || expression < 0 || expression >= n_expressions_)
    throw UsageError("label index lookup: label out of range");
  const auto& b = buckets_[static_cast<std::size_t>(pose) * n_expressions_ + expression];
  if (b.empty()) return std::nullopt;
  return b[rng.uniform_index(b.size())];
}

std::optional<std::size_t> LabelIndex::lookup_expression_only(int expression,
                                                              Rng& rng) const {
  if (expression < 0 || expression >= n_expressions_)
    throw UsageError("label index lookup: expression out of range");
  const auto& b = expr_buckets_[expression];
  if (b.empty()) return std::nullopt;
  return b[rng.uniform_index(b.size())];
}

std::size_t LabelIndex::bucket_size(int pose, int expression) const {
  return buckets_[static_cast<std::size_t>(pose) * n_expressions_ + expression].size();
}

Dataset::Dataset(FactorSpec spec, std::vector<Sample> samples, bool hide_expression)
    : spec_(std::move(spec)), samples_(std::move(samples)),
      hide_expression_(hide_expression) {
  std::vector<int> poses(samples_.size()), exprs(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    poses[i] = samples_[i].pose;
    exprs[i] = samples_[i].expression;
  }
  index_ = LabelIndex(spec_.n_poses, spec_.n_expressions, poses, exprs);
}

int Dataset::expression_of(std::size_t i) const {
  if (hide_expression_)
    throw UsageError("expression labels are hidden on this split");
  return samples_.at(i).expression;
}

std::optional<std::size_t> Dataset::lookup_by_labels(int pose, int expression,
                                                     Rng& rng) const {
  return index_.lookup(pose, expression, rng);
}

TensorPtr Dataset::images_tensor(const std::vector<std::size_t>& positions) const {
  const std::size_t px = spec_.pixels();
  auto t = make_tensor(positions.size(), px);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& img = samples_.at(positions[i]).image;
    for (std::size_t j = 0; j < px; ++j) t->data[i * px + j] = img[j];
  }
  return t;
}

bool Dataset::operator==(const Dataset& other) const {
  if (!(spec_ == other.spec_) || samples_.size() != other.samples_.size()) return false;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& a = samples_[i];
    const auto& b = other.samples_[i];
    if (a.expression != b.expression || a.pose != b.pose || a.subject != b.subject ||
        a.domain != b.domain || a.noise_seed != b.noise_seed || a.image != b.image)
      return false;
  }
  return true;
}

std::vector<float> render_sample(const FactorSpec& spec, int subject, int expression,
                                 int pose, std::uint64_t noise_seed) {
  if (subject < 0 || subject >= spec.n_subjects)
    throw UsageError("render: subject " + std::to_string(subject) + " out of range");
  if (expression < 0 || expression >= spec.n_expressions)
    throw UsageError("render: expression " + std::to_string(expression) + " out of range");
  if (pose < 0 || pose >= spec.n_poses)
    throw UsageError("render: pose " + std::to_string(pose) + " out of range");

  const int side = spec.image_side;
  const double theta =
      -30.0 + 60.0 * pose / static_cast<double>(spec.n_poses - 1);
  const auto field = subject_field(spec, subject);
  const auto glyph = shear_horizontal(expression_glyph(spec, expression), side, theta);

  Rng noise(noise_seed);
  std::vector<float> img(side * side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * side + x;
      double v = field[i] + oval_mask(side, x, y) + glyph[i] +
                 noise.normal(0.0, spec.noise_sigma);
      img[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

Dataset generate_dataset(const FactorSpec& spec) {
  spec.validate();
  std::vector<Sample> samples;
  samples.reserve(spec.total_samples());
  for (int s = 0; s < spec.n_subjects; ++s) {
    for (int e = 0; e < spec.n_expressions; ++e) {
      for (int p = 0; p < spec.n_poses; ++p) {
        Rng cell(mix_seed(spec.seed, kTagCell, static_cast<std::uint64_t>(s),
                          static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(p)));
        for (int i = 0; i < spec.samples_per_cell; ++i) {
          Sample smp;
          smp.subject = s;
          smp.expression = e;
          smp.pose = p;
          smp.domain = Domain::Source;
          smp.noise_seed = cell.next_u64();
          smp.image = render_sample(spec, s, e, p, smp.noise_seed);
          samples.push_back(std::move(smp));
        }
      }
    }
  }
  return Dataset(spec, std::move(samples));
}

LosoSplit split_loso(const Dataset& dataset, int held_out_subject, std::uint64_t seed) {
  if (held_out_subject < 0 || held_out_subject >= dataset.spec().n_subjects)
    throw UsageError("split: unknown subject " + std::to_string(held_out_subject));

  std::vector<Sample> source;
  std::vector<Sample> held;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    Sample s = dataset.sample(i);
    if (s.subject == held_out_subject) {
      s.domain = Domain::Target;
      held.push_back(std::move(s));
    } else {
      s.domain = Domain::Source;
      source.push_back(std::move(s));
    }
  }
  if (held.empty())
    throw UsageError("split: no samples for subject " + std::to_string(held_out_subject));

  Rng rng(seed);
  const auto perm = rng.permutation(held.size());
  const std::size_t n_train = held.size() * 2 / 3;
  std::vector<Sample> train, test;
  for (std::size_t k = 0; k < held.size(); ++k) {
    auto& dst = k < n_train ? train : test;
    dst.push_back(held[perm[k]]);
  }

  LosoSplit out;
  out.source = Dataset(dataset.spec(), std::move(source));
  out.target_train = Dataset(dataset.spec(), std::move(train), /*hide_expression=*/true);
  out.target_test = Dataset(dataset.spec(), std::move(test));
  return out;
}

void save_dataset(const Dataset& dataset, const std::string& basepath) {
  const std::size_t px = dataset.spec().pixels();
  nlohmann::ordered_json manifest;
  manifest["format"] = "ffaces-manifest-v1";
  manifest["spec"] = spec_to_json(dataset.spec());
  manifest["count"] = dataset.size();
  auto records = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.sample(i);
    records.push_back({{"subject", s.subject},
                       {"expression", s.expression},
                       {"pose", s.pose},
                       {"domain", domain_name(s.domain)},
                       {"noise_seed", s.noise_seed},
                       {"offset", 8 + i * px * sizeof(float)}});
  }
  manifest["samples"] = std::move(records);

  std::ofstream mf(basepath + ".json", std::ios::binary);
  if (!mf) throw FormatError("cannot write manifest " + basepath + ".json");
  mf << manifest.dump(2) << "\n";

  std::ofstream bf(basepath + ".bin", std::ios::binary);
  if (!bf) throw FormatError("cannot write blob " + basepath + ".bin");
  bf.write(kBlobMagic, sizeof(kBlobMagic));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& img = dataset.sample(i).image;
    bf.write(reinterpret_cast<const char*>(img.data()), img.size() * sizeof(float));
  }
  if (!bf) throw FormatError("short write on blob " + basepath + ".bin");
}

Dataset load_dataset(const std::string& basepath) {
  std::ifstream mf(basepath + ".json", std::ios::binary);
  if (!mf) throw FormatError("cannot open manifest " + basepath + ".json");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "ffaces-manifest-v1")
    throw FormatError("dataset manifest: missing or unknown 'format'");
  const FactorSpec spec = spec_from_json(manifest.at("spec"));
  spec.validate();
  if (!manifest.contains("count") || !manifest.contains("samples"))
    throw FormatError("dataset manifest: missing 'count' or 'samples'");
  const std::size_t count = manifest.at("count").get<std::size_t>();
  const auto& records = manifest.at("samples");
  if (records.size() != count)
    throw FormatError("dataset manifest: 'count' (" + std::to_string(count) +
                      ") does not match sample records (" +
                      std::to_string(records.size()) + ")");

  std::ifstream bf(basepath + ".bin", std::ios::binary);
  if (!bf) throw FormatError("cannot open blob " + basepath + ".bin");
  char magic[8];
  bf.read(magic, sizeof(magic));
  if (!bf || std::memcmp(magic, kBlobMagic, sizeof(kBlobMagic)) != 0)
    throw FormatError("pixel blob: bad magic (expected FFACES01)");

  const std::size_t px = spec.pixels();
  std::vector<Sample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& r = records[i];
    Sample s;
    try {
      s.subject = r.at("subject").get<int>();
      s.expression = r.at("expression").get<int>();
      s.pose = r.at("pose").get<int>();
      s.domain = domain_from_name(r.at("domain").get<std::string>());
      s.noise_seed = r.at("noise_seed").get<std::uint64_t>();
      const std::size_t offset = r.at("offset").get<std::size_t>();
      if (offset != 8 + i * px * sizeof(float))
        throw FormatError("dataset manifest: bad offset for sample " + std::to_string(i));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("dataset manifest: sample " + std::to_string(i) + ": " + e.what());
    }
    s.image.resize(px);
    bf.read(reinterpret_cast<char*>(s.image.data()), px * sizeof(float));
    if (!bf)
      throw FormatError("pixel blob: truncated at sample " + std::to_string(i) +
                        " (offset " + std::to_string(8 + i * px * sizeof(float)) + ")");
    samples.push_back(std::move(s));
  }
  bf.peek();
  if (!bf.eof()) throw FormatError("pixel blob: trailing bytes after last sample");
  return Dataset(spec, std::move(samples));
}

}  // namespace upada
