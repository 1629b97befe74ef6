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

#include "upada/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "upada/errors.hpp"
#include "upada/rng.hpp"

namespace upada {

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

AccuracyReport evaluate_accuracy(const ModelBundle& bundle, const Dataset& target_test) {
  if (target_test.size() == 0) throw UsageError("evaluate: empty test set");
  const std::size_t n = target_test.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  Tape tape;
  auto f = bundle.encode(tape, "E_t", target_test.images_tensor(all));
  auto logits = bundle.expr_logits(tape, f.expr);

  const int n_poses = target_test.spec().n_poses;
  AccuracyReport rep;
  rep.per_pose.assign(n_poses, 0.0);
  rep.per_pose_counts.assign(n_poses, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int pred = static_cast<int>(
        argmax_row(logits->data.data() + i * logits->n_cols, logits->n_cols));
    const bool hit = pred == target_test.oracle_expression(i);
    const int pose = target_test.pose_of(i);
    rep.per_pose_counts[pose] += 1;
    if (hit) {
      ++hits;
      rep.per_pose[pose] += 1.0;
    }
  }
  for (int p = 0; p < n_poses; ++p)
    if (rep.per_pose_counts[p]) rep.per_pose[p] /= rep.per_pose_counts[p];
  rep.overall = static_cast<double>(hits) / n;
  return rep;
}

namespace {

double probe_accuracy(const TensorPtr& features, const ParamSet& probe,
                      const std::vector<std::size_t>& rows,
                      const std::vector<int>& labels) {
  Tape tape;
  auto x = make_tensor(rows.size(), features->n_cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < features->n_cols; ++j)
      x->data[i * features->n_cols + j] = features->at(rows[i], j);
  auto logits = tape.add_bias(tape.matmul(x, probe.at("probe.W")), probe.at("probe.b"));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto pred =
        argmax_row(logits->data.data() + i * logits->n_cols, logits->n_cols);
    if (static_cast<int>(pred) == labels[rows[i]]) ++hits;
  }
  return rows.empty() ? 0.0 : static_cast<double>(hits) / rows.size();
}

}  // namespace

ProbeResult train_probe(const TensorPtr& features, const std::vector<int>& labels,
                        int n_classes, std::uint64_t seed, const std::string& kind) {
  const std::size_t n = features->n_rows;
  if (labels.size() != n) throw UsageError("probe: label count mismatch");
  if (n < 5) throw UsageError("probe: too few samples");
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw UsageError("probe: degenerate single-class labels");

  Rng rng(seed);
  const auto perm = rng.permutation(n);
  const std::size_t n_train = n * 8 / 10;
  std::vector<std::size_t> train_rows(perm.begin(), perm.begin() + n_train);
  std::vector<std::size_t> test_rows(perm.begin() + n_train, perm.end());

  auto xtrain = make_tensor(n_train, features->n_cols);
  std::vector<int> ytrain(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    ytrain[i] = labels[train_rows[i]];
    for (std::size_t j = 0; j < features->n_cols; ++j)
      xtrain->data[i * features->n_cols + j] = features->at(train_rows[i], j);
  }

  ParamSet probe;
  probe.add("probe.W", make_tensor(features->n_cols, n_classes, /*requires_grad=*/true));
  probe.add("probe.b", make_tensor(1, n_classes, /*requires_grad=*/true));
  Optimizer opt(OptimizerSettings{OptimizerSettings::Kind::Adam, 1e-2, 0.9, 0.999, 1e-8});

  for (int step = 0; step < 500; ++step) {
    Tape tape;
    auto logits =
        tape.add_bias(tape.matmul(xtrain, probe.at("probe.W")), probe.at("probe.b"));
    auto loss = tape.softmax_cross_entropy(logits, ytrain);
    opt.step(probe, backward(tape, loss, probe));
  }

  ProbeResult out;
  out.kind = kind;
  out.chance = 1.0 / n_classes;
  out.train_accuracy = probe_accuracy(features, probe, train_rows, labels);
  out.test_accuracy = probe_accuracy(features, probe, test_rows, labels);
  return out;
}

FeaturePair encode_dataset(const ModelBundle& bundle, const Dataset& dataset,
                           const std::string& encoder) {
  std::vector<std::size_t> all(dataset.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Tape tape;
  return bundle.encode(tape, encoder, dataset.images_tensor(all));
}

DomainProbes domain_confusion_report(const ModelBundle& bundle, const Dataset& source,
                                     const Dataset& target, std::uint64_t seed) {
  auto fs = encode_dataset(bundle, source, "E_s");
  auto ft = encode_dataset(bundle, target, "E_t");

  // Balanced draw: the same number of rows from each domain.
  Rng rng(seed);
  const std::size_t k = std::min(source.size(), target.size());
  auto pick = [&rng, k](std::size_t n) {
    auto perm = rng.permutation(n);
    perm.resize(k);
    return perm;
  };
  const auto srows = pick(source.size());
  const auto trows = pick(target.size());

  auto stack = [&](const TensorPtr& a, const TensorPtr& b) {
    auto out = make_tensor(2 * k, a->n_cols);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < a->n_cols; ++j) {
        out->data[i * a->n_cols + j] = a->at(srows[i], j);
        out->data[(k + i) * a->n_cols + j] = b->at(trows[i], j);
      }
    return out;
  };
  std::vector<int> domain_labels(2 * k, 0);
  for (std::size_t i = k; i < 2 * k; ++i) domain_labels[i] = 1;

  DomainProbes out;
  out.on_expr = train_probe(stack(fs.expr, ft.expr), domain_labels, 2,
                            mix_seed(seed, 0x6645), "domain-on-f_e");
  out.on_pose = train_probe(stack(fs.pose, ft.pose), domain_labels, 2,
                            mix_seed(seed, 0x6650), "domain-on-f_p");
  return out;
}

DisentanglementProbes disentanglement_report(const ModelBundle& bundle,
                                             const Dataset& source, std::uint64_t seed) {
  auto fs = encode_dataset(bundle, source, "E_s");
  std::vector<int> poses(source.size()), exprs(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    poses[i] = source.pose_of(i);
    exprs[i] = source.oracle_expression(i);
  }
  DisentanglementProbes out;
  out.pose_on_expr = train_probe(fs.expr, poses, source.spec().n_poses,
                                 mix_seed(seed, 0x7045), "pose-on-f_e");
  out.expr_on_pose = train_probe(fs.pose, exprs, source.spec().n_expressions,
                                 mix_seed(seed, 0x6550), "expr-on-f_p");
  return out;
}

void export_embeddings(const ModelBundle& bundle,
                       const std::vector<const Dataset*>& datasets,
                       const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write embeddings " + path);
  const auto& arch = bundle.arch();
  f << "sample_id,domain,subject,pose,expression";
  for (std::size_t j = 0; j < arch.d_expr; ++j) f << ",f_e_" << j;
  for (std::size_t j = 0; j < arch.d_pose; ++j) f << ",f_p_" << j;
  f << "\n";

  std::size_t row_id = 0;
  for (const Dataset* ds : datasets) {
    const std::string encoder = ds->size() && ds->domain_of(0) == Domain::Target ? "E_t" : "E_s";
    auto feats = encode_dataset(bundle, *ds, encoder);
    for (std::size_t i = 0; i < ds->size(); ++i) {
      f << row_id++ << "," << domain_name(ds->domain_of(i)) << "," << ds->subject_of(i)
        << "," << ds->pose_of(i) << "," << ds->oracle_expression(i);
      for (std::size_t j = 0; j < arch.d_expr; ++j)
        f << "," << format_g9(feats.expr->at(i, j));
      for (std::size_t j = 0; j < arch.d_pose; ++j)
        f << "," << format_g9(feats.pose->at(i, j));
      f << "\n";
    }
  }
  if (!f) throw FormatError("short write on embeddings " + path);
}

void write_metrics(const std::vector<MetricsRecord>& records, const std::string& path,
                   int n_poses) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write metrics " + path);
  f << "run_id,mode,subject,seed,acc_overall";
  for (int p = 0; p < n_poses; ++p) f << ",acc_pose_" << p;
  f << ",probe_domain_fe,probe_domain_fp,probe_pose_fe,probe_expr_fp"
       ",fallback_expr_only,fallback_invalid"
       ",loss_p,loss_e,loss_adv_d,loss_adv_g,loss_cross,loss_clc,loss_total,error\n";
  for (const auto& r : records) {
    f << r.run_id << "," << r.mode << "," << r.subject << "," << r.seed << ","
      << format_g9(r.acc_overall);
    for (int p = 0; p < n_poses; ++p)
      f << ","
        << format_g9(p < static_cast<int>(r.acc_per_pose.size()) ? r.acc_per_pose[p] : 0.0);
    f << "," << format_g9(r.probe_domain_fe.test_accuracy) << ","
      << format_g9(r.probe_domain_fp.test_accuracy) << ","
      << format_g9(r.probe_pose_fe.test_accuracy) << ","
      << format_g9(r.probe_expr_fp.test_accuracy) << ","
      << format_g9(r.fallback_expr_rate) << "," << format_g9(r.invalid_rate) << ","
      << format_g9(r.final_losses.l_p) << "," << format_g9(r.final_losses.l_e) << ","
      << format_g9(r.final_losses.l_adv_d) << "," << format_g9(r.final_losses.l_adv_g)
      << "," << format_g9(r.final_losses.l_cross) << "," << format_g9(r.final_losses.l_clc)
      << "," << format_g9(r.final_total) << "," << (r.failed ? r.error : "") << "\n";
  }
  if (!f) throw FormatError("short write on metrics " + path);
}

}  // namespace upada
