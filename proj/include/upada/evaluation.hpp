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

#include <string>
#include <vector>

#include "upada/faces.hpp"
#include "upada/losses.hpp"
#include "upada/model.hpp"

namespace upada {

struct AccuracyReport {
  double overall = 0.0;
  std::vector<double> per_pose;             // length P
  std::vector<std::size_t> per_pose_counts; // length P
};

// Target-domain expression accuracy of R over the target encoder's
// expression features; the per-pose breakdown uses ground-truth pose labels
// (scoring only).
AccuracyReport evaluate_accuracy(const ModelBundle& bundle, const Dataset& target_test);

struct ProbeResult {
  std::string kind;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double chance = 0.0;
};

// Linear softmax probe on frozen features: 80/20 split by seed, fixed 500
// full-batch Adam steps at lr 1e-2 from zero init. Never touches any bundle
// parameter. Single-class label sets are a usage error.
ProbeResult train_probe(const TensorPtr& features, const std::vector<int>& labels,
                        int n_classes, std::uint64_t seed, const std::string& kind);

// Frozen features of a whole dataset under one encoder.
FeaturePair encode_dataset(const ModelBundle& bundle, const Dataset& dataset,
                           const std::string& encoder);

struct DomainProbes {
  ProbeResult on_expr;  // kind "domain-on-f_e", chance 1/2
  ProbeResult on_pose;  // kind "domain-on-f_p", chance 1/2
};

// Domain probes on frozen expression/pose features of balanced
// source/target samples (source through E_s, target through E_t). Lower
// test accuracy means the adaptation made the domains harder to tell apart.
DomainProbes domain_confusion_report(const ModelBundle& bundle, const Dataset& source,
                                     const Dataset& target, std::uint64_t seed);

struct DisentanglementProbes {
  ProbeResult pose_on_expr;  // kind "pose-on-f_e", chance 1/P
  ProbeResult expr_on_pose;  // kind "expr-on-f_p", chance 1/E
};

DisentanglementProbes disentanglement_report(const ModelBundle& bundle,
                                             const Dataset& source, std::uint64_t seed);

// One row per sample: id, domain, subject, pose, expression, then the d_e
// expression-feature columns and d_p pose-feature columns. Source-domain
// rows are encoded with E_s, target rows with E_t.
void export_embeddings(const ModelBundle& bundle,
                       const std::vector<const Dataset*>& datasets,
                       const std::string& path);

struct MetricsRecord {
  std::string run_id;
  std::string mode;
  int subject = -1;
  std::uint64_t seed = 0;
  double acc_overall = 0.0;
  std::vector<double> acc_per_pose;
  ProbeResult probe_domain_fe, probe_domain_fp, probe_pose_fe, probe_expr_fp;
  double fallback_expr_rate = 0.0;
  double invalid_rate = 0.0;
  LossBreakdown final_losses;
  double final_total = 0.0;
  bool failed = false;
  std::string error;
};

void write_metrics(const std::vector<MetricsRecord>& records, const std::string& path,
                   int n_poses);

// Floating-point text used in every CSV this project writes: 9 significant
// digits.
std::string format_g9(double v);

}  // namespace upada
