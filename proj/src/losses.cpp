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

#include "upada/losses.hpp"

#include "upada/errors.hpp"

namespace upada {

void LossWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0 || eta < 0)
    throw ConfigError("loss weights must be non-negative");
}

double joint_objective(const LossBreakdown& b, const LossWeights& w, ObjectiveRole role) {
  w.validate();
  if (role == ObjectiveRole::Discriminator) return b.l_adv_d + b.l_p;
  return b.l_p + w.alpha * b.l_e + w.eta * b.l_clc + w.beta * b.l_adv_g +
         w.gamma * b.l_cross;
}

namespace {

void require_source_labels(const SourceBatch& batch, bool need_pose, bool need_expr) {
  if (batch.size() == 0) throw UsageError("loss: empty source batch");
  if (need_pose && batch.pose.size() != batch.size())
    throw UsageError("loss: source batch lacks pose labels");
  if (need_expr && batch.expression.size() != batch.size())
    throw UsageError("loss: source batch lacks expression labels");
}

}  // namespace

TensorPtr loss_pose(Tape& tape, const ModelBundle& bundle, const SourceBatch& batch) {
  require_source_labels(batch, /*need_pose=*/true, /*need_expr=*/false);
  auto f = bundle.encode(tape, "E_s", batch.images);
  return tape.softmax_cross_entropy(bundle.pose_logits(tape, f.pose), batch.pose);
}

TensorPtr loss_expr(Tape& tape, const ModelBundle& bundle, const SourceBatch& batch) {
  require_source_labels(batch, /*need_pose=*/false, /*need_expr=*/true);
  auto f = bundle.encode(tape, "E_s", batch.images);
  return tape.softmax_cross_entropy(bundle.expr_logits(tape, f.expr), batch.expression);
}

namespace {

TensorPtr adversarial_sum(Tape& tape, const ModelBundle& bundle, const SourceBatch& sb,
                          const TargetBatch& tb, double source_target_label) {
  if (sb.size() == 0 || tb.size() == 0)
    throw UsageError("adversarial loss: empty batch");
  auto fs = bundle.encode(tape, "E_s", sb.images);
  auto ft = bundle.encode(tape, "E_t", tb.images);
  const double s_lab = source_target_label;
  const double t_lab = 1.0 - source_target_label;
  auto term =
      tape.add(tape.binary_cross_entropy(bundle.domain_logits_expr(tape, fs.expr), s_lab),
               tape.binary_cross_entropy(bundle.domain_logits_expr(tape, ft.expr), t_lab));
  term = tape.add(
      term, tape.binary_cross_entropy(bundle.domain_logits_pose(tape, fs.pose), s_lab));
  return tape.add(
      term, tape.binary_cross_entropy(bundle.domain_logits_pose(tape, ft.pose), t_lab));
}

}  // namespace

TensorPtr loss_adv_discriminator(Tape& tape, const ModelBundle& bundle,
                                 const SourceBatch& sb, const TargetBatch& tb) {
  return adversarial_sum(tape, bundle, sb, tb, /*source_target_label=*/1.0);
}

TensorPtr loss_adv_encoder(Tape& tape, const ModelBundle& bundle, const SourceBatch& sb,
                           const TargetBatch& tb) {
  return adversarial_sum(tape, bundle, sb, tb, /*source_target_label=*/0.0);
}

TensorPtr loss_cross(Tape& tape, const ModelBundle& bundle, const SourceBatch& batch,
                     ConfusionMode mode) {
  require_source_labels(batch, mode == ConfusionMode::Ascent,
                        mode == ConfusionMode::Ascent);
  if (batch.size() == 0) throw UsageError("loss: empty source batch");
  auto f = bundle.encode(tape, "E_s", batch.images);
  auto expr_logits_on_pose = bundle.expr_logits(tape, f.pose);
  auto pose_logits_on_expr = bundle.pose_logits(tape, f.expr);
  if (mode == ConfusionMode::Uniform) {
    return tape.add(tape.cross_entropy_to_uniform(expr_logits_on_pose),
                    tape.cross_entropy_to_uniform(pose_logits_on_expr));
  }
  // Ascent: descend the negated true-label cross entropies.
  auto ce = tape.add(
      tape.softmax_cross_entropy(expr_logits_on_pose, batch.expression),
      tape.softmax_cross_entropy(pose_logits_on_expr, batch.pose));
  return tape.scale(ce, -1.0);
}

TensorPtr loss_cross_heads(Tape& tape, const ModelBundle& bundle,
                           const SourceBatch& batch) {
  require_source_labels(batch, /*need_pose=*/true, /*need_expr=*/true);
  auto f = bundle.encode(tape, "E_s", batch.images);
  return tape.add(
      tape.softmax_cross_entropy(bundle.expr_logits(tape, f.pose), batch.expression),
      tape.softmax_cross_entropy(bundle.pose_logits(tape, f.expr), batch.pose));
}

ReconTargets sample_recon_targets(const SourceBatch& sb, const TargetBatch& tb,
                                  const PseudoLabels& pseudo, const Dataset& source,
                                  const LabelIndex& target_pseudo_index,
                                  const Dataset& target_train, Rng& rng) {
  const std::size_t m = sb.size();
  if (tb.size() != m) throw UsageError("recon pairing: batch sizes differ");
  if (pseudo.expression.size() != m || pseudo.pose.size() != m)
    throw UsageError("recon pairing: pseudo labels missing for target batch");

  ReconTargets out;
  out.valid.assign(m, 0);
  const std::size_t px = source.spec().pixels();
  out.source_like = make_tensor(m, px);
  out.target_like = make_tensor(m, px);

  for (std::size_t i = 0; i < m; ++i) {
    // Source-like: pose of the source sample, pseudo expression of the target.
    auto j = source.lookup_by_labels(sb.pose[i], pseudo.expression[i], rng);
    if (!j) {
      j = source.label_index().lookup_expression_only(pseudo.expression[i], rng);
      if (j) ++out.expr_only_fallbacks;
    }
    // Target-like: pseudo pose of the target, expression of the source; the
    // index is built over pseudo labels of the whole target-train split.
    auto k = target_pseudo_index.lookup(pseudo.pose[i], sb.expression[i], rng);
    if (!k) {
      k = target_pseudo_index.lookup_expression_only(sb.expression[i], rng);
      if (k) ++out.expr_only_fallbacks;
    }
    if (!j || !k) {
      ++out.invalid_pairs;
      continue;
    }
    out.valid[i] = 1;
    const auto& src_img = source.sample(*j).image;
    const auto& tgt_img = target_train.sample(*k).image;
    for (std::size_t c = 0; c < px; ++c) {
      out.source_like->data[i * px + c] = src_img[c];
      out.target_like->data[i * px + c] = tgt_img[c];
    }
  }
  return out;
}

TensorPtr loss_recon(Tape& tape, const ModelBundle& bundle, const SourceBatch& sb,
                     const TargetBatch& tb, const ReconTargets& targets, ReconNorm norm,
                     bool* all_invalid) {
  const std::size_t m = sb.size();
  if (tb.size() != m || targets.valid.size() != m)
    throw UsageError("recon loss: batch/target sizes differ");
  std::size_t n_valid = 0;
  for (auto v : targets.valid) n_valid += v ? 1 : 0;
  if (all_invalid) *all_invalid = (n_valid == 0);

  auto fs = bundle.encode(tape, "E_s", sb.images);
  auto ft = bundle.encode(tape, "E_t", tb.images);
  auto fake_source = bundle.generate(tape, "G_s", fs.pose, ft.expr);
  auto fake_target = bundle.generate(tape, "G_t", ft.pose, fs.expr);
  const bool squared = norm == ReconNorm::Squared;
  auto a = tape.masked_row_l2(tape.sub(fake_source, targets.source_like), targets.valid,
                              squared);
  auto b = tape.masked_row_l2(tape.sub(fake_target, targets.target_like), targets.valid,
                              squared);
  return tape.add(a, b);
}

}  // namespace upada
