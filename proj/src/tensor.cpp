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

#include "upada/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "upada/errors.hpp"

namespace upada {

double Tensor::value() const {
  if (n_rows != 1 || n_cols != 1)
    throw UsageError("scalar read on tensor of shape " + shape_str());
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  return std::to_string(n_rows) + "x" + std::to_string(n_cols);
}

TensorPtr make_tensor(std::size_t rows, std::size_t cols, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->n_rows = rows;
  t->n_cols = cols;
  t->data.assign(rows * cols, 0.0);
  t->grad.assign(rows * cols, 0.0);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr make_tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  if (values.size() != rows * cols)
    throw DimensionError("tensor init: " + std::to_string(values.size()) +
                         " values for shape " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  auto t = make_tensor(rows, cols, requires_grad);
  t->data = std::move(values);
  return t;
}

TensorPtr make_scalar(double v) { return make_tensor(1, 1, std::vector<double>{v}); }

std::vector<double> softmax_row(const double* logits, std::size_t n) {
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  std::vector<double> out(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
  return out;
}

std::size_t argmax_row(const double* values, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.n_rows != b.n_rows || a.n_cols != b.n_cols)
    throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                         b.shape_str() + " differ");
}

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double row_logsumexp(const double* z, std::size_t n) {
  double mx = z[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, z[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(z[i] - mx);
  return mx + std::log(s);
}

}  // namespace

TensorPtr Tape::record(std::vector<TensorPtr> inputs, TensorPtr output,
                       std::function<void()> pull) {
  nodes_.push_back(Node{std::move(inputs), output, std::move(pull)});
  return output;
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->n_cols != b->n_rows)
    throw DimensionError("matmul: inner dimensions of " + a->shape_str() + " and " +
                         b->shape_str() + " disagree");
  const std::size_t m = a->n_rows, k = a->n_cols, n = b->n_cols;
  auto out = make_tensor(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a->data.data() + i * k;
    double* orow = out->data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b->data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return record({a, b}, out, [a, b, out, m, k, n] {
    for (std::size_t i = 0; i < m; ++i) {
      const double* grow = out->grad.data() + i * n;
      double* agrow = a->grad.data() + i * k;
      const double* arow = a->data.data() + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b->data.data() + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        agrow[p] += acc;
        const double av = arow[p];
        double* bgrow = b->grad.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) bgrow[j] += av * grow[j];
      }
    }
  });
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("add", *a, *b);
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
  return record({a, b}, out, [a, b, out] {
    for (std::size_t i = 0; i < out->size(); ++i) {
      a->grad[i] += out->grad[i];
      b->grad[i] += out->grad[i];
    }
  });
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("sub", *a, *b);
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] - b->data[i];
  return record({a, b}, out, [a, b, out] {
    for (std::size_t i = 0; i < out->size(); ++i) {
      a->grad[i] += out->grad[i];
      b->grad[i] -= out->grad[i];
    }
  });
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("mul", *a, *b);
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
  return record({a, b}, out, [a, b, out] {
    for (std::size_t i = 0; i < out->size(); ++i) {
      a->grad[i] += out->grad[i] * b->data[i];
      b->grad[i] += out->grad[i] * a->data[i];
    }
  });
}

TensorPtr Tape::add_scalar(const TensorPtr& a, double s) {
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + s;
  return record({a}, out, [a, out] {
    for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
  });
}

TensorPtr Tape::scale(const TensorPtr& a, double s) {
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * s;
  return record({a}, out, [a, out, s] {
    for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += s * out->grad[i];
  });
}

TensorPtr Tape::add_bias(const TensorPtr& a, const TensorPtr& bias) {
  if (bias->n_rows != 1 || bias->n_cols != a->n_cols)
    throw DimensionError("add_bias: " + a->shape_str() + " with bias " + bias->shape_str());
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < a->n_rows; ++i)
    for (std::size_t j = 0; j < a->n_cols; ++j)
      out->at(i, j) = a->at(i, j) + bias->data[j];
  return record({a, bias}, out, [a, bias, out] {
    for (std::size_t i = 0; i < a->n_rows; ++i)
      for (std::size_t j = 0; j < a->n_cols; ++j) {
        a->grad_at(i, j) += out->grad_at(i, j);
        bias->grad[j] += out->grad_at(i, j);
      }
  });
}

TensorPtr Tape::relu(const TensorPtr& a) {
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < out->size(); ++i)
    out->data[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
  return record({a}, out, [a, out] {
    for (std::size_t i = 0; i < out->size(); ++i)
      if (a->data[i] > 0.0) a->grad[i] += out->grad[i];
  });
}

TensorPtr Tape::tanh(const TensorPtr& a) {
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = std::tanh(a->data[i]);
  return record({a}, out, [a, out] {
    for (std::size_t i = 0; i < out->size(); ++i)
      a->grad[i] += out->grad[i] * (1.0 - out->data[i] * out->data[i]);
  });
}

TensorPtr Tape::sigmoid(const TensorPtr& a) {
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < out->size(); ++i) {
    const double x = a->data[i];
    out->data[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                          : std::exp(x) / (1.0 + std::exp(x));
  }
  return record({a}, out, [a, out] {
    for (std::size_t i = 0; i < out->size(); ++i)
      a->grad[i] += out->grad[i] * out->data[i] * (1.0 - out->data[i]);
  });
}

TensorPtr Tape::clamp01(const TensorPtr& a) {
  auto out = make_tensor(a->n_rows, a->n_cols);
  for (std::size_t i = 0; i < out->size(); ++i)
    out->data[i] = std::clamp(a->data[i], 0.0, 1.0);
  return record({a}, out, [a, out] {
    for (std::size_t i = 0; i < out->size(); ++i)
      if (a->data[i] > 0.0 && a->data[i] < 1.0) a->grad[i] += out->grad[i];
  });
}

TensorPtr Tape::concat_cols(const TensorPtr& a, const TensorPtr& b) {
  if (a->n_rows != b->n_rows)
    throw DimensionError("concat: row counts of " + a->shape_str() + " and " +
                         b->shape_str() + " differ");
  const std::size_t m = a->n_rows, p = a->n_cols, q = b->n_cols;
  auto out = make_tensor(m, p + q);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) out->at(i, j) = a->at(i, j);
    for (std::size_t j = 0; j < q; ++j) out->at(i, p + j) = b->at(i, j);
  }
  return record({a, b}, out, [a, b, out, m, p, q] {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < p; ++j) a->grad_at(i, j) += out->grad_at(i, j);
      for (std::size_t j = 0; j < q; ++j) b->grad_at(i, j) += out->grad_at(i, p + j);
    }
  });
}

TensorPtr Tape::pad_cols(const TensorPtr& a, std::size_t width) {
  if (width < a->n_cols)
    throw DimensionError("pad_cols: target width " + std::to_string(width) +
                         " below " + a->shape_str());
  if (width == a->n_cols) return a;  // no node needed
  auto out = make_tensor(a->n_rows, width);
  for (std::size_t i = 0; i < a->n_rows; ++i)
    for (std::size_t j = 0; j < a->n_cols; ++j) out->at(i, j) = a->at(i, j);
  return record({a}, out, [a, out] {
    for (std::size_t i = 0; i < a->n_rows; ++i)
      for (std::size_t j = 0; j < a->n_cols; ++j)
        a->grad_at(i, j) += out->grad_at(i, j);
  });
}

TensorPtr Tape::sum_all(const TensorPtr& a) {
  auto out = make_tensor(1, 1);
  double s = 0.0;
  for (double v : a->data) s += v;
  out->data[0] = s;
  return record({a}, out, [a, out] {
    for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[0];
  });
}

TensorPtr Tape::mean_all(const TensorPtr& a) {
  if (a->size() == 0) throw UsageError("mean_all: empty tensor");
  auto out = make_tensor(1, 1);
  double s = 0.0;
  for (double v : a->data) s += v;
  out->data[0] = s / static_cast<double>(a->size());
  return record({a}, out, [a, out] {
    const double g = out->grad[0] / static_cast<double>(a->size());
    for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
  });
}

TensorPtr Tape::softmax_cross_entropy(const TensorPtr& logits,
                                      const std::vector<int>& labels) {
  const std::size_t m = logits->n_rows, c = logits->n_cols;
  if (labels.size() != m)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + logits->shape_str());
  if (c < 2) throw UsageError("softmax_cross_entropy: needs at least 2 classes");
  if (m == 0) throw UsageError("softmax_cross_entropy: empty batch");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw UsageError("softmax_cross_entropy: label " + std::to_string(y) +
                       " outside [0, " + std::to_string(c) + ")");
  auto out = make_tensor(1, 1);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* z = logits->data.data() + i * c;
    total += row_logsumexp(z, c) - z[labels[i]];
  }
  out->data[0] = total / static_cast<double>(m);
  return record({logits}, out, [logits, out, labels, m, c] {
    const double g = out->grad[0] / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double* z = logits->data.data() + i * c;
      auto p = softmax_row(z, c);
      double* zg = logits->grad.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) zg[j] += g * p[j];
      zg[labels[i]] -= g;
    }
  });
}

TensorPtr Tape::binary_cross_entropy(const TensorPtr& logits, double target) {
  if (logits->n_cols != 1)
    throw DimensionError("binary_cross_entropy: logits must be mx1, got " +
                         logits->shape_str());
  if (target != 0.0 && target != 1.0)
    throw UsageError("binary_cross_entropy: target must be 0 or 1");
  const std::size_t m = logits->n_rows;
  if (m == 0) throw UsageError("binary_cross_entropy: empty batch");
  auto out = make_tensor(1, 1);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double z = logits->data[i];
    // -[t log s(z) + (1-t) log(1-s(z))] = softplus(z) - t*z
    total += softplus(z) - target * z;
  }
  out->data[0] = total / static_cast<double>(m);
  return record({logits}, out, [logits, out, target, m] {
    const double g = out->grad[0] / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double z = logits->data[i];
      const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                              : std::exp(z) / (1.0 + std::exp(z));
      logits->grad[i] += g * (s - target);
    }
  });
}

TensorPtr Tape::cross_entropy_to_uniform(const TensorPtr& logits) {
  const std::size_t m = logits->n_rows, c = logits->n_cols;
  if (c < 2) throw UsageError("cross_entropy_to_uniform: needs at least 2 classes");
  if (m == 0) throw UsageError("cross_entropy_to_uniform: empty batch");
  auto out = make_tensor(1, 1);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* z = logits->data.data() + i * c;
    const double lse = row_logsumexp(z, c);
    double zbar = 0.0;
    for (std::size_t j = 0; j < c; ++j) zbar += z[j];
    total += lse - zbar / static_cast<double>(c);
  }
  out->data[0] = total / static_cast<double>(m);
  return record({logits}, out, [logits, out, m, c] {
    const double g = out->grad[0] / static_cast<double>(m);
    const double inv_c = 1.0 / static_cast<double>(c);
    for (std::size_t i = 0; i < m; ++i) {
      const double* z = logits->data.data() + i * c;
      auto p = softmax_row(z, c);
      double* zg = logits->grad.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) zg[j] += g * (p[j] - inv_c);
    }
  });
}

TensorPtr Tape::masked_row_l2(const TensorPtr& diff, const std::vector<unsigned char>& valid,
                              bool squared) {
  const std::size_t m = diff->n_rows, n = diff->n_cols;
  if (valid.size() != m)
    throw DimensionError("masked_row_l2: mask length " + std::to_string(valid.size()) +
                         " for " + diff->shape_str());
  std::size_t n_valid = 0;
  for (unsigned char v : valid) n_valid += v ? 1 : 0;
  auto out = make_tensor(1, 1);
  std::vector<double> norms(m, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!valid[i]) continue;
    double ss = 0.0;
    const double* row = diff->data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) ss += row[j] * row[j];
    norms[i] = std::sqrt(ss);
    total += squared ? ss : norms[i];
  }
  out->data[0] = n_valid ? total / static_cast<double>(n_valid) : 0.0;
  return record({diff}, out, [diff, out, valid, norms, m, n, n_valid, squared] {
    if (n_valid == 0) return;
    const double g = out->grad[0] / static_cast<double>(n_valid);
    for (std::size_t i = 0; i < m; ++i) {
      if (!valid[i]) continue;
      const double* row = diff->data.data() + i * n;
      double* grow = diff->grad.data() + i * n;
      if (squared) {
        for (std::size_t j = 0; j < n; ++j) grow[j] += g * 2.0 * row[j];
      } else if (norms[i] > 0.0) {
        const double inv = g / norms[i];
        for (std::size_t j = 0; j < n; ++j) grow[j] += inv * row[j];
      }
      // norm 0: subgradient 0
    }
  });
}

void Tape::backward(const TensorPtr& loss) {
  if (loss->n_rows != 1 || loss->n_cols != 1)
    throw UsageError("backward: loss must be scalar, got " + loss->shape_str());
  // Zero every gradient buffer that participates, then seed.
  std::unordered_set<Tensor*> seen;
  for (auto& node : nodes_) {
    for (auto& t : node.inputs)
      if (seen.insert(t.get()).second) std::fill(t->grad.begin(), t->grad.end(), 0.0);
    if (seen.insert(node.output.get()).second)
      std::fill(node.output->grad.begin(), node.output->grad.end(), 0.0);
  }
  std::fill(loss->grad.begin(), loss->grad.end(), 0.0);
  loss->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->pull();
}

}  // namespace upada
