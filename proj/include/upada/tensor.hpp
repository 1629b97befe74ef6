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

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace upada {

// Dense row-major 2-D tensor of 64-bit floats. Scalars are 1x1. A gradient
// buffer of identical shape is carried alongside the values; the Tape owns
// when it is zeroed and filled.
struct Tensor {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;

  std::size_t size() const { return data.size(); }
  double& at(std::size_t r, std::size_t c) { return data[r * n_cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * n_cols + c]; }
  double& grad_at(std::size_t r, std::size_t c) { return grad[r * n_cols + c]; }
  double value() const;  // scalar read; UsageError unless 1x1
  bool all_finite() const;
  std::string shape_str() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::size_t rows, std::size_t cols, bool requires_grad = false);
TensorPtr make_tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad = false);
TensorPtr make_scalar(double v);

// Row-wise softmax of raw values (no tape participation); used by
// evaluation and tests.
std::vector<double> softmax_row(const double* logits, std::size_t n);

std::size_t argmax_row(const double* values, std::size_t n);  // ties -> lowest index

// Define-by-run reverse-mode tape. Operations record a node holding their
// inputs/outputs and a pull closure; backward() replays nodes in reverse
// recording order, which is a topological order by construction.
//
// The tape never mutates tensor values during backward: it zeroes every
// involved gradient buffer first, seeds the loss gradient with 1 and
// accumulates, so repeated backward passes from the same loss are
// identical.
class Tape {
 public:
  // -- primitive operations ------------------------------------------------
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);        // same shape
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);        // same shape
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);        // same shape
  TensorPtr add_scalar(const TensorPtr& a, double s);
  TensorPtr scale(const TensorPtr& a, double s);
  TensorPtr add_bias(const TensorPtr& a, const TensorPtr& bias);  // mxn + 1xn
  TensorPtr relu(const TensorPtr& a);
  TensorPtr tanh(const TensorPtr& a);
  TensorPtr sigmoid(const TensorPtr& a);
  TensorPtr clamp01(const TensorPtr& a);
  TensorPtr concat_cols(const TensorPtr& a, const TensorPtr& b);  // row-wise
  TensorPtr pad_cols(const TensorPtr& a, std::size_t width);      // zero-pad right
  TensorPtr sum_all(const TensorPtr& a);
  TensorPtr mean_all(const TensorPtr& a);

  // -- losses (scalar outputs) ----------------------------------------------
  // Mean over rows of -log softmax(logits)[label]; log-sum-exp stabilized.
  TensorPtr softmax_cross_entropy(const TensorPtr& logits, const std::vector<int>& labels);
  // Mean over rows of the stable logit-form binary cross entropy against a
  // constant target in {0, 1}.
  TensorPtr binary_cross_entropy(const TensorPtr& logits, double target);
  // Mean over rows of -(1/C) sum_c log softmax(logits)_c. Minimum ln C at
  // uniform predictions.
  TensorPtr cross_entropy_to_uniform(const TensorPtr& logits);
  // Mean over mask-selected rows of the row Euclidean norm (or its square).
  // All-invalid mask yields 0.
  TensorPtr masked_row_l2(const TensorPtr& diff, const std::vector<unsigned char>& valid,
                          bool squared = false);

  // Reverse sweep from a scalar loss; fills .grad on every tensor that
  // participates in the recorded graph.
  void backward(const TensorPtr& loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<TensorPtr> inputs;
    TensorPtr output;
    std::function<void()> pull;
  };

  TensorPtr record(std::vector<TensorPtr> inputs, TensorPtr output,
                   std::function<void()> pull);

  std::vector<Node> nodes_;
};

}  // namespace upada
