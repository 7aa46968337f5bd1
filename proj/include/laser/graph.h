// Copyright 2026 The LASER Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#ifndef LASER_GRAPH_H_
#define LASER_GRAPH_H_

#include <functional>
#include <memory>
#include <vector>

#include "laser/tensor.h"

namespace laser {
namespace ag {

// Reverse-mode autodiff over Tensor. A Value is a handle to a graph node;
// ops build nodes forward, backward() walks them in reverse creation order.
// Graphs are thread-confined: build and differentiate a graph on one thread.

struct Node {
  Tensor val;
  Tensor grad;                      // allocated on first accumulation
  bool requires_grad = false;
  std::int64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad();
};

class Value {
 public:
  Value() = default;
  explicit Value(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  bool defined() const { return n_ != nullptr; }
  const Tensor& val() const { return n_->val; }
  Tensor& grad() { return n_->ensure_grad(); }
  const Tensor& grad_or_empty() const { return n_->grad; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  Node* node() const { return n_.get(); }
  const std::shared_ptr<Node>& ptr() const { return n_; }

  double scalar() const { return n_->val[0]; }

 private:
  std::shared_ptr<Node> n_;
};

// Leaves.
Value constant(Tensor t);
Value leaf(Tensor t, bool requires_grad);

// Custom node; `backward` receives the node itself (grad + parents).
Value make_custom(Tensor value, std::vector<Value> parents,
                  std::function<void(Node&)> backward);

// Elementwise / linear algebra.
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double c);
Value add_bias(const Value& a, const Value& bias);  // [R,C] + [C]
Value matmul(const Value& a, const Value& b);       // [M,K]x[K,N]
Value transpose(const Value& a);                    // [R,C] -> [C,R]
Value relu(const Value& a);
Value tanh_v(const Value& a);
Value softmax_rows(const Value& a);
Value log_floor(const Value& a, double eps);
Value mean_all(const Value& a);   // -> [1]
Value sum_all(const Value& a);    // -> [1]
Value reshape(const Value& a, std::vector<std::int64_t> shape);
Value detach(const Value& a);

// Slicing / concatenation.
Value concat_cols(const Value& a, const Value& b);               // [R,Ca]+[R,Cb]
Value diag_rows(const Value& a);                                 // [T,T] -> [T,1]
Value slice_cols(const Value& a, std::int64_t start, std::int64_t len);
Value concat_channels(const Value& a, const Value& b);           // [T,C,H,W]

// Row-wise layer norm with affine parameters gamma, beta of shape [C].
Value layer_norm_rows(const Value& x, const Value& gamma, const Value& beta,
                      double eps = 1e-5);

// Subtracts each column's mean over rows: out[t,c] = x[t,c] - mean_t x[:,c].
// Removes static (per-sequence) structure, keeping temporal dynamics.
Value center_time(const Value& x);

// Convolutions. Video tensors are [T, C, H, W]; sequences are [L, C].
// conv3d: odd cubic kernel, stride 1, same padding in all three dims.
Value conv3d(const Value& x, const Value& w, const Value& b);
// conv2d applied per frame: weight [Co, Ci, kh, kw].
Value conv2d(const Value& x, const Value& w, const Value& b, int stride,
             int pad);
// conv1d over the leading axis: weight [Co, Ci, k].
Value conv1d(const Value& x, const Value& w, const Value& b, int stride,
             int pad);
Value global_avg_pool(const Value& x);  // [T,C,H,W] -> [T,C]
// Average over an r x r grid of spatial regions: [T,C,H,W] -> [T, C*r*r].
// Keeps coarse position information that global pooling discards.
Value region_avg_pool(const Value& x, int r);

// Runs reverse-mode accumulation from a scalar root.
void backward(const Value& root);

}  // namespace ag
}  // namespace laser

#endif  // LASER_GRAPH_H_
