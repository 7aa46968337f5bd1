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

#include "laser/graph.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "laser/common.h"

namespace laser {
namespace ag {

namespace {

thread_local std::int64_t g_seq = 0;

std::shared_ptr<Node> new_node(Tensor val, std::vector<Value> parents) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->seq = ++g_seq;
  n->parents.reserve(parents.size());
  for (auto& p : parents) {
    if (p.requires_grad()) n->requires_grad = true;
    n->parents.push_back(p.ptr());
  }
  return n;
}

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (!a.val().same_shape(b.val()))
    throw NumericError(std::string(op) + ": shape mismatch " +
                       a.val().shape_str() + " vs " + b.val().shape_str());
}

inline bool wants(const std::shared_ptr<Node>& n) { return n->requires_grad; }

// Biasless convolutions pass an empty-tensor constant so the parent slot is
// always a valid node.
Value bias_or_empty(const Value& b) {
  return b.defined() ? b : constant(Tensor());
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (!grad.defined()) grad = Tensor(val.shape());
  return grad;
}

Value constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->seq = ++g_seq;
  return Value(n);
}

Value leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = requires_grad;
  n->seq = ++g_seq;
  return Value(n);
}

Value make_custom(Tensor value, std::vector<Value> parents,
                  std::function<void(Node&)> backward) {
  auto n = new_node(std::move(value), std::move(parents));
  n->backward = std::move(backward);
  return Value(n);
}

Value add(const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.val();
  const double* pb = b.val().data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
  return make_custom(std::move(out), {a, b}, [](Node& n) {
    const Tensor& g = n.grad;
    for (int k = 0; k < 2; ++k) {
      auto& p = n.parents[static_cast<std::size_t>(k)];
      if (!wants(p)) continue;
      Tensor& pg = p->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
    }
  });
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.val();
  const double* pb = b.val().data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] -= pb[i];
  return make_custom(std::move(out), {a, b}, [](Node& n) {
    const Tensor& g = n.grad;
    if (wants(n.parents[0])) {
      Tensor& pg = n.parents[0]->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
    }
    if (wants(n.parents[1])) {
      Tensor& pg = n.parents[1]->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] -= g[i];
    }
  });
}

Value mul(const Value& a, const Value& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.val();
  const double* pb = b.val().data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] *= pb[i];
  return make_custom(std::move(out), {a, b}, [](Node& n) {
    const Tensor& g = n.grad;
    const Tensor& av = n.parents[0]->val;
    const Tensor& bv = n.parents[1]->val;
    if (wants(n.parents[0])) {
      Tensor& pg = n.parents[0]->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i] * bv[i];
    }
    if (wants(n.parents[1])) {
      Tensor& pg = n.parents[1]->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i] * av[i];
    }
  });
}

Value scale(const Value& a, double c) {
  Tensor out = a.val();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] *= c;
  return make_custom(std::move(out), {a}, [c](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] += c * g[i];
  });
}

Value add_bias(const Value& a, const Value& bias) {
  const Tensor& av = a.val();
  const Tensor& bv = bias.val();
  if (av.ndim() != 2 || bv.ndim() != 1 || av.dim(1) != bv.dim(0))
    throw NumericError("add_bias: want [R,C] + [C], got " + av.shape_str() +
                       " + " + bv.shape_str());
  Tensor out = av;
  const std::int64_t rows = av.dim(0), cols = av.dim(1);
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  return make_custom(std::move(out), {a, bias}, [rows, cols](Node& n) {
    const Tensor& g = n.grad;
    if (wants(n.parents[0])) {
      Tensor& pg = n.parents[0]->ensure_grad();
      for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
    }
    if (wants(n.parents[1])) {
      Tensor& pg = n.parents[1]->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) pg[c] += g[r * cols + c];
    }
  });
}

Value matmul(const Value& a, const Value& b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
    throw NumericError("matmul: bad shapes " + av.shape_str() + " x " +
                       bv.shape_str());
  const std::int64_t m = av.dim(0), k = av.dim(1), n2 = bv.dim(1);
  Tensor out({m, n2});
  const double* pa = av.data();
  const double* pb = bv.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      const double* brow = pb + kk * n2;
      double* orow = po + i * n2;
      for (std::int64_t j = 0; j < n2; ++j) orow[j] += aik * brow[j];
    }
  return make_custom(std::move(out), {a, b}, [m, k, n2](Node& n) {
    const Tensor& g = n.grad;
    const Tensor& av2 = n.parents[0]->val;
    const Tensor& bv2 = n.parents[1]->val;
    if (wants(n.parents[0])) {  // dA = G * B^T
      Tensor& pg = n.parents[0]->ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n2; ++j) {
          const double gij = g[i * n2 + j];
          for (std::int64_t kk = 0; kk < k; ++kk)
            pg[i * k + kk] += gij * bv2[kk * n2 + j];
        }
    }
    if (wants(n.parents[1])) {  // dB = A^T * G
      Tensor& pg = n.parents[1]->ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t kk = 0; kk < k; ++kk) {
          const double aik = av2[i * k + kk];
          for (std::int64_t j = 0; j < n2; ++j)
            pg[kk * n2 + j] += aik * g[i * n2 + j];
        }
    }
  });
}

Value transpose(const Value& a) {
  const Tensor& av = a.val();
  if (av.ndim() != 2) throw NumericError("transpose: want 2-d tensor");
  const std::int64_t r = av.dim(0), c = av.dim(1);
  Tensor out({c, r});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make_custom(std::move(out), {a}, [r, c](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) pg[i * c + j] += g[j * r + i];
  });
}

Value relu(const Value& a) {
  Tensor out = a.val();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i)
    if (po[i] < 0.0) po[i] = 0.0;
  return make_custom(std::move(out), {a}, [](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    const Tensor& x = n.parents[0]->val;
    for (std::int64_t i = 0; i < g.numel(); ++i)
      if (x[i] > 0.0) pg[i] += g[i];
  });
}

Value tanh_v(const Value& a) {
  Tensor out = a.val();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = std::tanh(po[i]);
  return make_custom(std::move(out), {a}, [](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    const Tensor& y = n.val;
    for (std::int64_t i = 0; i < g.numel(); ++i)
      pg[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Value softmax_rows(const Value& a) {
  const Tensor& av = a.val();
  if (av.ndim() != 2) throw NumericError("softmax_rows: want 2-d tensor");
  const std::int64_t rows = av.dim(0), cols = av.dim(1);
  Tensor out(av.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = x[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    double s = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      s += y[c];
    }
    for (std::int64_t c = 0; c < cols; ++c) y[c] /= s;
  }
  return make_custom(std::move(out), {a}, [rows, cols](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    const Tensor& y = n.val;
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * cols;
      const double* gr = g.data() + r * cols;
      double dot = 0.0;
      for (std::int64_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
      double* pgr = pg.data() + r * cols;
      for (std::int64_t c = 0; c < cols; ++c)
        pgr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Value log_floor(const Value& a, double eps) {
  Tensor out = a.val();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i)
    po[i] = std::log(std::max(po[i], eps));
  return make_custom(std::move(out), {a}, [eps](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    const Tensor& x = n.parents[0]->val;
    for (std::int64_t i = 0; i < g.numel(); ++i)
      if (x[i] > eps) pg[i] += g[i] / x[i];
  });
}

Value mean_all(const Value& a) {
  const std::int64_t n = a.val().numel();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += a.val()[i];
  Tensor out = Tensor::scalar(s / static_cast<double>(n));
  return make_custom(std::move(out), {a}, [n](Node& nd) {
    if (!wants(nd.parents[0])) return;
    Tensor& pg = nd.parents[0]->ensure_grad();
    const double g = nd.grad[0] / static_cast<double>(n);
    for (std::int64_t i = 0; i < pg.numel(); ++i) pg[i] += g;
  });
}

Value sum_all(const Value& a) {
  const std::int64_t n = a.val().numel();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += a.val()[i];
  Tensor out = Tensor::scalar(s);
  return make_custom(std::move(out), {a}, [](Node& nd) {
    if (!wants(nd.parents[0])) return;
    Tensor& pg = nd.parents[0]->ensure_grad();
    const double g = nd.grad[0];
    for (std::int64_t i = 0; i < pg.numel(); ++i) pg[i] += g;
  });
}

Value reshape(const Value& a, std::vector<std::int64_t> shape) {
  Tensor out = a.val().reshaped(std::move(shape));
  return make_custom(std::move(out), {a}, [](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) pg[i] += g[i];
  });
}

Value detach(const Value& a) { return constant(a.val()); }

Value concat_cols(const Value& a, const Value& b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(0) != bv.dim(0))
    throw NumericError("concat_cols: bad shapes " + av.shape_str() + " | " +
                       bv.shape_str());
  const std::int64_t rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out({rows, ca + cb});
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < ca; ++c)
      out[r * (ca + cb) + c] = av[r * ca + c];
    for (std::int64_t c = 0; c < cb; ++c)
      out[r * (ca + cb) + ca + c] = bv[r * cb + c];
  }
  return make_custom(std::move(out), {a, b}, [rows, ca, cb](Node& n) {
    const Tensor& g = n.grad;
    if (wants(n.parents[0])) {
      Tensor& pg = n.parents[0]->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < ca; ++c)
          pg[r * ca + c] += g[r * (ca + cb) + c];
    }
    if (wants(n.parents[1])) {
      Tensor& pg = n.parents[1]->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cb; ++c)
          pg[r * cb + c] += g[r * (ca + cb) + ca + c];
    }
  });
}

Value diag_rows(const Value& a) {
  const Tensor& av = a.val();
  if (av.ndim() != 2 || av.dim(0) != av.dim(1))
    throw NumericError("diag_rows: want square matrix");
  const std::int64_t t = av.dim(0);
  Tensor out({t, 1});
  for (std::int64_t i = 0; i < t; ++i) out[i] = av[i * t + i];
  return make_custom(std::move(out), {a}, [t](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    for (std::int64_t i = 0; i < t; ++i) pg[i * t + i] += g[i];
  });
}

Value slice_cols(const Value& a, std::int64_t start, std::int64_t len) {
  const Tensor& av = a.val();
  if (av.ndim() != 2 || start < 0 || start + len > av.dim(1))
    throw NumericError("slice_cols: bad range");
  const std::int64_t rows = av.dim(0), cols = av.dim(1);
  Tensor out({rows, len});
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < len; ++c)
      out[r * len + c] = av[r * cols + start + c];
  return make_custom(std::move(out), {a}, [rows, cols, start, len](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < len; ++c)
        pg[r * cols + start + c] += g[r * len + c];
  });
}

Value concat_channels(const Value& a, const Value& b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.ndim() != 4 || bv.ndim() != 4 || av.dim(0) != bv.dim(0) ||
      av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
    throw NumericError("concat_channels: bad shapes " + av.shape_str() +
                       " | " + bv.shape_str());
  const std::int64_t t = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  const std::int64_t hw = av.dim(2) * av.dim(3);
  Tensor out({t, ca + cb, av.dim(2), av.dim(3)});
  for (std::int64_t f = 0; f < t; ++f) {
    std::copy(av.data() + f * ca * hw, av.data() + (f + 1) * ca * hw,
              out.data() + f * (ca + cb) * hw);
    std::copy(bv.data() + f * cb * hw, bv.data() + (f + 1) * cb * hw,
              out.data() + f * (ca + cb) * hw + ca * hw);
  }
  return make_custom(std::move(out), {a, b}, [t, ca, cb, hw](Node& n) {
    const Tensor& g = n.grad;
    if (wants(n.parents[0])) {
      Tensor& pg = n.parents[0]->ensure_grad();
      for (std::int64_t f = 0; f < t; ++f)
        for (std::int64_t i = 0; i < ca * hw; ++i)
          pg[f * ca * hw + i] += g[f * (ca + cb) * hw + i];
    }
    if (wants(n.parents[1])) {
      Tensor& pg = n.parents[1]->ensure_grad();
      for (std::int64_t f = 0; f < t; ++f)
        for (std::int64_t i = 0; i < cb * hw; ++i)
          pg[f * cb * hw + i] += g[f * (ca + cb) * hw + ca * hw + i];
    }
  });
}

Value layer_norm_rows(const Value& x, const Value& gamma, const Value& beta,
                      double eps) {
  const Tensor& xv = x.val();
  if (xv.ndim() != 2 || gamma.val().dim(0) != xv.dim(1) ||
      beta.val().dim(0) != xv.dim(1))
    throw NumericError("layer_norm_rows: bad shapes");
  const std::int64_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  Tensor inv_sigma({rows});
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * cols;
    double mu = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (std::int64_t c = 0; c < cols; ++c) {
      const double xh = (xr[c] - mu) * is;
      xhat[r * cols + c] = xh;
      out[r * cols + c] = xh * gamma.val()[c] + beta.val()[c];
    }
  }
  // xhat and inv_sigma are captured for the backward pass.
  return make_custom(
      std::move(out), {x, gamma, beta},
      [rows, cols, xhat = std::move(xhat),
       inv_sigma = std::move(inv_sigma)](Node& n) {
        const Tensor& g = n.grad;
        const Tensor& gam = n.parents[1]->val;
        if (wants(n.parents[0])) {
          Tensor& pg = n.parents[0]->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * cols;
            const double* xh = xhat.data() + r * cols;
            double m1 = 0.0, m2 = 0.0;
            for (std::int64_t c = 0; c < cols; ++c) {
              const double gy = gr[c] * gam[c];
              m1 += gy;
              m2 += gy * xh[c];
            }
            m1 /= static_cast<double>(cols);
            m2 /= static_cast<double>(cols);
            const double is = inv_sigma[r];
            for (std::int64_t c = 0; c < cols; ++c) {
              const double gy = gr[c] * gam[c];
              pg[r * cols + c] += is * (gy - m1 - xh[c] * m2);
            }
          }
        }
        if (wants(n.parents[1])) {
          Tensor& pg = n.parents[1]->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c)
              pg[c] += g[r * cols + c] * xhat[r * cols + c];
        }
        if (wants(n.parents[2])) {
          Tensor& pg = n.parents[2]->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c) pg[c] += g[r * cols + c];
        }
      });
}

Value center_time(const Value& x) {
  const Tensor& xv = x.val();
  if (xv.ndim() != 2) throw NumericError("center_time: want [T,C]");
  const std::int64_t t = xv.dim(0), c = xv.dim(1);
  Tensor out(xv.shape());
  for (std::int64_t j = 0; j < c; ++j) {
    double mu = 0.0;
    for (std::int64_t i = 0; i < t; ++i) mu += xv[i * c + j];
    mu /= static_cast<double>(t);
    for (std::int64_t i = 0; i < t; ++i) out[i * c + j] = xv[i * c + j] - mu;
  }
  return make_custom(std::move(out), {x}, [t, c](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    for (std::int64_t j = 0; j < c; ++j) {
      double gm = 0.0;
      for (std::int64_t i = 0; i < t; ++i) gm += g[i * c + j];
      gm /= static_cast<double>(t);
      for (std::int64_t i = 0; i < t; ++i) pg[i * c + j] += g[i * c + j] - gm;
    }
  });
}

Value conv3d(const Value& x, const Value& w, const Value& b) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  if (xv.ndim() != 4 || wv.ndim() != 5 || wv.dim(1) != xv.dim(1))
    throw NumericError("conv3d: bad shapes " + xv.shape_str() + " conv " +
                       wv.shape_str());
  const std::int64_t t = xv.dim(0), ci = xv.dim(1), h = xv.dim(2),
                     wd = xv.dim(3);
  const std::int64_t co = wv.dim(0), kt = wv.dim(2), kh = wv.dim(3),
                     kw = wv.dim(4);
  const std::int64_t pt = kt / 2, ph = kh / 2, pw = kw / 2;
  const Value bin = bias_or_empty(b);
  const bool has_bias = bin.val().defined();
  Tensor out({t, co, h, wd});
  const double* px = xv.data();
  const double* pw_ = wv.data();
  double* po = out.data();
  for (std::int64_t f = 0; f < t; ++f)
    for (std::int64_t oc = 0; oc < co; ++oc) {
      double* oplane = po + (f * co + oc) * h * wd;
      const double bias = has_bias ? bin.val()[oc] : 0.0;
      for (std::int64_t i = 0; i < h * wd; ++i) oplane[i] = bias;
      for (std::int64_t ft = 0; ft < kt; ++ft) {
        const std::int64_t sf = f + ft - pt;
        if (sf < 0 || sf >= t) continue;
        for (std::int64_t ic = 0; ic < ci; ++ic) {
          const double* xplane = px + (sf * ci + ic) * h * wd;
          const double* wk = pw_ + (((oc * ci + ic) * kt + ft) * kh) * kw;
          for (std::int64_t fy = 0; fy < kh; ++fy)
            for (std::int64_t fx = 0; fx < kw; ++fx) {
              const double wval = wk[fy * kw + fx];
              for (std::int64_t oy = 0; oy < h; ++oy) {
                const std::int64_t iy = oy + fy - ph;
                if (iy < 0 || iy >= h) continue;
                const std::int64_t x0 = fx - pw;
                const std::int64_t lo = std::max<std::int64_t>(0, -x0);
                const std::int64_t hi = std::min(wd, wd - x0);
                const double* xrow = xplane + iy * wd + x0;
                double* orow = oplane + oy * wd;
                for (std::int64_t ox = lo; ox < hi; ++ox)
                  orow[ox] += wval * xrow[ox];
              }
            }
        }
      }
    }
  return make_custom(
      std::move(out), {x, w, bin}, [t, ci, h, wd, co, kt, kh, kw](Node& n) {
        const std::int64_t pt = kt / 2, ph = kh / 2, pw = kw / 2;
        const Tensor& g = n.grad;
        const Tensor& xv2 = n.parents[0]->val;
        const Tensor& wv2 = n.parents[1]->val;
        const bool gx = wants(n.parents[0]);
        const bool gw = wants(n.parents[1]);
        const bool gb = n.parents[2]->val.defined() && wants(n.parents[2]);
        Tensor* dx = gx ? &n.parents[0]->ensure_grad() : nullptr;
        Tensor* dw = gw ? &n.parents[1]->ensure_grad() : nullptr;
        Tensor* db = gb ? &n.parents[2]->ensure_grad() : nullptr;
        for (std::int64_t f = 0; f < t; ++f)
          for (std::int64_t oc = 0; oc < co; ++oc) {
            const double* gplane = g.data() + (f * co + oc) * h * wd;
            if (db)
              for (std::int64_t i = 0; i < h * wd; ++i)
                (*db)[oc] += gplane[i];
            if (!gx && !gw) continue;
            for (std::int64_t ft = 0; ft < kt; ++ft) {
              const std::int64_t sf = f + ft - pt;
              if (sf < 0 || sf >= t) continue;
              for (std::int64_t ic = 0; ic < ci; ++ic) {
                const double* xplane = xv2.data() + (sf * ci + ic) * h * wd;
                double* dxplane =
                    gx ? dx->data() + (sf * ci + ic) * h * wd : nullptr;
                for (std::int64_t fy = 0; fy < kh; ++fy)
                  for (std::int64_t fx = 0; fx < kw; ++fx) {
                    const std::int64_t widx =
                        (((oc * ci + ic) * kt + ft) * kh + fy) * kw + fx;
                    const double wval = wv2[widx];
                    double wacc = 0.0;
                    for (std::int64_t oy = 0; oy < h; ++oy) {
                      const std::int64_t iy = oy + fy - ph;
                      if (iy < 0 || iy >= h) continue;
                      const std::int64_t x0 = fx - pw;
                      const std::int64_t lo = std::max<std::int64_t>(0, -x0);
                      const std::int64_t hi = std::min(wd, wd - x0);
                      const double* grow = gplane + oy * wd;
                      const double* xrow = xplane + iy * wd + x0;
                      if (gw)
                        for (std::int64_t ox = lo; ox < hi; ++ox)
                          wacc += grow[ox] * xrow[ox];
                      if (gx) {
                        double* dxrow = dxplane + iy * wd + x0;
                        for (std::int64_t ox = lo; ox < hi; ++ox)
                          dxrow[ox] += grow[ox] * wval;
                      }
                    }
                    if (gw) (*dw)[widx] += wacc;
                  }
              }
            }
          }
      });
}

Value conv2d(const Value& x, const Value& w, const Value& b, int stride,
             int pad) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  if (xv.ndim() != 4 || wv.ndim() != 4 || wv.dim(1) != xv.dim(1))
    throw NumericError("conv2d: bad shapes " + xv.shape_str() + " conv " +
                       wv.shape_str());
  const std::int64_t t = xv.dim(0), ci = xv.dim(1), h = xv.dim(2),
                     wd = xv.dim(3);
  const std::int64_t co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  const std::int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::int64_t ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh < 1 || ow < 1) throw NumericError("conv2d: empty output");
  const Value bin = bias_or_empty(b);
  const bool has_bias = bin.val().defined();
  Tensor out({t, co, oh, ow});
  for (std::int64_t f = 0; f < t; ++f)
    for (std::int64_t oc = 0; oc < co; ++oc) {
      double* oplane = out.data() + (f * co + oc) * oh * ow;
      const double bias = has_bias ? bin.val()[oc] : 0.0;
      for (std::int64_t i = 0; i < oh * ow; ++i) oplane[i] = bias;
      for (std::int64_t ic = 0; ic < ci; ++ic) {
        const double* xplane = xv.data() + (f * ci + ic) * h * wd;
        const double* wk = wv.data() + (oc * ci + ic) * kh * kw;
        for (std::int64_t fy = 0; fy < kh; ++fy)
          for (std::int64_t fx = 0; fx < kw; ++fx) {
            const double wval = wk[fy * kw + fx];
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const std::int64_t iy = oy * stride + fy - pad;
              if (iy < 0 || iy >= h) continue;
              double* orow = oplane + oy * ow;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t ix = ox * stride + fx - pad;
                if (ix < 0 || ix >= wd) continue;
                orow[ox] += wval * xplane[iy * wd + ix];
              }
            }
          }
      }
    }
  return make_custom(
      std::move(out), {x, w, bin},
      [t, ci, h, wd, co, kh, kw, stride, pad, oh, ow](Node& n) {
        const Tensor& g = n.grad;
        const Tensor& xv2 = n.parents[0]->val;
        const Tensor& wv2 = n.parents[1]->val;
        const bool gx = wants(n.parents[0]);
        const bool gw = wants(n.parents[1]);
        const bool gb = n.parents[2]->val.defined() && wants(n.parents[2]);
        Tensor* dx = gx ? &n.parents[0]->ensure_grad() : nullptr;
        Tensor* dw = gw ? &n.parents[1]->ensure_grad() : nullptr;
        Tensor* db = gb ? &n.parents[2]->ensure_grad() : nullptr;
        for (std::int64_t f = 0; f < t; ++f)
          for (std::int64_t oc = 0; oc < co; ++oc) {
            const double* gplane = g.data() + (f * co + oc) * oh * ow;
            if (db)
              for (std::int64_t i = 0; i < oh * ow; ++i)
                (*db)[oc] += gplane[i];
            if (!gx && !gw) continue;
            for (std::int64_t ic = 0; ic < ci; ++ic) {
              const double* xplane = xv2.data() + (f * ci + ic) * h * wd;
              double* dxplane =
                  gx ? dx->data() + (f * ci + ic) * h * wd : nullptr;
              for (std::int64_t fy = 0; fy < kh; ++fy)
                for (std::int64_t fx = 0; fx < kw; ++fx) {
                  const std::int64_t widx = (oc * ci + ic) * kh * kw +
                                            fy * kw + fx;
                  const double wval = wv2[widx];
                  double wacc = 0.0;
                  for (std::int64_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = oy * stride + fy - pad;
                    if (iy < 0 || iy >= h) continue;
                    const double* grow = gplane + oy * ow;
                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                      const std::int64_t ix = ox * stride + fx - pad;
                      if (ix < 0 || ix >= wd) continue;
                      if (gw) wacc += grow[ox] * xplane[iy * wd + ix];
                      if (gx) dxplane[iy * wd + ix] += grow[ox] * wval;
                    }
                  }
                  if (gw) (*dw)[widx] += wacc;
                }
            }
          }
      });
}

Value conv1d(const Value& x, const Value& w, const Value& b, int stride,
             int pad) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  if (xv.ndim() != 2 || wv.ndim() != 3 || wv.dim(1) != xv.dim(1))
    throw NumericError("conv1d: bad shapes " + xv.shape_str() + " conv " +
                       wv.shape_str());
  const std::int64_t len = xv.dim(0), ci = xv.dim(1);
  const std::int64_t co = wv.dim(0), k = wv.dim(2);
  const std::int64_t olen = (len + 2 * pad - k) / stride + 1;
  if (olen < 1) throw NumericError("conv1d: empty output");
  const Value bin = bias_or_empty(b);
  const bool has_bias = bin.val().defined();
  Tensor out({olen, co});
  for (std::int64_t o = 0; o < olen; ++o)
    for (std::int64_t oc = 0; oc < co; ++oc) {
      double acc = has_bias ? bin.val()[oc] : 0.0;
      for (std::int64_t f = 0; f < k; ++f) {
        const std::int64_t i = o * stride + f - pad;
        if (i < 0 || i >= len) continue;
        const double* xrow = xv.data() + i * ci;
        const double* wrow = wv.data() + (oc * ci) * k + f;
        // weight layout [co, ci, k]
        for (std::int64_t ic = 0; ic < ci; ++ic)
          acc += xrow[ic] * wrow[ic * k];
      }
      out[o * co + oc] = acc;
    }
  return make_custom(
      std::move(out), {x, w, bin}, [len, ci, co, k, stride, pad](Node& n) {
        const std::int64_t olen = n.val.dim(0);
        const Tensor& g = n.grad;
        const Tensor& xv2 = n.parents[0]->val;
        const Tensor& wv2 = n.parents[1]->val;
        const bool gx = wants(n.parents[0]);
        const bool gw = wants(n.parents[1]);
        const bool gb = n.parents[2]->val.defined() && wants(n.parents[2]);
        Tensor* dx = gx ? &n.parents[0]->ensure_grad() : nullptr;
        Tensor* dw = gw ? &n.parents[1]->ensure_grad() : nullptr;
        Tensor* db = gb ? &n.parents[2]->ensure_grad() : nullptr;
        for (std::int64_t o = 0; o < olen; ++o)
          for (std::int64_t oc = 0; oc < co; ++oc) {
            const double go = g[o * co + oc];
            if (db) (*db)[oc] += go;
            for (std::int64_t f = 0; f < k; ++f) {
              const std::int64_t i = o * stride + f - pad;
              if (i < 0 || i >= len) continue;
              for (std::int64_t ic = 0; ic < ci; ++ic) {
                if (gw) (*dw)[(oc * ci + ic) * k + f] += go * xv2[i * ci + ic];
                if (gx) (*dx)[i * ci + ic] += go * wv2[(oc * ci + ic) * k + f];
              }
            }
          }
      });
}

Value global_avg_pool(const Value& x) {
  const Tensor& xv = x.val();
  if (xv.ndim() != 4) throw NumericError("global_avg_pool: want [T,C,H,W]");
  const std::int64_t t = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out({t, c});
  for (std::int64_t f = 0; f < t; ++f)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double* plane = xv.data() + (f * c + ch) * hw;
      double s = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) s += plane[i];
      out[f * c + ch] = s / static_cast<double>(hw);
    }
  return make_custom(std::move(out), {x}, [t, c, hw](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    for (std::int64_t f = 0; f < t; ++f)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double gv = g[f * c + ch] / static_cast<double>(hw);
        double* plane = pg.data() + (f * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) plane[i] += gv;
      }
  });
}

Value region_avg_pool(const Value& x, int r) {
  const Tensor& xv = x.val();
  if (xv.ndim() != 4) throw NumericError("region_avg_pool: want [T,C,H,W]");
  if (r < 1 || r > xv.dim(2) || r > xv.dim(3))
    throw NumericError("region_avg_pool: bad region count");
  const std::int64_t t = xv.dim(0), c = xv.dim(1), h = xv.dim(2),
                     w = xv.dim(3);
  Tensor out({t, c * r * r});
  // Region edges by rounded fractions, covering the grid exactly.
  auto edge = [&](std::int64_t extent, int i) {
    return (extent * i) / r;
  };
  for (std::int64_t f = 0; f < t; ++f)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double* plane = xv.data() + (f * c + ch) * h * w;
      for (int ry = 0; ry < r; ++ry)
        for (int rx = 0; rx < r; ++rx) {
          const std::int64_t y0 = edge(h, ry), y1 = edge(h, ry + 1);
          const std::int64_t x0 = edge(w, rx), x1 = edge(w, rx + 1);
          double acc = 0.0;
          for (std::int64_t i = y0; i < y1; ++i)
            for (std::int64_t j = x0; j < x1; ++j) acc += plane[i * w + j];
          const std::int64_t n = (y1 - y0) * (x1 - x0);
          out[f * c * r * r + ch * r * r + ry * r + rx] =
              acc / static_cast<double>(std::max<std::int64_t>(1, n));
        }
    }
  return make_custom(std::move(out), {x}, [t, c, h, w, r](Node& n) {
    if (!wants(n.parents[0])) return;
    Tensor& pg = n.parents[0]->ensure_grad();
    const Tensor& g = n.grad;
    auto edge = [&](std::int64_t extent, int i) { return (extent * i) / r; };
    for (std::int64_t f = 0; f < t; ++f)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double* plane = pg.data() + (f * c + ch) * h * w;
        for (int ry = 0; ry < r; ++ry)
          for (int rx = 0; rx < r; ++rx) {
            const std::int64_t y0 = edge(h, ry), y1 = edge(h, ry + 1);
            const std::int64_t x0 = edge(w, rx), x1 = edge(w, rx + 1);
            const std::int64_t cnt = (y1 - y0) * (x1 - x0);
            if (cnt == 0) continue;
            const double gv = g[f * c * r * r + ch * r * r + ry * r + rx] /
                              static_cast<double>(cnt);
            for (std::int64_t i = y0; i < y1; ++i)
              for (std::int64_t j = x0; j < x1; ++j) plane[i * w + j] += gv;
          }
      }
  });
}

void backward(const Value& root) {
  if (root.val().numel() != 1)
    throw NumericError("backward: root must be scalar");
  if (!root.requires_grad()) return;
  // Collect reachable grad-requiring nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node()};
  seen.insert(root.node());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second)
        stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });
  root.node()->ensure_grad()[0] = 1.0;
  for (Node* n : order)
    if (n->backward && n->grad.defined()) n->backward(*n);
}

}  // namespace ag
}  // namespace laser
