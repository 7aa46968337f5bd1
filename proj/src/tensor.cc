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

#include "laser/tensor.h"

#include <cassert>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "laser/common.h"

namespace laser {

namespace {
std::int64_t product(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw NumericError("tensor: negative extent");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), numel_(product(shape_)),
      data_(static_cast<std::size_t>(numel_), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, double fill)
    : shape_(std::move(shape)), numel_(product(shape_)),
      data_(static_cast<std::size_t>(numel_), fill) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), numel_(product(shape_)), data_(std::move(data)) {
  if (numel_ != static_cast<std::int64_t>(data_.size()))
    throw NumericError("tensor: data size does not match shape " + shape_str());
}

std::int64_t Tensor::offset_of(std::initializer_list<std::int64_t> idx) const {
  assert(static_cast<int>(idx.size()) == ndim());
  std::int64_t off = 0;
  int i = 0;
  for (auto v : idx) {
    off = off * shape_[static_cast<std::size_t>(i)] + v;
    ++i;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::int64_t> idx) {
  return data_[static_cast<std::size_t>(offset_of(idx))];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
  return data_[static_cast<std::size_t>(offset_of(idx))];
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  Tensor out(std::move(shape), data_);
  return out;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i)
    os << (i ? "," : "") << shape_[i];
  os << "]";
  return os.str();
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace laser
