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

#ifndef LASER_TENSOR_H_
#define LASER_TENSOR_H_

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace laser {

// Dense row-major tensor of doubles. Shapes are small vectors of extents;
// all arithmetic lives in the graph ops (graph.h), this is storage only.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, double fill);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const { return numel_; }
  bool defined() const { return !shape_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(std::initializer_list<std::int64_t> idx);
  double at(std::initializer_list<std::int64_t> idx) const;

  void fill(double v);
  Tensor reshaped(std::vector<std::int64_t> shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::int64_t offset_of(std::initializer_list<std::int64_t> idx) const;

  std::vector<std::int64_t> shape_;
  std::int64_t numel_ = 0;
  std::vector<double> data_;
};

}  // namespace laser

#endif  // LASER_TENSOR_H_
