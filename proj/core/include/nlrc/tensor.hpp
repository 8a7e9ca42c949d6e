// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#ifndef NLRC_TENSOR_HPP_
#define NLRC_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlrc {

// Dense row-major tensor of doubles, up to 4 dimensions.  All model math
// runs in double so the entropy decoder can reproduce the encoder's
// probabilities bit for bit.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<uint32_t> dims) : dims_(std::move(dims)) {
    data_.assign(element_count(), 0.0);
  }
  Tensor(std::initializer_list<uint32_t> dims)
      : Tensor(std::vector<uint32_t>(dims)) {}

  const std::vector<uint32_t>& dims() const { return dims_; }
  size_t rank() const { return dims_.size(); }
  size_t size() const { return data_.size(); }

  size_t element_count() const {
    size_t n = 1;
    for (uint32_t d : dims_) n *= d;
    return dims_.empty() ? 0 : n;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  // 2-D indexing (rows x cols).
  double& at(size_t i, size_t j) { return data_[i * dims_[1] + j]; }
  double at(size_t i, size_t j) const { return data_[i * dims_[1] + j]; }

  // 4-D indexing (e.g. [out_ch][in_ch][ky][kx] for conv kernels).
  double& at(size_t a, size_t b, size_t c, size_t d) {
    return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
  }
  double at(size_t a, size_t b, size_t c, size_t d) const {
    return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

 private:
  std::vector<uint32_t> dims_;
  std::vector<double> data_;
};

}  // namespace nlrc

#endif  // NLRC_TENSOR_HPP_
