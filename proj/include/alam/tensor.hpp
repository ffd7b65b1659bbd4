#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "alam/common.hpp"

namespace alam {

// Dense row-major double tensor. Most of the model math treats tensors as
// 2-D matrices; images flow through as [H, W, C].
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel(shape), 0.0) {}
  Tensor(std::initializer_list<int> s) : Tensor(std::vector<int>(s)) {}

  static int64_t numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t({1, 1});
    t.data[0] = v;
    return t;
  }
  static Tensor from(std::vector<int> s, std::vector<double> d) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(d);
    require(static_cast<int64_t>(t.data.size()) == numel(t.shape), "tensor data/shape mismatch");
    return t;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  // 2-D helpers; a 1-D tensor is treated as a single row.
  int rows() const { return ndim() >= 2 ? shape[0] : 1; }
  int cols() const {
    if (ndim() == 0) return 0;
    int64_t c = 1;
    for (int i = ndim() >= 2 ? 1 : 0; i < ndim(); ++i) c *= shape[static_cast<size_t>(i)];
    return static_cast<int>(c);
  }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }
  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const;
  double squared_norm() const;
};

// Misc small helpers shared across modules.
double dot(const Tensor& a, const Tensor& b);

}  // namespace alam
