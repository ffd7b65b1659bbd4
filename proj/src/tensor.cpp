#include "alam/tensor.hpp"

#include <cmath>

namespace alam {

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::squared_norm() const {
  double s = 0.0;
  for (double v : data) s += v * v;
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "dot: size mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) s += a.data[static_cast<size_t>(i)] * b.data[static_cast<size_t>(i)];
  return s;
}

}  // namespace alam
