#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "alam/autograd.hpp"
#include "alam/rng.hpp"
#include "alam/tensor.hpp"

namespace testutil {

using alam::Rng;
using alam::Tensor;

// Builds a scalar loss from leased leaves; used by the directional check.
using LossFn = std::function<int(alam::ag::Tape&, const std::vector<int>&)>;

struct GradCheck {
  double analytic = 0.0;
  double numeric = 0.0;
  bool ok(double rtol, double atol) const {
    return std::fabs(analytic - numeric) <= atol + rtol * std::fabs(numeric);
  }
};

inline double eval_loss(const LossFn& f, const std::vector<Tensor>& xs) {
  alam::ag::Tape t;
  std::vector<int> ids;
  ids.reserve(xs.size());
  for (const auto& x : xs) ids.push_back(t.leaf(x, false));
  return t.val(f(t, ids)).data[0];
}

// Central-difference directional derivative vs. tape gradient, one random
// unit direction spanning all leaves. This is the independent oracle for
// every analytic backward pass in the library.
inline GradCheck directional_gradcheck(const LossFn& f, std::vector<Tensor> xs, uint64_t seed,
                                       double eps = 1e-5) {
  Rng rng(seed);
  std::vector<Tensor> dir;
  double norm2 = 0.0;
  for (const auto& x : xs) {
    Tensor d(x.shape);
    for (auto& v : d.data) v = rng.normal();
    norm2 += d.squared_norm();
    dir.push_back(std::move(d));
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& d : dir)
    for (auto& v : d.data) v *= inv;

  GradCheck r;
  {
    alam::ag::Tape t;
    std::vector<int> ids;
    for (const auto& x : xs) ids.push_back(t.leaf(x, true));
    const int loss = f(t, ids);
    t.backward(loss);
    for (size_t i = 0; i < xs.size(); ++i) {
      if (!t.has_grad(ids[i])) continue;
      r.analytic += alam::dot(t.grad(ids[i]), dir[i]);
    }
  }
  std::vector<Tensor> plus = xs, minus = xs;
  for (size_t i = 0; i < xs.size(); ++i) {
    for (int64_t j = 0; j < xs[i].size(); ++j) {
      plus[i].data[static_cast<size_t>(j)] += eps * dir[i].data[static_cast<size_t>(j)];
      minus[i].data[static_cast<size_t>(j)] -= eps * dir[i].data[static_cast<size_t>(j)];
    }
  }
  r.numeric = (eval_loss(f, plus) - eval_loss(f, minus)) / (2.0 * eps);
  return r;
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.normal(0.0, scale);
  return t;
}

}  // namespace testutil

#include "alam/nn.hpp"

namespace testutil {

// Per-parameter-group directional check: every entry of the store gets its
// own random direction and its own central-difference evaluation.
struct GroupCheck {
  std::string name;
  GradCheck res;
};

using BoundLossFn = std::function<int(alam::ag::Tape&, const alam::nn::Bound&)>;

inline std::vector<GroupCheck> per_group_gradcheck(const alam::nn::ParamStore& params,
                                                   const BoundLossFn& loss_fn, uint64_t seed,
                                                   double eps = 1e-5) {
  namespace nn = alam::nn;
  std::vector<Tensor> analytic;
  {
    alam::ag::Tape t;
    nn::Bound b = nn::bind(t, params, true);
    const int loss = loss_fn(t, b);
    t.backward(loss);
    analytic = nn::collect_grads(t, b);
  }
  auto eval_with = [&](const alam::nn::ParamStore& p) {
    alam::ag::Tape t;
    nn::Bound b = nn::bind(t, p, false);
    return t.val(loss_fn(t, b)).data[0];
  };

  std::vector<GroupCheck> out;
  for (size_t i = 0; i < params.count(); ++i) {
    const auto& entry = params.entries()[i];
    Rng rng(seed + static_cast<uint64_t>(i) * 7919);
    Tensor dir(entry.value.shape);
    for (auto& v : dir.data) v = rng.normal();
    const double norm = std::sqrt(dir.squared_norm());
    for (auto& v : dir.data) v /= norm;

    GroupCheck g;
    g.name = entry.name;
    g.res.analytic = alam::dot(analytic[i], dir);
    alam::nn::ParamStore plus = params, minus = params;
    for (int64_t j = 0; j < entry.value.size(); ++j) {
      plus.entries()[i].value.data[static_cast<size_t>(j)] += eps * dir.data[static_cast<size_t>(j)];
      minus.entries()[i].value.data[static_cast<size_t>(j)] -= eps * dir.data[static_cast<size_t>(j)];
    }
    g.res.numeric = (eval_with(plus) - eval_with(minus)) / (2.0 * eps);
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace testutil
