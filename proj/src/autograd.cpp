#include "alam/autograd.hpp"

#include <cmath>
#include <cstring>

#include "alam/kernels.hpp"

namespace alam::ag {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

int Tape::push_(Tensor value, bool req, std::function<void(Tape&, int)> bw) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = req;
  n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor value, bool requires_grad) {
  return push_(std::move(value), requires_grad, nullptr);
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::acc_(int id, const Tensor& g) {
  Tensor& dst = grad(id);
  for (int64_t i = 0; i < g.size(); ++i) dst.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
}

void Tape::backward(int root) {
  require(val(root).size() == 1, "backward: root must be scalar");
  grad(root).data[0] = 1.0;
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.backward && n.requires_grad && n.grad_alloc) n.backward(*this, id);
  }
}

// ---------------- elementwise ----------------

int Tape::add(int a, int b) {
  require(val(a).same_shape(val(b)), "add: shape mismatch");
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y.data[static_cast<size_t>(i)] += val(b).data[static_cast<size_t>(i)];
  const bool req = needs_grad(a) || needs_grad(b);
  return push_(std::move(y), req, [a, b](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    if (t.needs_grad(a)) t.acc_(a, g);
    if (t.needs_grad(b)) t.acc_(b, g);
  });
}

int Tape::sub(int a, int b) {
  require(val(a).same_shape(val(b)), "sub: shape mismatch");
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y.data[static_cast<size_t>(i)] -= val(b).data[static_cast<size_t>(i)];
  const bool req = needs_grad(a) || needs_grad(b);
  return push_(std::move(y), req, [a, b](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    if (t.needs_grad(a)) t.acc_(a, g);
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad(b);
      for (int64_t i = 0; i < g.size(); ++i) gb.data[static_cast<size_t>(i)] -= g.data[static_cast<size_t>(i)];
    }
  });
}

int Tape::mul(int a, int b) {
  require(val(a).same_shape(val(b)), "mul: shape mismatch");
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y.data[static_cast<size_t>(i)] *= val(b).data[static_cast<size_t>(i)];
  const bool req = needs_grad(a) || needs_grad(b);
  return push_(std::move(y), req, [a, b](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad(a);
      const Tensor& vb = t.val(b);
      for (int64_t i = 0; i < g.size(); ++i)
        ga.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * vb.data[static_cast<size_t>(i)];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad(b);
      const Tensor& va = t.val(a);
      for (int64_t i = 0; i < g.size(); ++i)
        gb.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * va.data[static_cast<size_t>(i)];
    }
  });
}

int Tape::scale(int a, double c) {
  Tensor y = val(a);
  for (auto& v : y.data) v *= c;
  return push_(std::move(y), needs_grad(a), [a, c](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < g.size(); ++i) ga.data[static_cast<size_t>(i)] += c * g.data[static_cast<size_t>(i)];
  });
}

int Tape::add_rowvec(int a, int b) {
  const int m = val(a).rows(), n = val(a).cols();
  require(val(b).size() == n, "add_rowvec: width mismatch");
  Tensor y = val(a);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y.at(i, j) += val(b).data[static_cast<size_t>(j)];
  const bool req = needs_grad(a) || needs_grad(b);
  return push_(std::move(y), req, [a, b, m, n](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    if (t.needs_grad(a)) t.acc_(a, g);
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad(b);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb.data[static_cast<size_t>(j)] += g.at(i, j);
    }
  });
}

int Tape::gelu(int a) {
  Tensor y = val(a);
  for (auto& v : y.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  return push_(std::move(y), needs_grad(a), [a](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad(id);
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < g.size(); ++i) {
      const double v = x.data[static_cast<size_t>(i)];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      ga.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * (cdf + v * pdf);
    }
  });
}

int Tape::sigmoid(int a) {
  Tensor y = val(a);
  for (auto& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
  return push_(std::move(y), needs_grad(a), [a](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad(id);
    const Tensor& y_ = t.val(id);
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < g.size(); ++i) {
      const double s = y_.data[static_cast<size_t>(i)];
      ga.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * s * (1.0 - s);
    }
  });
}

int Tape::abs(int a) {
  Tensor y = val(a);
  for (auto& v : y.data) v = std::fabs(v);
  return push_(std::move(y), needs_grad(a), [a](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad(id);
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < g.size(); ++i) {
      const double v = x.data[static_cast<size_t>(i)];
      const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      ga.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)] * s;
    }
  });
}

// ---------------- matmul ----------------

int Tape::matmul(int a, int b) {
  const int m = val(a).rows(), k = val(a).cols(), n = val(b).cols();
  require(val(b).rows() == k, "matmul: inner dim mismatch");
  Tensor y({m, n});
  kernels::matmul_nn(val(a).data.data(), val(b).data.data(), y.data.data(), m, k, n, false);
  const bool req = needs_grad(a) || needs_grad(b);
  return push_(std::move(y), req, [a, b, m, k, n](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    if (t.needs_grad(a))
      kernels::matmul_nt(g.data.data(), t.val(b).data.data(), t.grad(a).data.data(), m, n, k, true);
    if (t.needs_grad(b))
      kernels::matmul_tn(t.val(a).data.data(), g.data.data(), t.grad(b).data.data(), k, m, n, true);
  });
}

int Tape::matmul_nt(int a, int b) {
  const int m = val(a).rows(), k = val(a).cols(), n = val(b).rows();
  require(val(b).cols() == k, "matmul_nt: inner dim mismatch");
  Tensor y({m, n});
  kernels::matmul_nt(val(a).data.data(), val(b).data.data(), y.data.data(), m, k, n, false);
  const bool req = needs_grad(a) || needs_grad(b);
  return push_(std::move(y), req, [a, b, m, k, n](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    if (t.needs_grad(a))
      kernels::matmul_nn(g.data.data(), t.val(b).data.data(), t.grad(a).data.data(), m, n, k, true);
    if (t.needs_grad(b))
      kernels::matmul_tn(g.data.data(), t.val(a).data.data(), t.grad(b).data.data(), n, m, k, true);
  });
}

int Tape::matmul_tn(int a, int b) {
  const int k = val(a).rows(), m = val(a).cols(), n = val(b).cols();
  require(val(b).rows() == k, "matmul_tn: inner dim mismatch");
  Tensor y({m, n});
  kernels::matmul_tn(val(a).data.data(), val(b).data.data(), y.data.data(), m, k, n, false);
  const bool req = needs_grad(a) || needs_grad(b);
  return push_(std::move(y), req, [a, b, m, k, n](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    if (t.needs_grad(a))
      kernels::matmul_nt(t.val(b).data.data(), g.data.data(), t.grad(a).data.data(), k, n, m, true);
    if (t.needs_grad(b))
      kernels::matmul_nn(t.val(a).data.data(), g.data.data(), t.grad(b).data.data(), k, m, n, true);
  });
}

// ---------------- structure ----------------

int Tape::slice_rows(int a, int r0, int r1) {
  const int n = val(a).cols();
  require(r0 >= 0 && r1 <= val(a).rows() && r0 < r1, "slice_rows: bad range");
  Tensor y({r1 - r0, n});
  std::memcpy(y.data.data(), val(a).data.data() + static_cast<size_t>(r0) * n,
              sizeof(double) * y.data.size());
  return push_(std::move(y), needs_grad(a), [a, r0, n](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    const int rows = g.rows();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < n; ++j) ga.at(r0 + i, j) += g.at(i, j);
  });
}

int Tape::slice_cols(int a, int c0, int c1) {
  const int m = val(a).rows(), n = val(a).cols();
  require(c0 >= 0 && c1 <= n && c0 < c1, "slice_cols: bad range");
  Tensor y({m, c1 - c0});
  for (int i = 0; i < m; ++i)
    for (int j = c0; j < c1; ++j) y.at(i, j - c0) = val(a).at(i, j);
  return push_(std::move(y), needs_grad(a), [a, c0, c1, m](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = c0; j < c1; ++j) ga.at(i, j) += g.at(i, j - c0);
  });
}

int Tape::concat_rows(const std::vector<int>& parts) {
  require(!parts.empty(), "concat_rows: empty");
  const int n = val(parts[0]).cols();
  int m = 0;
  bool req = false;
  for (int p : parts) {
    require(val(p).cols() == n, "concat_rows: width mismatch");
    m += val(p).rows();
    req = req || needs_grad(p);
  }
  Tensor y({m, n});
  int r = 0;
  for (int p : parts) {
    std::memcpy(y.data.data() + static_cast<size_t>(r) * n, val(p).data.data(),
                sizeof(double) * val(p).data.size());
    r += val(p).rows();
  }
  auto parts_copy = parts;
  return push_(std::move(y), req, [parts_copy, n](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    int r = 0;
    for (int p : parts_copy) {
      const int rows = t.val(p).rows();
      if (t.needs_grad(p)) {
        Tensor& gp = t.grad(p);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < n; ++j) gp.at(i, j) += g.at(r + i, j);
      }
      r += rows;
    }
  });
}

int Tape::concat_cols(const std::vector<int>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  const int m = val(parts[0]).rows();
  int n = 0;
  bool req = false;
  for (int p : parts) {
    require(val(p).rows() == m, "concat_cols: height mismatch");
    n += val(p).cols();
    req = req || needs_grad(p);
  }
  Tensor y({m, n});
  int c = 0;
  for (int p : parts) {
    const int w = val(p).cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) y.at(i, c + j) = val(p).at(i, j);
    c += w;
  }
  auto parts_copy = parts;
  return push_(std::move(y), req, [parts_copy, m](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    int c = 0;
    for (int p : parts_copy) {
      const int w = t.val(p).cols();
      if (t.needs_grad(p)) {
        Tensor& gp = t.grad(p);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j) gp.at(i, j) += g.at(i, c + j);
      }
      c += w;
    }
  });
}

int Tape::gather_rows(int a, std::vector<int> idx) {
  const int n = val(a).cols();
  const int rows = val(a).rows();
  Tensor y({static_cast<int>(idx.size()), n});
  for (size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < rows, "gather_rows: index out of range");
    std::memcpy(y.data.data() + i * static_cast<size_t>(n),
                val(a).data.data() + static_cast<size_t>(idx[i]) * n, sizeof(double) * n);
  }
  return push_(std::move(y), needs_grad(a), [a, idx = std::move(idx), n](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < n; ++j) ga.at(idx[i], j) += g.at(static_cast<int>(i), j);
  });
}

int Tape::reshape(int a, std::vector<int> shape) {
  require(Tensor::numel(shape) == val(a).size(), "reshape: size mismatch");
  Tensor y;
  y.shape = std::move(shape);
  y.data = val(a).data;
  return push_(std::move(y), needs_grad(a), [a](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < g.size(); ++i) ga.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
  });
}

// ---------------- reductions ----------------

int Tape::sum_all(int a) {
  double s = 0.0;
  for (double v : val(a).data) s += v;
  return push_(Tensor::scalar(s), needs_grad(a), [a](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const double g = t.grad(id).data[0];
    Tensor& ga = t.grad(a);
    for (auto& v : ga.data) v += g;
  });
}

int Tape::mean_all(int a) {
  const double inv = 1.0 / static_cast<double>(val(a).size());
  double s = 0.0;
  for (double v : val(a).data) s += v;
  return push_(Tensor::scalar(s * inv), needs_grad(a), [a, inv](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const double g = t.grad(id).data[0] * inv;
    Tensor& ga = t.grad(a);
    for (auto& v : ga.data) v += g;
  });
}

int Tape::identity_valued(int a, Tensor value) {
  return push_(std::move(value), needs_grad(a), [a](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    t.acc_(a, t.grad(id));
  });
}

// ---------------- fused NN ops ----------------

int Tape::softmax_rows(int a, const Tensor* add_mask) {
  const int m = val(a).rows(), n = val(a).cols();
  if (add_mask) require(add_mask->rows() == m && add_mask->cols() == n, "softmax: mask shape");
  Tensor y({m, n});
  kernels::softmax_rows(val(a).data.data(), add_mask ? add_mask->data.data() : nullptr,
                        y.data.data(), m, n);
  return push_(std::move(y), needs_grad(a), [a, m, n](Tape& t, int id) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad(id);
    const Tensor& y_ = t.val(id);
    Tensor& ga = t.grad(a);
    for (int i = 0; i < m; ++i) {
      double dotgy = 0.0;
      for (int j = 0; j < n; ++j) dotgy += g.at(i, j) * y_.at(i, j);
      for (int j = 0; j < n; ++j) ga.at(i, j) += y_.at(i, j) * (g.at(i, j) - dotgy);
    }
  });
}

int Tape::layer_norm(int x, int gamma, int beta, double eps) {
  const int m = val(x).rows(), n = val(x).cols();
  require(val(gamma).size() == n && val(beta).size() == n, "layer_norm: param width");
  Tensor y({m, n});
  Tensor xhat({m, n});
  Tensor inv_std({m, 1});
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += val(x).at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = val(x).at(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std.at(i, 0) = is;
    for (int j = 0; j < n; ++j) {
      const double xh = (val(x).at(i, j) - mu) * is;
      xhat.at(i, j) = xh;
      y.at(i, j) = xh * val(gamma).data[static_cast<size_t>(j)] + val(beta).data[static_cast<size_t>(j)];
    }
  }
  const bool req = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
  return push_(std::move(y), req,
               [x, gamma, beta, m, n, xhat = std::move(xhat),
                inv_std = std::move(inv_std)](Tape& t, int id) {
    const Tensor& g = t.grad(id);
    if (t.needs_grad(gamma)) {
      Tensor& gg = t.grad(gamma);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gg.data[static_cast<size_t>(j)] += g.at(i, j) * xhat.at(i, j);
    }
    if (t.needs_grad(beta)) {
      Tensor& gb = t.grad(beta);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb.data[static_cast<size_t>(j)] += g.at(i, j);
    }
    if (t.needs_grad(x)) {
      Tensor& gx = t.grad(x);
      const Tensor& gm = t.val(gamma);
      for (int i = 0; i < m; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double gj = g.at(i, j) * gm.data[static_cast<size_t>(j)];
          s1 += gj;
          s2 += gj * xhat.at(i, j);
        }
        s1 /= n;
        s2 /= n;
        const double is = inv_std.at(i, 0);
        for (int j = 0; j < n; ++j) {
          const double gj = g.at(i, j) * gm.data[static_cast<size_t>(j)];
          gx.at(i, j) += is * (gj - s1 - xhat.at(i, j) * s2);
        }
      }
    }
  });
}

// ---------------- image ops ----------------

int Tape::conv2d(int x, const Tensor& w, int stride, int pad) {
  require(val(x).ndim() == 3, "conv2d: input must be [H,W,C]");
  require(w.ndim() == 4, "conv2d: weights must be [kh,kw,Cin,Cout]");
  const int H = val(x).dim(0), W = val(x).dim(1), Cin = val(x).dim(2);
  const int kh = w.dim(0), kw = w.dim(1), Cout = w.dim(3);
  require(w.dim(2) == Cin, "conv2d: channel mismatch");
  const int Ho = kernels::conv_out_dim(H, kh, stride, pad);
  const int Wo = kernels::conv_out_dim(W, kw, stride, pad);
  Tensor y({Ho, Wo, Cout});
  kernels::conv2d(val(x).data.data(), H, W, Cin, w.data.data(), kh, kw, Cout, stride, pad,
                  y.data.data(), Ho, Wo);
  Tensor w_copy = w;
  return push_(std::move(y), needs_grad(x),
               [x, w_copy = std::move(w_copy), stride, pad, H, W, Cin, kh, kw, Cout, Ho,
                Wo](Tape& t, int id) {
    if (!t.needs_grad(x)) return;
    const Tensor& g = t.grad(id);
    kernels::conv2d_grad_input(g.data.data(), Ho, Wo, Cout, w_copy.data.data(), kh, kw, Cin,
                               stride, pad, t.grad(x).data.data(), H, W);
  });
}

int Tape::normalize_channels(int x, double eps) {
  require(val(x).ndim() == 3, "normalize_channels: input must be [H,W,C]");
  const int H = val(x).dim(0), W = val(x).dim(1), C = val(x).dim(2);
  Tensor y({H, W, C});
  const int64_t pixels = static_cast<int64_t>(H) * W;
  for (int64_t p = 0; p < pixels; ++p) {
    const double* v = val(x).data.data() + p * C;
    double* o = y.data.data() + p * C;
    double s2 = eps;
    for (int c = 0; c < C; ++c) s2 += v[c] * v[c];
    const double inv = 1.0 / std::sqrt(s2);
    for (int c = 0; c < C; ++c) o[c] = v[c] * inv;
  }
  return push_(std::move(y), needs_grad(x), [x, H, W, C, eps](Tape& t, int id) {
    if (!t.needs_grad(x)) return;
    const Tensor& g = t.grad(id);
    const Tensor& xv = t.val(x);
    Tensor& gx = t.grad(x);
    const int64_t pixels = static_cast<int64_t>(H) * W;
    for (int64_t p = 0; p < pixels; ++p) {
      const double* v = xv.data.data() + p * C;
      const double* go = g.data.data() + p * C;
      double* gi = gx.data.data() + p * C;
      double s2 = eps, vdotg = 0.0;
      for (int c = 0; c < C; ++c) {
        s2 += v[c] * v[c];
        vdotg += v[c] * go[c];
      }
      const double inv = 1.0 / std::sqrt(s2);
      const double inv3 = inv * inv * inv;
      for (int c = 0; c < C; ++c) gi[c] += go[c] * inv - v[c] * vdotg * inv3;
    }
  });
}

int Tape::depatchify(int tokens, int grid_h, int grid_w, int patch, int channels) {
  const int n_tok = val(tokens).rows();
  require(n_tok == grid_h * grid_w, "depatchify: token count mismatch");
  require(val(tokens).cols() == patch * patch * channels, "depatchify: token width mismatch");
  const int H = grid_h * patch, W = grid_w * patch;
  Tensor y({H, W, channels});
  for (int gy = 0; gy < grid_h; ++gy)
    for (int gx = 0; gx < grid_w; ++gx) {
      const double* tok = val(tokens).data.data() +
                          (static_cast<size_t>(gy) * grid_w + gx) * patch * patch * channels;
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < channels; ++c)
            y.data[((static_cast<size_t>(gy * patch + py) * W) + (gx * patch + px)) * channels + c] =
                tok[(static_cast<size_t>(py) * patch + px) * channels + c];
    }
  return push_(std::move(y), needs_grad(tokens),
               [tokens, grid_h, grid_w, patch, channels](Tape& t, int id) {
    if (!t.needs_grad(tokens)) return;
    const Tensor& g = t.grad(id);
    Tensor& gt = t.grad(tokens);
    const int W = grid_w * patch;
    for (int gy = 0; gy < grid_h; ++gy)
      for (int gx = 0; gx < grid_w; ++gx) {
        double* tok = gt.data.data() +
                      (static_cast<size_t>(gy) * grid_w + gx) * patch * patch * channels;
        for (int py = 0; py < patch; ++py)
          for (int px = 0; px < patch; ++px)
            for (int c = 0; c < channels; ++c)
              tok[(static_cast<size_t>(py) * patch + px) * channels + c] +=
                  g.data[((static_cast<size_t>(gy * patch + py) * W) + (gx * patch + px)) *
                             channels + c];
      }
  });
}

// ---------------- compositions ----------------

int sum_squares(Tape& t, int a) { return t.sum_all(t.mul(a, a)); }

int mse(Tape& t, int a, int b) {
  const int d = t.sub(a, b);
  return t.mean_all(t.mul(d, d));
}

int l1_mean(Tape& t, int a, int b) { return t.mean_all(t.abs(t.sub(a, b))); }

int straight_through(Tape& t, int z, const Tensor& z_q) {
  require(t.val(z).same_shape(z_q), "straight_through: shape mismatch");
  return t.identity_valued(z, z_q);
}

}  // namespace alam::ag
