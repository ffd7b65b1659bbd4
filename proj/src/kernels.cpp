#include "alam/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace alam::kernels {

namespace {
bool g_parallel = true;
int g_threads = 0;

// Per-output-row helpers shared by the serial and OpenMP variants. Keeping
// the accumulation order identical per row makes the two variants bitwise
// equal and makes results independent of the thread count.

inline void row_nn(const double* A, const double* B, double* C, int i, int k, int n, bool acc) {
  const double* a = A + static_cast<size_t>(i) * k;
  double* c = C + static_cast<size_t>(i) * n;
  if (!acc) std::memset(c, 0, sizeof(double) * static_cast<size_t>(n));
  for (int p = 0; p < k; ++p) {
    const double av = a[p];
    const double* b = B + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) c[j] += av * b[j];
  }
}

inline void row_nt(const double* A, const double* B, double* C, int i, int k, int n, bool acc) {
  const double* a = A + static_cast<size_t>(i) * k;
  double* c = C + static_cast<size_t>(i) * n;
  for (int j = 0; j < n; ++j) {
    const double* b = B + static_cast<size_t>(j) * k;
    double s = 0.0;
    for (int p = 0; p < k; ++p) s += a[p] * b[p];
    c[j] = acc ? c[j] + s : s;
  }
}

inline void row_tn(const double* A, const double* B, double* C, int i, int m, int k, int n,
                   bool acc) {
  // C[i,:] = sum_p A[p,i] * B[p,:]
  double* c = C + static_cast<size_t>(i) * n;
  if (!acc) std::memset(c, 0, sizeof(double) * static_cast<size_t>(n));
  for (int p = 0; p < k; ++p) {
    const double av = A[static_cast<size_t>(p) * m + i];
    const double* b = B + static_cast<size_t>(p) * n;
    for (int j = 0; j < n; ++j) c[j] += av * b[j];
  }
}

inline void row_softmax(const double* X, const double* add_mask, double* Y, int i, int n) {
  const double* x = X + static_cast<size_t>(i) * n;
  const double* m = add_mask ? add_mask + static_cast<size_t>(i) * n : nullptr;
  double* y = Y + static_cast<size_t>(i) * n;
  double mx = -1e300;
  for (int j = 0; j < n; ++j) {
    const double v = m ? x[j] + m[j] : x[j];
    y[j] = v;
    mx = std::max(mx, v);
  }
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    y[j] = std::exp(y[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < n; ++j) y[j] *= inv;
}

inline void row_conv2d(const double* x, int H, int W, int Cin, const double* w, int kh, int kw,
                       int Cout, int stride, int pad, double* y, int Wo, int ho) {
  // w layout: [kh, kw, Cin, Cout]; x,y layout: [H, W, C]
  for (int wo = 0; wo < Wo; ++wo) {
    double* out = y + (static_cast<size_t>(ho) * Wo + wo) * Cout;
    std::memset(out, 0, sizeof(double) * static_cast<size_t>(Cout));
    for (int r = 0; r < kh; ++r) {
      const int hi = ho * stride - pad + r;
      if (hi < 0 || hi >= H) continue;
      for (int s = 0; s < kw; ++s) {
        const int wi = wo * stride - pad + s;
        if (wi < 0 || wi >= W) continue;
        const double* xin = x + (static_cast<size_t>(hi) * W + wi) * Cin;
        const double* wk = w + ((static_cast<size_t>(r) * kw + s) * Cin) * Cout;
        for (int ci = 0; ci < Cin; ++ci) {
          const double xv = xin[ci];
          const double* wc = wk + static_cast<size_t>(ci) * Cout;
          for (int co = 0; co < Cout; ++co) out[co] += xv * wc[co];
        }
      }
    }
  }
}

inline void row_conv2d_grad_input(const double* gy, int Ho, int Wo, int Cout, const double* w,
                                  int kh, int kw, int Cin, int stride, int pad, double* gx, int W,
                                  int hi) {
  // Gather form: every input pixel collects from the output positions that
  // touched it, so parallelizing over input rows stays deterministic.
  for (int wi = 0; wi < W; ++wi) {
    double* g = gx + (static_cast<size_t>(hi) * W + wi) * Cin;
    for (int r = 0; r < kh; ++r) {
      const int num = hi + pad - r;
      if (num < 0 || num % stride != 0) continue;
      const int ho = num / stride;
      if (ho >= Ho) continue;
      for (int s = 0; s < kw; ++s) {
        const int numw = wi + pad - s;
        if (numw < 0 || numw % stride != 0) continue;
        const int wo = numw / stride;
        if (wo >= Wo) continue;
        const double* gout = gy + (static_cast<size_t>(ho) * Wo + wo) * Cout;
        const double* wk = w + ((static_cast<size_t>(r) * kw + s) * Cin) * Cout;
        for (int ci = 0; ci < Cin; ++ci) {
          const double* wc = wk + static_cast<size_t>(ci) * Cout;
          double acc = 0.0;
          for (int co = 0; co < Cout; ++co) acc += gout[co] * wc[co];
          g[ci] += acc;
        }
      }
    }
  }
}

}  // namespace

void set_parallel(bool enabled) { g_parallel = enabled; }
bool parallel() { return g_parallel; }
void set_threads(int n) {
  g_threads = n;
  if (n > 0) omp_set_num_threads(n);
}
int threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

namespace serial {

void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) row_nn(A, B, C, i, k, n, acc);
}
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) row_nt(A, B, C, i, k, n, acc);
}
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) row_tn(A, B, C, i, m, k, n, acc);
}
void softmax_rows(const double* X, const double* add_mask, double* Y, int m, int n) {
  for (int i = 0; i < m; ++i) row_softmax(X, add_mask, Y, i, n);
}
void conv2d(const double* x, int H, int W, int Cin, const double* w, int kh, int kw, int Cout,
            int stride, int pad, double* y, int Ho, int Wo) {
  for (int ho = 0; ho < Ho; ++ho) row_conv2d(x, H, W, Cin, w, kh, kw, Cout, stride, pad, y, Wo, ho);
}
void conv2d_grad_input(const double* gy, int Ho, int Wo, int Cout, const double* w, int kh,
                       int kw, int Cin, int stride, int pad, double* gx, int H, int W) {
  for (int hi = 0; hi < H; ++hi)
    row_conv2d_grad_input(gy, Ho, Wo, Cout, w, kh, kw, Cin, stride, pad, gx, W, hi);
}

}  // namespace serial

namespace omp {

void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) row_nn(A, B, C, i, k, n, acc);
}
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) row_nt(A, B, C, i, k, n, acc);
}
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) row_tn(A, B, C, i, m, k, n, acc);
}
void softmax_rows(const double* X, const double* add_mask, double* Y, int m, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) row_softmax(X, add_mask, Y, i, n);
}
void conv2d(const double* x, int H, int W, int Cin, const double* w, int kh, int kw, int Cout,
            int stride, int pad, double* y, int Ho, int Wo) {
#pragma omp parallel for schedule(static)
  for (int ho = 0; ho < Ho; ++ho) row_conv2d(x, H, W, Cin, w, kh, kw, Cout, stride, pad, y, Wo, ho);
}
void conv2d_grad_input(const double* gy, int Ho, int Wo, int Cout, const double* w, int kh,
                       int kw, int Cin, int stride, int pad, double* gx, int H, int W) {
#pragma omp parallel for schedule(static)
  for (int hi = 0; hi < H; ++hi)
    row_conv2d_grad_input(gy, Ho, Wo, Cout, w, kh, kw, Cin, stride, pad, gx, W, hi);
}

}  // namespace omp

void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  if (g_parallel) omp::matmul_nn(A, B, C, m, k, n, acc);
  else serial::matmul_nn(A, B, C, m, k, n, acc);
}
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  if (g_parallel) omp::matmul_nt(A, B, C, m, k, n, acc);
  else serial::matmul_nt(A, B, C, m, k, n, acc);
}
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc) {
  if (g_parallel) omp::matmul_tn(A, B, C, m, k, n, acc);
  else serial::matmul_tn(A, B, C, m, k, n, acc);
}
void softmax_rows(const double* X, const double* add_mask, double* Y, int m, int n) {
  if (g_parallel) omp::softmax_rows(X, add_mask, Y, m, n);
  else serial::softmax_rows(X, add_mask, Y, m, n);
}
void conv2d(const double* x, int H, int W, int Cin, const double* w, int kh, int kw, int Cout,
            int stride, int pad, double* y, int Ho, int Wo) {
  if (g_parallel) omp::conv2d(x, H, W, Cin, w, kh, kw, Cout, stride, pad, y, Ho, Wo);
  else serial::conv2d(x, H, W, Cin, w, kh, kw, Cout, stride, pad, y, Ho, Wo);
}
void conv2d_grad_input(const double* gy, int Ho, int Wo, int Cout, const double* w, int kh,
                       int kw, int Cin, int stride, int pad, double* gx, int H, int W) {
  if (g_parallel) omp::conv2d_grad_input(gy, Ho, Wo, Cout, w, kh, kw, Cin, stride, pad, gx, H, W);
  else serial::conv2d_grad_input(gy, Ho, Wo, Cout, w, kh, kw, Cin, stride, pad, gx, H, W);
}

}  // namespace alam::kernels
