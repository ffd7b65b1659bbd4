#pragma once

#include <cstdint>

namespace alam::kernels {

// Compute kernels come in two variants: a serial reference and an OpenMP
// version. Both call the same per-output-row helper, so a given output
// element is always accumulated in the same order regardless of thread
// count and the two variants produce bitwise-identical results. The
// dispatching entry points pick the variant from the global switch below.

void set_parallel(bool enabled);
bool parallel();
void set_threads(int n);  // n <= 0 leaves the OpenMP default untouched
int threads();

namespace serial {
// C[m,n] = A[m,k] * B[k,n]           (acc: C += ...)
void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
// C[m,n] = A[k,m]^T * B[k,n]
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
// Row-wise softmax of X + add_mask (mask may be null).
void softmax_rows(const double* X, const double* add_mask, double* Y, int m, int n);
// y[Ho,Wo,Cout] = conv(x[H,W,Cin], w[kh,kw,Cin,Cout]), zero padding.
void conv2d(const double* x, int H, int W, int Cin, const double* w, int kh, int kw, int Cout,
            int stride, int pad, double* y, int Ho, int Wo);
// gx[H,W,Cin] += d conv / d x applied to gy (gather form, deterministic).
void conv2d_grad_input(const double* gy, int Ho, int Wo, int Cout, const double* w, int kh,
                       int kw, int Cin, int stride, int pad, double* gx, int H, int W);
}  // namespace serial

namespace omp {
void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc);
void softmax_rows(const double* X, const double* add_mask, double* Y, int m, int n);
void conv2d(const double* x, int H, int W, int Cin, const double* w, int kh, int kw, int Cout,
            int stride, int pad, double* y, int Ho, int Wo);
void conv2d_grad_input(const double* gy, int Ho, int Wo, int Cout, const double* w, int kh,
                       int kw, int Cin, int stride, int pad, double* gx, int H, int W);
}  // namespace omp

// Dispatching entry points used by the rest of the library.
void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n, bool acc = false);
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n, bool acc = false);
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n, bool acc = false);
void softmax_rows(const double* X, const double* add_mask, double* Y, int m, int n);
void conv2d(const double* x, int H, int W, int Cin, const double* w, int kh, int kw, int Cout,
            int stride, int pad, double* y, int Ho, int Wo);
void conv2d_grad_input(const double* gy, int Ho, int Wo, int Cout, const double* w, int kh,
                       int kw, int Cin, int stride, int pad, double* gx, int H, int W);

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace alam::kernels
