// Benchmarks the OpenMP kernels against their serial references and checks
// that the two variants agree bitwise. Usage: bench_kernels [--quick]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "alam/kernels.hpp"
#include "alam/rng.hpp"

using namespace alam;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> random_vec(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

struct Row {
  std::string name;
  double serial_ms, omp_ms;
  bool bitwise_equal;
};

void print_rows(const std::vector<Row>& rows) {
  std::printf("%-28s %12s %12s %9s %9s\n", "kernel", "serial (ms)", "omp (ms)", "speedup",
              "bitwise");
  for (const auto& r : rows)
    std::printf("%-28s %12.3f %12.3f %8.2fx %9s\n", r.name.c_str(), r.serial_ms, r.omp_ms,
                r.serial_ms / r.omp_ms, r.bitwise_equal ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const int reps = quick ? 2 : 5;
  std::printf("threads: %d\n", kernels::threads());
  std::vector<Row> rows;

  for (int n : quick ? std::vector<int>{128} : std::vector<int>{128, 256, 512}) {
    const auto A = random_vec(static_cast<size_t>(n) * n, 1);
    const auto B = random_vec(static_cast<size_t>(n) * n, 2);
    std::vector<double> Cs(static_cast<size_t>(n) * n), Cp(Cs.size());
    Row r;
    r.name = "matmul_nn " + std::to_string(n) + "^3";
    r.serial_ms = time_ms([&] { kernels::serial::matmul_nn(A.data(), B.data(), Cs.data(), n, n, n, false); }, reps);
    r.omp_ms = time_ms([&] { kernels::omp::matmul_nn(A.data(), B.data(), Cp.data(), n, n, n, false); }, reps);
    r.bitwise_equal = Cs == Cp;
    rows.push_back(r);

    Row r2;
    r2.name = "matmul_nt " + std::to_string(n) + "^3";
    r2.serial_ms = time_ms([&] { kernels::serial::matmul_nt(A.data(), B.data(), Cs.data(), n, n, n, false); }, reps);
    r2.omp_ms = time_ms([&] { kernels::omp::matmul_nt(A.data(), B.data(), Cp.data(), n, n, n, false); }, reps);
    r2.bitwise_equal = Cs == Cp;
    rows.push_back(r2);
  }

  {
    const int m = 2048, n = 512;
    const auto X = random_vec(static_cast<size_t>(m) * n, 3);
    const auto M = random_vec(static_cast<size_t>(m) * n, 4);
    std::vector<double> Ys(static_cast<size_t>(m) * n), Yp(Ys.size());
    Row r;
    r.name = "softmax_rows 2048x512";
    r.serial_ms = time_ms([&] { kernels::serial::softmax_rows(X.data(), M.data(), Ys.data(), m, n); }, reps);
    r.omp_ms = time_ms([&] { kernels::omp::softmax_rows(X.data(), M.data(), Yp.data(), m, n); }, reps);
    r.bitwise_equal = Ys == Yp;
    rows.push_back(r);
  }

  {
    const int H = 64, W = 64, Cin = 8, Cout = 16, k = 3, stride = 2, pad = 1;
    const int Ho = kernels::conv_out_dim(H, k, stride, pad);
    const int Wo = kernels::conv_out_dim(W, k, stride, pad);
    const auto x = random_vec(static_cast<size_t>(H) * W * Cin, 5);
    const auto w = random_vec(static_cast<size_t>(k) * k * Cin * Cout, 6);
    std::vector<double> ys(static_cast<size_t>(Ho) * Wo * Cout), yp(ys.size());
    Row r;
    r.name = "conv2d 64x64x8->16";
    r.serial_ms = time_ms([&] { kernels::serial::conv2d(x.data(), H, W, Cin, w.data(), k, k, Cout, stride, pad, ys.data(), Ho, Wo); }, reps);
    r.omp_ms = time_ms([&] { kernels::omp::conv2d(x.data(), H, W, Cin, w.data(), k, k, Cout, stride, pad, yp.data(), Ho, Wo); }, reps);
    r.bitwise_equal = ys == yp;
    rows.push_back(r);

    const auto gy = random_vec(ys.size(), 7);
    std::vector<double> gxs(x.size(), 0.0), gxp(x.size(), 0.0);
    Row r2;
    r2.name = "conv2d_grad_input";
    r2.serial_ms = time_ms([&] {
      std::fill(gxs.begin(), gxs.end(), 0.0);
      kernels::serial::conv2d_grad_input(gy.data(), Ho, Wo, Cout, w.data(), k, k, Cin, stride, pad, gxs.data(), H, W);
    }, reps);
    r2.omp_ms = time_ms([&] {
      std::fill(gxp.begin(), gxp.end(), 0.0);
      kernels::omp::conv2d_grad_input(gy.data(), Ho, Wo, Cout, w.data(), k, k, Cin, stride, pad, gxp.data(), H, W);
    }, reps);
    r2.bitwise_equal = gxs == gxp;
    rows.push_back(r2);
  }

  print_rows(rows);
  for (const auto& r : rows)
    if (!r.bitwise_equal) return 1;
  return 0;
}
