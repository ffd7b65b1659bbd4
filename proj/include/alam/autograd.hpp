#pragma once

#include <functional>
#include <string>
#include <vector>

#include "alam/tensor.hpp"

namespace alam::ag {

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// valid topological order, so backward() is a single reverse sweep. A Tape
// is a local object owned by one computation; nothing here is shared, so
// separate tapes may live on separate threads.
class Tape {
 public:
  int leaf(Tensor value, bool requires_grad = false);
  int constant(Tensor value) { return leaf(std::move(value), false); }
  int constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

  const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  Tensor& grad(int id);          // allocates zeros on first touch
  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad_alloc; }
  size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 (root must be a scalar) and sweeps.
  void backward(int root);

  // ---- elementwise / broadcast ----
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double c);
  int add_rowvec(int a, int b);  // a[m,n] + broadcast b[1,n]
  int gelu(int a);
  int sigmoid(int a);
  int abs(int a);

  // ---- matmul family ----
  int matmul(int a, int b);      // [m,k]x[k,n]
  int matmul_nt(int a, int b);   // [m,k]x[n,k]^T
  int matmul_tn(int a, int b);   // [k,m]^T x [k,n]

  // ---- structure ----
  int slice_rows(int a, int r0, int r1);
  int slice_cols(int a, int c0, int c1);
  int concat_rows(const std::vector<int>& parts);
  int concat_cols(const std::vector<int>& parts);
  int gather_rows(int a, std::vector<int> idx);
  int reshape(int a, std::vector<int> shape);

  // ---- reductions ----
  int sum_all(int a);
  int mean_all(int a);

  // Forward takes the given value verbatim; backward is the identity into a.
  // This is the straight-through building block.
  int identity_valued(int a, Tensor value);

  // ---- fused NN ops ----
  // Row-wise softmax of a + add_mask (mask not differentiated, may be null).
  int softmax_rows(int a, const Tensor* add_mask);
  int layer_norm(int x, int gamma, int beta, double eps = 1e-5);

  // ---- image ops (tensors carry [H,W,C] shapes) ----
  int conv2d(int x, const Tensor& w, int stride, int pad);  // fixed filters
  int normalize_channels(int x, double eps);
  // tokens [gh*gw, P*P*C] -> image [gh*P, gw*P, C]
  int depatchify(int tokens, int grid_h, int grid_w, int patch, int channels);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::function<void(Tape&, int)> backward;
  };
  std::vector<Node> nodes_;

  int push_(Tensor value, bool req, std::function<void(Tape&, int)> bw);
  void acc_(int id, const Tensor& g);  // grad(id) += g
};

// Convenience compositions used all over the model code.
int sum_squares(Tape& t, int a);               // sum(a*a) -> scalar
int mse(Tape& t, int a, int b);                // mean((a-b)^2)
int l1_mean(Tape& t, int a, int b);            // mean(|a-b|)
int straight_through(Tape& t, int z, const Tensor& z_q);  // value z_q, grad -> z

}  // namespace alam::ag
