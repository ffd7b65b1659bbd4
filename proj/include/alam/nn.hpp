#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "alam/autograd.hpp"
#include "alam/rng.hpp"
#include "alam/tensor.hpp"

namespace alam::nn {

// Named parameters with their AdamW state. Entry order is registration
// order and is what checkpoints and the optimizer iterate over, so it is
// part of the determinism contract.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor m, v;  // AdamW moments
  };

  Tensor& add(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  int find(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  size_t count() const { return entries_.size(); }
  int64_t total_params() const;
  uint64_t content_hash() const;  // FNV over value bit patterns

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Decoupled weight decay Adam with bias correction.
struct AdamW {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;
  int64_t t = 0;

  void step(ParamStore& params, const std::vector<Tensor>& grads);
};

// Scales grads in place so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

// Leases every parameter into a tape as a leaf. Model code addresses
// parameters by name through operator().
struct Bound {
  ag::Tape* tape = nullptr;
  const ParamStore* store = nullptr;
  std::vector<int> ids;

  int operator()(const std::string& name) const;
};

Bound bind(ag::Tape& tape, const ParamStore& params, bool trainable);

// Gradients per entry (zeros where nothing flowed), aligned with entries().
std::vector<Tensor> collect_grads(const ag::Tape& tape, const Bound& bound);

// ---- initializers (prefix-based naming: "<prefix>.w", "<prefix>.b", ...) ----
void init_linear(ParamStore& p, const std::string& prefix, int in, int out, Rng& rng,
                 bool bias = true, double stddev = 0.02);
void init_layer_norm(ParamStore& p, const std::string& prefix, int dim);
void init_block(ParamStore& p, const std::string& prefix, int dim, int mlp_ratio, Rng& rng);
Tensor normal_init(int rows, int cols, Rng& rng, double stddev);

// ---- forward pieces ----
int linear(ag::Tape& t, const Bound& b, const std::string& prefix, int x);
int layer_norm(ag::Tape& t, const Bound& b, const std::string& prefix, int x);
// Multi-head self-attention with optional additive mask over [T,T].
int mha(ag::Tape& t, const Bound& b, const std::string& prefix, int x, int heads,
        const Tensor* add_mask);
// Pre-LN transformer block: x + MHA(LN(x)); then x + MLP(LN(x)).
int transformer_block(ag::Tape& t, const Bound& b, const std::string& prefix, int x, int heads,
                      const Tensor* add_mask);

}  // namespace alam::nn
