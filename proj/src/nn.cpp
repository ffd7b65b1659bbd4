#include "alam/nn.hpp"

#include <cmath>
#include <cstring>

namespace alam::nn {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  require(!has(name), "duplicate parameter: " + name);
  index_[name] = static_cast<int>(entries_.size());
  Entry e;
  e.name = name;
  e.m = Tensor(init.shape);
  e.v = Tensor(init.shape);
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

Tensor& ParamStore::get(const std::string& name) {
  const int i = find(name);
  require(i >= 0, "unknown parameter: " + name);
  return entries_[static_cast<size_t>(i)].value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  const int i = find(name);
  require(i >= 0, "unknown parameter: " + name);
  return entries_[static_cast<size_t>(i)].value;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

uint64_t ParamStore::content_hash() const {
  uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& e : entries_) {
    mix(e.name.data(), e.name.size());
    mix(e.value.data.data(), e.value.data.size() * sizeof(double));
  }
  return h;
}

void AdamW::step(ParamStore& params, const std::vector<Tensor>& grads) {
  require(grads.size() == params.count(), "AdamW: grad count mismatch");
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.count(); ++i) {
    auto& e = params.entries()[i];
    const Tensor& g = grads[i];
    require(g.size() == e.value.size(), "AdamW: grad shape mismatch for " + e.name);
    for (int64_t j = 0; j < e.value.size(); ++j) {
      const size_t k = static_cast<size_t>(j);
      const double gj = g.data[k];
      e.m.data[k] = beta1 * e.m.data[k] + (1.0 - beta1) * gj;
      e.v.data[k] = beta2 * e.v.data[k] + (1.0 - beta2) * gj * gj;
      const double mhat = e.m.data[k] / bc1;
      const double vhat = e.v.data[k] / bc2;
      e.value.data[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * e.value.data[k]);
    }
  }
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double s2 = 0.0;
  for (const auto& g : grads) s2 += g.squared_norm();
  const double norm = std::sqrt(s2);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& g : grads)
      for (auto& v : g.data) v *= scale;
  }
  return norm;
}

int Bound::operator()(const std::string& name) const {
  const int i = store->find(name);
  require(i >= 0, "unbound parameter: " + name);
  return ids[static_cast<size_t>(i)];
}

Bound bind(ag::Tape& tape, const ParamStore& params, bool trainable) {
  Bound b;
  b.tape = &tape;
  b.store = &params;
  b.ids.reserve(params.count());
  for (const auto& e : params.entries()) b.ids.push_back(tape.leaf(e.value, trainable));
  return b;
}

std::vector<Tensor> collect_grads(const ag::Tape& tape, const Bound& bound) {
  std::vector<Tensor> out;
  out.reserve(bound.ids.size());
  for (size_t i = 0; i < bound.ids.size(); ++i) {
    const int id = bound.ids[i];
    if (tape.has_grad(id)) {
      out.push_back(const_cast<ag::Tape&>(tape).grad(id));
    } else {
      out.push_back(Tensor(bound.store->entries()[i].value.shape));
    }
  }
  return out;
}

Tensor normal_init(int rows, int cols, Rng& rng, double stddev) {
  Tensor t({rows, cols});
  for (auto& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

void init_linear(ParamStore& p, const std::string& prefix, int in, int out, Rng& rng, bool bias,
                 double stddev) {
  p.add(prefix + ".w", normal_init(in, out, rng, stddev));
  if (bias) p.add(prefix + ".b", Tensor({1, out}));
}

void init_layer_norm(ParamStore& p, const std::string& prefix, int dim) {
  p.add(prefix + ".g", Tensor::full({1, dim}, 1.0));
  p.add(prefix + ".b", Tensor({1, dim}));
}

void init_block(ParamStore& p, const std::string& prefix, int dim, int mlp_ratio, Rng& rng) {
  init_layer_norm(p, prefix + ".ln1", dim);
  init_linear(p, prefix + ".attn.q", dim, dim, rng);
  init_linear(p, prefix + ".attn.k", dim, dim, rng);
  init_linear(p, prefix + ".attn.v", dim, dim, rng);
  init_linear(p, prefix + ".attn.o", dim, dim, rng);
  init_layer_norm(p, prefix + ".ln2", dim);
  init_linear(p, prefix + ".mlp.fc1", dim, dim * mlp_ratio, rng);
  init_linear(p, prefix + ".mlp.fc2", dim * mlp_ratio, dim, rng);
}

int linear(ag::Tape& t, const Bound& b, const std::string& prefix, int x) {
  int y = t.matmul(x, b(prefix + ".w"));
  if (b.store->has(prefix + ".b")) y = t.add_rowvec(y, b(prefix + ".b"));
  return y;
}

int layer_norm(ag::Tape& t, const Bound& b, const std::string& prefix, int x) {
  return t.layer_norm(x, b(prefix + ".g"), b(prefix + ".b"));
}

int mha(ag::Tape& t, const Bound& b, const std::string& prefix, int x, int heads,
        const Tensor* add_mask) {
  const int d = t.val(x).cols();
  require(d % heads == 0, "mha: hidden size not divisible by heads");
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const int q = linear(t, b, prefix + ".q", x);
  const int k = linear(t, b, prefix + ".k", x);
  const int v = linear(t, b, prefix + ".v", x);
  std::vector<int> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const int qh = t.slice_cols(q, h * dh, (h + 1) * dh);
    const int kh = t.slice_cols(k, h * dh, (h + 1) * dh);
    const int vh = t.slice_cols(v, h * dh, (h + 1) * dh);
    const int scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt_dh);
    const int p = t.softmax_rows(scores, add_mask);
    head_outs.push_back(t.matmul(p, vh));
  }
  return linear(t, b, prefix + ".o", t.concat_cols(head_outs));
}

int transformer_block(ag::Tape& t, const Bound& b, const std::string& prefix, int x, int heads,
                      const Tensor* add_mask) {
  const int a = t.add(x, mha(t, b, prefix + ".attn", layer_norm(t, b, prefix + ".ln1", x), heads,
                             add_mask));
  const int h = linear(t, b, prefix + ".mlp.fc2",
                       t.gelu(linear(t, b, prefix + ".mlp.fc1", layer_norm(t, b, prefix + ".ln2", a))));
  return t.add(a, h);
}

}  // namespace alam::nn
