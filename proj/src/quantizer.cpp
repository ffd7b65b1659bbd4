#include "alam/quantizer.hpp"

#include <cmath>

namespace alam {

Codebook Codebook::init(int codebook_size, int latent_dim, Rng& rng, const QuantizerConfig& cfg) {
  Codebook book;
  book.decay = cfg.ema_decay;
  book.eps_count = cfg.eps_count;
  book.entries = Tensor({codebook_size, latent_dim});
  for (auto& v : book.entries.data) v = rng.normal(0.0, 0.1);
  book.ema_sums = book.entries;
  book.ema_counts.assign(static_cast<size_t>(codebook_size), 1.0);
  return book;
}

QuantizeResult quantize(const Tensor& z, const Codebook& book) {
  require(book.size() > 0, "quantize: empty codebook");
  require(z.size() == book.dim(), "quantize: latent dimension mismatch");
  const int M = book.size(), D = book.dim();
  int best = 0;
  double best_d = 0.0;
  for (int i = 0; i < M; ++i) {
    double d = 0.0;
    for (int j = 0; j < D; ++j) {
      const double diff = z.data[static_cast<size_t>(j)] - book.entries.at(i, j);
      d += diff * diff;
    }
    if (i == 0 || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  QuantizeResult r;
  r.code_index = best;
  r.z_q = Tensor(z.shape);
  for (int j = 0; j < D; ++j) r.z_q.data[static_cast<size_t>(j)] = book.entries.at(best, j);
  r.commit_loss = best_d;
  return r;
}

void ema_update(Codebook& book, const std::vector<Tensor>& batch_z,
                const std::vector<int>& batch_indices) {
  require(batch_z.size() == batch_indices.size(), "ema_update: batch size mismatch");
  const int M = book.size(), D = book.dim();
  std::vector<double> n(static_cast<size_t>(M), 0.0);
  Tensor sum({M, D});
  for (size_t b = 0; b < batch_z.size(); ++b) {
    const int i = batch_indices[b];
    require(i >= 0 && i < M, "ema_update: code index out of range");
    require(batch_z[b].size() == D, "ema_update: latent dimension mismatch");
    n[static_cast<size_t>(i)] += 1.0;
    for (int j = 0; j < D; ++j) sum.at(i, j) += batch_z[b].data[static_cast<size_t>(j)];
  }
  const double g = book.decay;
  for (int i = 0; i < M; ++i) {
    book.ema_counts[static_cast<size_t>(i)] =
        g * book.ema_counts[static_cast<size_t>(i)] + (1.0 - g) * n[static_cast<size_t>(i)];
    for (int j = 0; j < D; ++j)
      book.ema_sums.at(i, j) = g * book.ema_sums.at(i, j) + (1.0 - g) * sum.at(i, j);
    const double denom = std::max(book.ema_counts[static_cast<size_t>(i)], book.eps_count);
    for (int j = 0; j < D; ++j) book.entries.at(i, j) = book.ema_sums.at(i, j) / denom;
  }
}

void restart_dead_codes(Codebook& book, const std::vector<Tensor>& batch_z, double threshold,
                        Rng& rng) {
  if (batch_z.empty()) return;
  const int D = book.dim();
  for (int i = 0; i < book.size(); ++i) {
    if (book.ema_counts[static_cast<size_t>(i)] >= threshold) continue;
    const auto& z = batch_z[rng.uniform_int(batch_z.size())];
    for (int j = 0; j < D; ++j) {
      book.entries.at(i, j) = z.data[static_cast<size_t>(j)];
      book.ema_sums.at(i, j) = z.data[static_cast<size_t>(j)];
    }
    book.ema_counts[static_cast<size_t>(i)] = 1.0;
  }
}

}  // namespace alam

