#pragma once

#include <vector>

#include "alam/config.hpp"
#include "alam/rng.hpp"
#include "alam/tensor.hpp"

namespace alam {

// EMA-updated codebook. Entries satisfy e_i = m_i / max(N_i, eps_count)
// after every update. The codebook is a pretraining-time bottleneck only:
// it never enters the autograd tape, so no gradient can reach it.
struct Codebook {
  Tensor entries;                  // [M, D]
  std::vector<double> ema_counts;  // N_i
  Tensor ema_sums;                 // m_i, [M, D]
  double decay = 0.99;
  double eps_count = 1e-5;

  int size() const { return entries.rows(); }
  int dim() const { return entries.cols(); }

  static Codebook init(int codebook_size, int latent_dim, Rng& rng,
                       const QuantizerConfig& cfg);
};

struct QuantizeResult {
  Tensor z_q;            // exact copy of the winning entry
  int code_index = -1;
  double commit_loss = 0.0;  // ||z - z_q||^2
};

// Nearest entry by squared Euclidean distance; ties break to the lowest
// index.
QuantizeResult quantize(const Tensor& z, const Codebook& book);

// N_i <- g N_i + (1-g) n_i ; m_i <- g m_i + (1-g) sum of assigned z ;
// e_i <- m_i / max(N_i, eps). Plain state mutation, single training thread.
void ema_update(Codebook& book, const std::vector<Tensor>& batch_z,
                const std::vector<int>& batch_indices);

// Optional dead-code restart (off by default): entries whose count dropped
// below threshold are reseeded from a random batch vector.
void restart_dead_codes(Codebook& book, const std::vector<Tensor>& batch_z, double threshold,
                        Rng& rng);

}  // namespace alam
