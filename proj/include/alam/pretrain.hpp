#pragma once

#include <array>
#include <string>
#include <vector>

#include "alam/dataset.hpp"
#include "alam/decoder.hpp"
#include "alam/encoder.hpp"
#include "alam/perceptual.hpp"
#include "alam/quantizer.hpp"

namespace alam {

// The four ordered pairs built from one triplet, canonical order
// fwd = [(a,b), (b,c), (a,c)], rev = [(b,a)].
struct PairSet {
  std::array<std::pair<int, int>, 3> fwd;
  std::pair<int, int> rev;
};
PairSet build_pair_set(const TripletSample& t);

// Algebraic residuals on continuous (pre-quantization) latent nodes.
int loss_add(ag::Tape& t, int z_ab, int z_bc, int z_ac);  // ||z_ac - (z_ab + z_bc)||^2
int loss_rev(ag::Tape& t, int z_ab, int z_ba);            // ||z_ab + z_ba||^2

struct LossBreakdown {
  double l_vq = 0, l_rec = 0, l_perc = 0, l_add = 0, l_rev = 0;
  double total = 0;
  double lambda_vq = 1, lambda_rec = 1, lambda_perc = 1, lambda_add = 1, lambda_rev = 1;
};

// One encoded pair of the batch objective; decode=true marks forward pairs
// whose reconstruction enters L_rec / L_perc, in_vq marks pairs contributing
// to the commitment loss and the EMA statistics.
struct PairSpec {
  Frame src, tgt;
  bool decode = true;
  bool in_vq = true;
};
struct AddTuple {
  int ab, bc, ac;  // indices into the pair list
};
struct RevTuple {
  int ab, ba;
};

// Batch objective specification shared by the ALAM and LAM modes.
struct LossBatchSpec {
  std::vector<PairSpec> pairs;
  std::vector<AddTuple> add_tuples;
  std::vector<RevTuple> rev_tuples;
};

LossBatchSpec make_alam_spec(const std::vector<std::array<Frame, 3>>& triplets,
                             bool vq_include_reverse);
LossBatchSpec make_lam_spec(const std::vector<std::pair<Frame, Frame>>& pairs);

// Model state owned by the pretraining stage, including everything needed
// to resume: optimizer moments, step counter, and the sampling streams.
struct PretrainModel {
  RunConfig cfg;
  nn::ParamStore params;  // enc.* and dec.*
  Codebook book;
  PerceptualPyramid pyramid;
  nn::AdamW opt;
  int64_t step = 0;
  Rng rng_sample;
  Rng rng_restart;

  explicit PretrainModel(const RunConfig& cfg);
};

struct BatchLoss {
  int total_node = -1;
  LossBreakdown breakdown;
  std::vector<Tensor> vq_latents;  // detached z values feeding the EMA update
  std::vector<int> vq_indices;
};

// Builds the five-term objective on the tape. Weights come from the config
// after mode switches (lam / ablations zero out the algebraic terms).
BatchLoss total_loss(ag::Tape& t, const nn::Bound& b, PretrainModel& model,
                     const LossBatchSpec& spec);

// Effective lambda weights for the configured mode.
void mode_weights(const PretrainConfig& cfg, LossBreakdown& out);

struct TrainResult {
  int64_t steps_done = 0;
  LossBreakdown first, last;
  std::string final_checkpoint;
};

// Optimization loop: AdamW, gradient clipping, EMA codebook updates,
// JSON-lines metrics, periodic checkpoints under <out_dir>/ckpt_*.
TrainResult train_pretrain(PretrainModel& model, const Dataset& data, const std::string& out_dir);

// Reconstructs a PretrainModel from a checkpoint directory.
PretrainModel load_pretrain_model(const std::string& ckpt_dir);

}  // namespace alam
