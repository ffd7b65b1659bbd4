#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "alam/synthworld.hpp"

namespace alam {

struct EncoderConfig {
  int patch = 8;
  int hidden = 128;
  int layers = 4;
  int heads = 4;
  int queries = 8;       // K_q learnable query tokens
  int latent_dim = 32;   // D_z
  int mlp_ratio = 4;
  std::string readout = "mean";  // "mean" pools query outputs; "concat" stacks them
};

struct QuantizerConfig {
  int codebook_size = 7;
  double ema_decay = 0.99;
  double eps_count = 1e-5;
  bool straight_through = true;
  bool dead_restart = false;
  double dead_threshold = 1e-2;
};

struct DecoderConfig {
  int latent_tokens = 4;  // tokens the latent is lifted to
  int blocks = 4;
};

struct PretrainConfig {
  std::string mode = "alam";  // alam | lam | alam_no_add | alam_no_rev | alam_no_both
  int steps = 20000;
  int batch = 8;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double grad_clip = 1.0;
  int gap_lo = 1;
  int gap_hi = 8;
  double lambda_vq = 1.0;
  double lambda_rec = 1.0;
  double lambda_perc = 1.0;
  double lambda_add = 1.0;
  double lambda_rev = 1.0;
  bool vq_include_reverse = true;  // reversed pair contributes to L_vq / EMA
  int log_every = 10;
  int checkpoint_every = 0;  // 0 = one epoch-equivalent (train episodes / batch)
  int keep_checkpoints = 3;
  uint64_t perc_seed = 1234;  // fixed feature-pyramid filters
};

struct ProbeConfig {
  int stride = 5;       // k, frames per short horizon
  int max_multiple = 5; // grid t in {1..max_multiple} * k
  std::vector<int> supervised = {1, 2};
  int n_anchors = 256;
  std::string norm = "l2";  // "l2" | "l1" residual norm in Add/Rev
  int n_grids = 4;
};

struct PolicyConfig {
  std::string mode = "joint";  // joint | action_only | two_stage | diffusion
  int horizon = 8;             // H, action chunk length
  int replan = 4;              // R, actions executed per chunk
  int k_steps = 10;            // Euler integration steps
  int d_model = 64;
  int layers = 3;
  int heads = 4;
  int mlp_ratio = 4;
  int steps = 30000;
  int batch = 16;
  double lr = 5e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double grad_clip = 1.0;
  double lambda_th = 1.0;
  double lambda_wr = 1.0;
  double lambda_u = 1.0;
  int diffusion_timesteps = 100;
  int eval_episodes = 100;
  int eval_max_len = 60;
  int log_every = 10;
  int checkpoint_every = 0;
  int keep_checkpoints = 3;
  bool proj_bias = false;
};

struct DataConfig {
  int episodes = 1000;
  std::string kind = "video";  // video | demo
};

struct RunConfig {
  uint64_t seed = 1;
  std::string preset = "desk";  // desk | paper
  int threads = 0;              // 0 = OpenMP default
  WorldConfig world;
  DataConfig data;
  EncoderConfig encoder;
  QuantizerConfig quantizer;
  DecoderConfig decoder;
  PretrainConfig pretrain;
  ProbeConfig probe;
  PolicyConfig policy;

  void validate() const;  // names the offending key on failure
};

// defaults <- preset <- file <- --set overrides, in that precedence.
RunConfig parse_config(const std::string& path_or_empty,
                       const std::vector<std::string>& overrides);
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
void apply_preset(RunConfig& c, const std::string& preset);

nlohmann::json world_to_json(const WorldConfig& c);
WorldConfig world_from_json(const nlohmann::json& j, const std::string& path);

}  // namespace alam
