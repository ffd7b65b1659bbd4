#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alam/dataset.hpp"
#include "alam/pretrain.hpp"

namespace alam {

// ---- interleaved token stream ----

enum class Modality : int { th = 0, wr = 1, u = 2 };

struct TokenTag {
  int timestep;  // 1-based like the chunk itself
  Modality mod;
};

// Canonical per-timestep block order [z^th, z^wr, u]; archs that generate a
// subset keep the same relative order.
struct InterleavedLayout {
  int horizon = 0;
  std::vector<TokenTag> tags;

  static InterleavedLayout make(int horizon, bool gen_th, bool gen_wr, bool gen_u);
  int size() const { return static_cast<int>(tags.size()); }
  std::vector<int> modality_rows(Modality m) const;  // timestep order
};

// ---- structured attention mask ----

struct AttnMask {
  int n_ctx = 0;
  InterleavedLayout layout;
  std::vector<uint8_t> visible;  // row-major [S,S], S = n_ctx + layout.size()

  int size() const { return n_ctx + layout.size(); }
  bool at(int q, int k) const { return visible[static_cast<size_t>(q) * size() + k] != 0; }
  Tensor additive() const;  // 0 where visible, -1e9 otherwise
  void block_action_to_latent();  // inference intervention
};

// Context rows see context only. Latent tokens see context plus latent
// tokens at timesteps <= their own (both views), never actions. Action
// tokens see context, every generated token at earlier timesteps, both
// latents of their own timestep, and themselves.
AttnMask build_attn_mask(int horizon, int n_ctx);
AttnMask build_mask_for(const InterleavedLayout& layout, int n_ctx);

// ---- flow matching ----

// tau = 0.999 * xi + 0.001 with xi ~ Beta(1.5, 1) via inverse CDF U^(2/3).
double sample_tau(Rng& rng);

struct FlowSample {
  double tau = 1.0;
  std::array<Tensor, 3> eps;  // indexed by Modality; empty when not generated
};
FlowSample make_flow_sample(int horizon, int action_dim, const std::array<bool, 3>& gen,
                            Rng& rng);

// ---- interventions ----

struct InterventionSpec {
  enum class Kind { none, freeze_latent, block_attention, shuffle_latent };
  Kind kind = Kind::none;
};
InterventionSpec parse_intervention(const std::string& name);
std::string intervention_name(const InterventionSpec& spec);

// ---- Euler integration ----

// field(x_th, x_wr, x_u, tau) -> velocities (same shapes as x)
using VelocityFn = std::function<void(const Tensor&, const Tensor&, const Tensor&, double,
                                      Tensor&, Tensor&, Tensor&)>;

struct IntegrateResult {
  Tensor th, wr, u;  // x at tau = 0
};

// Joint Euler updates from tau=1 to tau=0 with uniform steps. freeze_latent
// holds the latent streams at their initial noise; shuffle_latent presents
// the latents in a permuted temporal order at every step (velocities are
// scattered back through the inverse permutation). block_attention lives in
// the mask and is handled by the caller's velocity field.
IntegrateResult integrate(const VelocityFn& field, int horizon, int action_dim, int k_steps,
                          const InterventionSpec& intervention, Rng& rng);

// ---- the policy network ----

struct PolicyContextInput {
  Frame frame_th, frame_wr;
  Vec2 goal, proprio;
};

// Which tokens an architecture generates / conditions on.
struct SeqSpec {
  bool gen_th = true, gen_wr = true, gen_u = true;
  bool latent_ctx = false;  // 2H conditioned latent tokens (two-stage stage 2)

  std::array<bool, 3> gen() const { return {gen_th, gen_wr, gen_u}; }
};
SeqSpec seq_spec_for(const std::string& arch);  // joint|action_only|latent_only|action_cond|diffusion

constexpr int kActionDim = 2;

void init_policy_params(nn::ParamStore& p, const std::string& prefix, const PolicyConfig& cfg,
                        const SeqSpec& spec, int latent_dim, int resolution, int channels,
                        Rng& rng);

Tensor pool_frame(const Frame& f);  // 8x8 average-pooled features [1, 192]

struct PolicyOut {
  int v_th = -1, v_wr = -1, v_u = -1;  // [H, kActionDim] nodes
};

// Forward pass over [context || (latent ctx) || interleaved generated
// tokens]. x_* are [H, kActionDim] nodes (ignored when not generated);
// tau_or_t is the flow time (or the diffusion step mapped to (0,1]).
PolicyOut policy_forward(ag::Tape& t, const nn::Bound& b, const std::string& prefix,
                         const PolicyConfig& cfg, const SeqSpec& spec,
                         const PolicyContextInput& ctx, int x_th, int x_wr, int x_u,
                         const Tensor* latent_ctx_th, const Tensor* latent_ctx_wr,
                         double tau_or_t, const AttnMask& mask);

// ---- model state ----

struct PolicyModel {
  RunConfig cfg;
  std::string arch;        // cfg.policy.mode
  nn::ParamStore params;   // pol.* (stage 2 for two_stage)
  nn::ParamStore stage1;   // s1.* (two_stage only)
  nn::AdamW opt, opt_stage1;
  int64_t step = 0;
  int phase = 1;           // two_stage: 1 while stage 1 trains
  Rng rng_sample;
  std::array<Tensor, 2> lat_mean, lat_std;  // per view [1, D_z]
  nlohmann::json meta;

  explicit PolicyModel(const RunConfig& cfg);

  // Velocity field of the trained network (no-grad forward), with the
  // attention intervention applied when requested.
  VelocityFn velocity_field(const PolicyContextInput& ctx,
                            const InterventionSpec& intervention) const;
};

// ---- training ----

struct PolicyBatchItem {
  PolicyContextInput ctx;
  Tensor y_u;            // [H, kActionDim], actions normalized by max_step
  Tensor z_th, z_wr;     // standardized latents [H, D_z]; empty if unused
  FlowSample flow;
  int diffusion_t = -1;                 // diffusion arch only
  std::array<Tensor, 2> latent_ctx;     // action_cond only, [H, kActionDim]
};

struct PolicyLossOut {
  int total_node = -1;
  double l_th = 0, l_wr = 0, l_u = 0, total = 0;
};

PolicyLossOut policy_batch_loss(ag::Tape& t, const nn::Bound& b, const std::string& prefix,
                                const PolicyConfig& cfg, const std::string& arch,
                                const std::vector<PolicyBatchItem>& batch);

// z_t = E(I_t, I_{t+1}) for every adjacent frame pair: frames.size()-1
// continuous (pre-codebook) latents, time-aligned with the actions.
std::vector<Tensor> extract_latent_stream(const std::vector<Frame>& frames,
                                          const nn::ParamStore& enc_params,
                                          const EncoderConfig& enc_cfg);

struct PolicyTrainResult {
  int64_t steps_done = 0;
  double first_loss = 0, last_loss = 0;
  std::string final_checkpoint;
};

// encoder_model supplies the frozen transition extractor; it must be null
// exactly when mode == action_only. Demos must be a "demo" dataset whose
// episodes are at least H+1 frames long.
PolicyTrainResult train_policy(PolicyModel& model, const Dataset& demos,
                               const PretrainModel* encoder_model, const std::string& out_dir);

PolicyModel load_policy_model(const std::string& ckpt_dir);

// ---- closed-loop evaluation ----

using ChunkProvider =
    std::function<Tensor(const WorldState& state, const Frame& th, const Frame& wr, Rng& rng)>;

struct EvalReport {
  nlohmann::json j;
  double success_rate = 0.0;
  int episodes = 0;
};

// Generic rollout harness: the provider returns an [H, 2] chunk of raw
// (unnormalized) actions; the first replan-interval steps are executed.
EvalReport run_eval(const WorldConfig& world, const PolicyConfig& cfg,
                    const ChunkProvider& provider, int n_episodes, uint64_t seed);

// Expert-in-the-loop provider (harness sanity: success rate 1.0).
ChunkProvider expert_provider(const WorldConfig& world, int horizon);

EvalReport eval_policy(const PolicyModel& model, int n_episodes,
                       const InterventionSpec& intervention, uint64_t seed);

}  // namespace alam
