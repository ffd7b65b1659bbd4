#include "alam/policy.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "alam/checkpoint.hpp"
#include "alam/metrics_log.hpp"

namespace alam {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------- interleaved layout ----------------

InterleavedLayout InterleavedLayout::make(int horizon, bool gen_th, bool gen_wr, bool gen_u) {
  require(horizon >= 1, "layout: horizon must be >= 1");
  InterleavedLayout l;
  l.horizon = horizon;
  for (int t = 1; t <= horizon; ++t) {
    if (gen_th) l.tags.push_back({t, Modality::th});
    if (gen_wr) l.tags.push_back({t, Modality::wr});
    if (gen_u) l.tags.push_back({t, Modality::u});
  }
  return l;
}

std::vector<int> InterleavedLayout::modality_rows(Modality m) const {
  std::vector<int> rows;
  for (int i = 0; i < size(); ++i)
    if (tags[static_cast<size_t>(i)].mod == m) rows.push_back(i);
  return rows;
}

// ---------------- mask ----------------

AttnMask build_mask_for(const InterleavedLayout& layout, int n_ctx) {
  AttnMask m;
  m.n_ctx = n_ctx;
  m.layout = layout;
  const int S = m.size();
  m.visible.assign(static_cast<size_t>(S) * S, 0);
  auto set = [&](int q, int k) { m.visible[static_cast<size_t>(q) * S + k] = 1; };
  for (int q = 0; q < S; ++q) {
    for (int k = 0; k < n_ctx; ++k) set(q, k);  // everyone sees context
    if (q < n_ctx) continue;                    // context rows see context only
    const TokenTag& qt = layout.tags[static_cast<size_t>(q - n_ctx)];
    for (int k = n_ctx; k < S; ++k) {
      const TokenTag& kt = layout.tags[static_cast<size_t>(k - n_ctx)];
      bool vis;
      if (qt.mod != Modality::u) {
        // latent tokens attend to latents up to their own timestep, never
        // to action tokens
        vis = kt.mod != Modality::u && kt.timestep <= qt.timestep;
      } else {
        // action tokens attend causally to everything earlier, both
        // latents of their own timestep, and themselves
        vis = kt.timestep < qt.timestep ||
              (kt.timestep == qt.timestep && kt.mod != Modality::u) || k == q;
      }
      if (vis) set(q, k);
    }
  }
  return m;
}

AttnMask build_attn_mask(int horizon, int n_ctx) {
  return build_mask_for(InterleavedLayout::make(horizon, true, true, true), n_ctx);
}

Tensor AttnMask::additive() const {
  const int S = size();
  Tensor t({S, S});
  for (int q = 0; q < S; ++q)
    for (int k = 0; k < S; ++k) t.at(q, k) = at(q, k) ? 0.0 : -1e9;
  return t;
}

void AttnMask::block_action_to_latent() {
  const int S = size();
  for (int q = n_ctx; q < S; ++q) {
    if (layout.tags[static_cast<size_t>(q - n_ctx)].mod != Modality::u) continue;
    for (int k = n_ctx; k < S; ++k)
      if (layout.tags[static_cast<size_t>(k - n_ctx)].mod != Modality::u)
        visible[static_cast<size_t>(q) * S + k] = 0;
  }
}

// ---------------- flow sampling ----------------

double sample_tau(Rng& rng) {
  const double xi = std::pow(rng.uniform(), 2.0 / 3.0);  // Beta(1.5, 1) via inverse CDF
  return 0.999 * xi + 0.001;
}

FlowSample make_flow_sample(int horizon, int action_dim, const std::array<bool, 3>& gen,
                            Rng& rng) {
  FlowSample s;
  s.tau = sample_tau(rng);
  for (int m = 0; m < 3; ++m) {
    if (!gen[static_cast<size_t>(m)]) continue;
    Tensor e({horizon, action_dim});
    for (auto& v : e.data) v = rng.normal();
    s.eps[static_cast<size_t>(m)] = std::move(e);
  }
  return s;
}

InterventionSpec parse_intervention(const std::string& name) {
  InterventionSpec s;
  if (name == "none") s.kind = InterventionSpec::Kind::none;
  else if (name == "freeze") s.kind = InterventionSpec::Kind::freeze_latent;
  else if (name == "block") s.kind = InterventionSpec::Kind::block_attention;
  else if (name == "shuffle") s.kind = InterventionSpec::Kind::shuffle_latent;
  else throw ValidationError("unknown intervention: " + name + " (expected none|freeze|block|shuffle)");
  return s;
}

std::string intervention_name(const InterventionSpec& spec) {
  switch (spec.kind) {
    case InterventionSpec::Kind::freeze_latent: return "freeze";
    case InterventionSpec::Kind::block_attention: return "block";
    case InterventionSpec::Kind::shuffle_latent: return "shuffle";
    default: return "none";
  }
}

// ---------------- Euler integration ----------------

IntegrateResult integrate(const VelocityFn& field, int horizon, int action_dim, int k_steps,
                          const InterventionSpec& intervention, Rng& rng) {
  require(k_steps >= 1, "integrate: k_steps must be >= 1");
  auto noise = [&]() {
    Tensor x({horizon, action_dim});
    for (auto& v : x.data) v = rng.normal();
    return x;
  };
  Tensor x_th = noise(), x_wr = noise(), x_u = noise();

  const bool freeze = intervention.kind == InterventionSpec::Kind::freeze_latent;
  const bool shuffle = intervention.kind == InterventionSpec::Kind::shuffle_latent;
  std::vector<size_t> perm(static_cast<size_t>(horizon));
  for (int i = 0; i < horizon; ++i) perm[static_cast<size_t>(i)] = static_cast<size_t>(i);
  if (shuffle) rng.shuffle(perm);

  auto permute_rows = [&](const Tensor& x) {
    Tensor y(x.shape);
    for (int t = 0; t < horizon; ++t)
      for (int d = 0; d < action_dim; ++d) y.at(t, d) = x.at(static_cast<int>(perm[static_cast<size_t>(t)]), d);
    return y;
  };

  const double dtau = 1.0 / k_steps;
  Tensor v_th, v_wr, v_u;
  for (int s = 0; s < k_steps; ++s) {
    const double tau = 1.0 - s * dtau;
    if (shuffle) {
      const Tensor p_th = permute_rows(x_th), p_wr = permute_rows(x_wr);
      field(p_th, p_wr, x_u, tau, v_th, v_wr, v_u);
      // scatter velocities back through the inverse permutation
      Tensor s_th(x_th.shape), s_wr(x_wr.shape);
      for (int t = 0; t < horizon; ++t)
        for (int d = 0; d < action_dim; ++d) {
          s_th.at(static_cast<int>(perm[static_cast<size_t>(t)]), d) = v_th.at(t, d);
          s_wr.at(static_cast<int>(perm[static_cast<size_t>(t)]), d) = v_wr.at(t, d);
        }
      v_th = std::move(s_th);
      v_wr = std::move(s_wr);
    } else {
      field(x_th, x_wr, x_u, tau, v_th, v_wr, v_u);
    }
    for (int64_t i = 0; i < x_u.size(); ++i) x_u.data[static_cast<size_t>(i)] -= dtau * v_u.data[static_cast<size_t>(i)];
    if (!freeze) {
      for (int64_t i = 0; i < x_th.size(); ++i) x_th.data[static_cast<size_t>(i)] -= dtau * v_th.data[static_cast<size_t>(i)];
      for (int64_t i = 0; i < x_wr.size(); ++i) x_wr.data[static_cast<size_t>(i)] -= dtau * v_wr.data[static_cast<size_t>(i)];
    }
  }
  return {std::move(x_th), std::move(x_wr), std::move(x_u)};
}

// ---------------- network ----------------

SeqSpec seq_spec_for(const std::string& arch) {
  if (arch == "joint" || arch == "diffusion") return {true, true, true, false};
  if (arch == "action_only") return {false, false, true, false};
  if (arch == "latent_only") return {true, true, false, false};
  if (arch == "action_cond") return {false, false, true, true};
  throw ValidationError("unknown policy arch: " + arch);
}

Tensor pool_frame(const Frame& f) {
  require(f.h % 8 == 0 && f.w % 8 == 0, "pool_frame: resolution must be divisible by 8");
  const int by = f.h / 8, bx = f.w / 8;
  Tensor out({1, 8 * 8 * f.c});
  for (int gy = 0; gy < 8; ++gy)
    for (int gx = 0; gx < 8; ++gx)
      for (int c = 0; c < f.c; ++c) {
        double s = 0.0;
        for (int y = gy * by; y < (gy + 1) * by; ++y)
          for (int x = gx * bx; x < (gx + 1) * bx; ++x) s += static_cast<double>(f.at(y, x, c));
        out.data[(static_cast<size_t>(gy) * 8 + gx) * f.c + c] = s / (by * bx);
      }
  return out;
}

namespace {

constexpr int kTauFeatures = 8;
constexpr int kCtxTokens = 4;

Tensor tau_features(double tau) {
  constexpr double pi = 3.14159265358979323846;
  Tensor f({1, kTauFeatures});
  f.data = {1.0,
            tau,
            std::sin(pi * tau),
            std::cos(pi * tau),
            std::sin(2 * pi * tau),
            std::cos(2 * pi * tau),
            std::sin(4 * pi * tau),
            std::cos(4 * pi * tau)};
  return f;
}

const char* in_name(Modality m) {
  switch (m) {
    case Modality::th: return "in_th";
    case Modality::wr: return "in_wr";
    default: return "in_u";
  }
}
const char* head_name(Modality m) {
  switch (m) {
    case Modality::th: return "head_th";
    case Modality::wr: return "head_wr";
    default: return "head_u";
  }
}

}  // namespace

void init_policy_params(nn::ParamStore& p, const std::string& prefix, const PolicyConfig& cfg,
                        const SeqSpec& spec, int latent_dim, int resolution, int channels,
                        Rng& rng) {
  require(resolution % 8 == 0, "policy: resolution must be divisible by 8");
  const int d = cfg.d_model;
  nn::init_linear(p, prefix + "ctx_frame", 8 * 8 * channels, d, rng);
  nn::init_linear(p, prefix + "ctx_goal", 2, d, rng);
  nn::init_linear(p, prefix + "ctx_prop", 2, d, rng);
  p.add(prefix + "ctx_type", nn::normal_init(kCtxTokens, d, rng, 0.02));
  nn::init_linear(p, prefix + "tau", kTauFeatures, d, rng);
  p.add(prefix + "time", nn::normal_init(cfg.horizon, d, rng, 0.02));
  p.add(prefix + "mod", nn::normal_init(3, d, rng, 0.02));
  const auto gen = spec.gen();
  for (int m = 0; m < 3; ++m) {
    if (!gen[static_cast<size_t>(m)]) continue;
    nn::init_linear(p, prefix + in_name(static_cast<Modality>(m)), kActionDim, d, rng);
    nn::init_linear(p, prefix + head_name(static_cast<Modality>(m)), d, kActionDim, rng);
  }
  for (int l = 0; l < cfg.layers; ++l)
    nn::init_block(p, prefix + "blk" + std::to_string(l), d, cfg.mlp_ratio, rng);
  nn::init_layer_norm(p, prefix + "ln_f", d);
  if (spec.gen_th) nn::init_linear(p, prefix + "proj", latent_dim, kActionDim, rng, cfg.proj_bias);
  if (spec.latent_ctx) nn::init_linear(p, prefix + "ctx_lat", kActionDim, d, rng);
}

PolicyOut policy_forward(ag::Tape& t, const nn::Bound& b, const std::string& prefix,
                         const PolicyConfig& cfg, const SeqSpec& spec,
                         const PolicyContextInput& ctx, int x_th, int x_wr, int x_u,
                         const Tensor* latent_ctx_th, const Tensor* latent_ctx_wr,
                         double tau_or_t, const AttnMask& mask) {
  const int H = cfg.horizon;
  const auto layout = InterleavedLayout::make(H, spec.gen_th, spec.gen_wr, spec.gen_u);

  // context rows
  std::vector<int> parts;
  const int type = b(prefix + "ctx_type");
  parts.push_back(t.add(nn::linear(t, b, prefix + "ctx_frame", t.constant(pool_frame(ctx.frame_th))),
                        t.slice_rows(type, 0, 1)));
  parts.push_back(t.add(nn::linear(t, b, prefix + "ctx_frame", t.constant(pool_frame(ctx.frame_wr))),
                        t.slice_rows(type, 1, 2)));
  parts.push_back(t.add(nn::linear(t, b, prefix + "ctx_goal",
                                   t.constant(Tensor::from({1, 2}, {ctx.goal.x, ctx.goal.y}))),
                        t.slice_rows(type, 2, 3)));
  parts.push_back(t.add(nn::linear(t, b, prefix + "ctx_prop",
                                   t.constant(Tensor::from({1, 2}, {ctx.proprio.x, ctx.proprio.y}))),
                        t.slice_rows(type, 3, 4)));

  const int time = b(prefix + "time");
  const int mod = b(prefix + "mod");
  if (spec.latent_ctx) {
    require(latent_ctx_th && latent_ctx_wr, "policy_forward: missing latent context");
    const int lt = t.add(t.add(nn::linear(t, b, prefix + "ctx_lat", t.constant(*latent_ctx_th)), time),
                         t.gather_rows(mod, std::vector<int>(static_cast<size_t>(H), 0)));
    const int lw = t.add(t.add(nn::linear(t, b, prefix + "ctx_lat", t.constant(*latent_ctx_wr)), time),
                         t.gather_rows(mod, std::vector<int>(static_cast<size_t>(H), 1)));
    parts.push_back(lt);
    parts.push_back(lw);
  }

  // generated tokens
  const int tau_row = nn::linear(t, b, prefix + "tau", t.constant(tau_features(tau_or_t)));
  const auto gen = spec.gen();
  const int xs[3] = {x_th, x_wr, x_u};
  std::vector<int> embeds;       // per present modality, [H, d]
  std::vector<int> mod_offset(3, -1);
  int present = 0;
  for (int m = 0; m < 3; ++m) {
    if (!gen[static_cast<size_t>(m)]) continue;
    require(xs[m] >= 0, "policy_forward: missing x tokens for generated modality");
    int e = nn::linear(t, b, prefix + in_name(static_cast<Modality>(m)), xs[m]);
    e = t.add(e, time);
    e = t.add(e, t.gather_rows(mod, std::vector<int>(static_cast<size_t>(H), m)));
    e = t.add_rowvec(e, tau_row);
    mod_offset[static_cast<size_t>(m)] = present * H;
    embeds.push_back(e);
    ++present;
  }
  const int stacked = embeds.size() == 1 ? embeds[0] : t.concat_rows(embeds);
  std::vector<int> order;
  order.reserve(static_cast<size_t>(layout.size()));
  for (const auto& tag : layout.tags)
    order.push_back(mod_offset[static_cast<size_t>(static_cast<int>(tag.mod))] + tag.timestep - 1);
  parts.push_back(t.gather_rows(stacked, order));

  int x = t.concat_rows(parts);
  require(t.val(x).rows() == mask.size(), "policy_forward: mask size mismatch");
  const Tensor add_mask = mask.additive();
  for (int l = 0; l < cfg.layers; ++l)
    x = nn::transformer_block(t, b, prefix + "blk" + std::to_string(l), x, cfg.heads, &add_mask);
  x = nn::layer_norm(t, b, prefix + "ln_f", x);

  PolicyOut out;
  const int n_ctx = mask.n_ctx;
  auto head = [&](Modality m) {
    std::vector<int> rows = layout.modality_rows(m);
    for (auto& r : rows) r += n_ctx;
    return nn::linear(t, b, prefix + head_name(m), t.gather_rows(x, rows));
  };
  if (spec.gen_th) out.v_th = head(Modality::th);
  if (spec.gen_wr) out.v_wr = head(Modality::wr);
  if (spec.gen_u) out.v_u = head(Modality::u);
  return out;
}

// ---------------- model ----------------

PolicyModel::PolicyModel(const RunConfig& run_cfg) : cfg(run_cfg), arch(run_cfg.policy.mode) {
  Rng init = make_stream(cfg.seed, "policy.init");
  const int dz = cfg.encoder.latent_dim;
  const int res = cfg.world.resolution;
  const int ch = cfg.world.channels;
  if (arch == "two_stage") {
    init_policy_params(stage1, "s1.", cfg.policy, seq_spec_for("latent_only"), dz, res, ch, init);
    init_policy_params(params, "pol.", cfg.policy, seq_spec_for("action_cond"), dz, res, ch, init);
  } else {
    init_policy_params(params, "pol.", cfg.policy, seq_spec_for(arch), dz, res, ch, init);
  }
  for (auto* o : {&opt, &opt_stage1}) {
    o->lr = cfg.policy.lr;
    o->beta1 = cfg.policy.beta1;
    o->beta2 = cfg.policy.beta2;
    o->weight_decay = cfg.policy.weight_decay;
  }
  rng_sample = make_stream(cfg.seed, "policy.sample");
  for (int v = 0; v < 2; ++v) {
    lat_mean[static_cast<size_t>(v)] = Tensor({1, dz});
    lat_std[static_cast<size_t>(v)] = Tensor::full({1, dz}, 1.0);
  }
}

namespace {

// cosine noise schedule for the diffusion arm
double alpha_bar(int i, int T) {
  constexpr double s = 0.008;
  constexpr double pi = 3.14159265358979323846;
  auto f = [&](double u) {
    const double c = std::cos((u + s) / (1.0 + s) * pi / 2.0);
    return c * c;
  };
  return f(static_cast<double>(i) / T) / f(0.0);
}

struct ForwardValues {
  Tensor th, wr, u;
};

ForwardValues forward_values(const nn::ParamStore& store, const std::string& prefix,
                             const PolicyConfig& cfg, const SeqSpec& spec,
                             const PolicyContextInput& ctx, const Tensor& x_th,
                             const Tensor& x_wr, const Tensor& x_u,
                             const std::array<Tensor, 2>* latent_ctx, double tau_or_t,
                             const AttnMask& mask) {
  ag::Tape t;
  nn::Bound b = nn::bind(t, store, false);
  const int ith = spec.gen_th ? t.constant(x_th) : -1;
  const int iwr = spec.gen_wr ? t.constant(x_wr) : -1;
  const int iu = spec.gen_u ? t.constant(x_u) : -1;
  const PolicyOut out = policy_forward(t, b, prefix, cfg, spec, ctx, ith, iwr, iu,
                                       latent_ctx ? &(*latent_ctx)[0] : nullptr,
                                       latent_ctx ? &(*latent_ctx)[1] : nullptr, tau_or_t, mask);
  ForwardValues v;
  if (out.v_th >= 0) v.th = t.val(out.v_th);
  if (out.v_wr >= 0) v.wr = t.val(out.v_wr);
  if (out.v_u >= 0) v.u = t.val(out.v_u);
  return v;
}

}  // namespace

VelocityFn PolicyModel::velocity_field(const PolicyContextInput& ctx,
                                       const InterventionSpec& intervention) const {
  require(arch == "joint" || arch == "action_only",
          "velocity_field: arch " + arch + " needs a dedicated sampler");
  const SeqSpec spec = seq_spec_for(arch);
  AttnMask mask = build_mask_for(
      InterleavedLayout::make(cfg.policy.horizon, spec.gen_th, spec.gen_wr, spec.gen_u),
      kCtxTokens);
  if (intervention.kind == InterventionSpec::Kind::block_attention) mask.block_action_to_latent();
  const PolicyConfig pc = cfg.policy;
  const nn::ParamStore* store = &params;
  return [store, pc, spec, ctx, mask](const Tensor& x_th, const Tensor& x_wr, const Tensor& x_u,
                                      double tau, Tensor& v_th, Tensor& v_wr, Tensor& v_u) {
    const ForwardValues v =
        forward_values(*store, "pol.", pc, spec, ctx, x_th, x_wr, x_u, nullptr, tau, mask);
    v_th = spec.gen_th ? v.th : Tensor(x_th.shape);
    v_wr = spec.gen_wr ? v.wr : Tensor(x_wr.shape);
    v_u = v.u;
  };
}

// ---------------- training ----------------

PolicyLossOut policy_batch_loss(ag::Tape& t, const nn::Bound& b, const std::string& prefix,
                                const PolicyConfig& cfg, const std::string& arch,
                                const std::vector<PolicyBatchItem>& batch) {
  require(!batch.empty(), "policy_batch_loss: empty batch");
  const SeqSpec spec = seq_spec_for(arch);
  const int n_ctx = kCtxTokens + (spec.latent_ctx ? 2 * cfg.horizon : 0);
  const AttnMask mask = build_mask_for(
      InterleavedLayout::make(cfg.horizon, spec.gen_th, spec.gen_wr, spec.gen_u), n_ctx);
  const bool diffusion = arch == "diffusion";

  std::vector<int> th_losses, wr_losses, u_losses;
  for (const auto& item : batch) {
    int x_th = -1, x_wr = -1, x_u = -1;
    int tgt_th = -1, tgt_wr = -1, tgt_u = -1;
    double time_input = 0.0;

    // latent targets are projections of the frozen, standardized latents;
    // the projection is trainable, so they stay on the tape
    int y_th = -1, y_wr = -1;
    if (spec.gen_th) {
      y_th = nn::linear(t, b, prefix + "proj", t.constant(item.z_th));
      y_wr = nn::linear(t, b, prefix + "proj", t.constant(item.z_wr));
    }

    if (diffusion) {
      require(item.diffusion_t >= 0, "policy_batch_loss: missing diffusion timestep");
      const double ab = alpha_bar(item.diffusion_t, cfg.diffusion_timesteps);
      const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
      time_input = (item.diffusion_t + 0.5) / cfg.diffusion_timesteps;
      const auto& e = item.flow.eps;
      x_th = t.add(t.scale(y_th, sa), t.constant([&] {
        Tensor s = e[0];
        for (auto& v : s.data) v *= sb;
        return s;
      }()));
      x_wr = t.add(t.scale(y_wr, sa), t.constant([&] {
        Tensor s = e[1];
        for (auto& v : s.data) v *= sb;
        return s;
      }()));
      Tensor xu = item.y_u;
      for (int64_t i = 0; i < xu.size(); ++i)
        xu.data[static_cast<size_t>(i)] = sa * xu.data[static_cast<size_t>(i)] + sb * e[2].data[static_cast<size_t>(i)];
      x_u = t.constant(std::move(xu));
      tgt_th = t.constant(e[0]);
      tgt_wr = t.constant(e[1]);
      tgt_u = t.constant(e[2]);
    } else {
      const double tau = item.flow.tau;
      time_input = tau;
      const auto& e = item.flow.eps;
      if (spec.gen_th) {
        x_th = t.add(t.constant([&] {
          Tensor s = e[0];
          for (auto& v : s.data) v *= tau;
          return s;
        }()), t.scale(y_th, 1.0 - tau));
        x_wr = t.add(t.constant([&] {
          Tensor s = e[1];
          for (auto& v : s.data) v *= tau;
          return s;
        }()), t.scale(y_wr, 1.0 - tau));
        tgt_th = t.sub(t.constant(e[0]), y_th);
        tgt_wr = t.sub(t.constant(e[1]), y_wr);
      }
      if (spec.gen_u) {
        Tensor xu = item.y_u;
        Tensor vu = item.y_u;
        for (int64_t i = 0; i < xu.size(); ++i) {
          const size_t k = static_cast<size_t>(i);
          xu.data[k] = tau * e[2].data[k] + (1.0 - tau) * item.y_u.data[k];
          vu.data[k] = e[2].data[k] - item.y_u.data[k];
        }
        x_u = t.constant(std::move(xu));
        tgt_u = t.constant(std::move(vu));
      }
    }

    const std::array<Tensor, 2>* latctx = spec.latent_ctx ? &item.latent_ctx : nullptr;
    const PolicyOut out = policy_forward(t, b, prefix, cfg, spec, item.ctx, x_th, x_wr, x_u,
                                         latctx ? &(*latctx)[0] : nullptr,
                                         latctx ? &(*latctx)[1] : nullptr, time_input, mask);
    auto mod_loss = [&](int pred, int tgt) {
      return diffusion ? ag::mse(t, pred, tgt) : ag::l1_mean(t, pred, tgt);
    };
    if (spec.gen_th) {
      th_losses.push_back(mod_loss(out.v_th, tgt_th));
      wr_losses.push_back(mod_loss(out.v_wr, tgt_wr));
    }
    if (spec.gen_u) u_losses.push_back(mod_loss(out.v_u, tgt_u));
  }

  auto mean_of = [&](std::vector<int>& nodes) -> int {
    if (nodes.empty()) return t.constant_scalar(0.0);
    int acc = nodes[0];
    for (size_t i = 1; i < nodes.size(); ++i) acc = t.add(acc, nodes[i]);
    return t.scale(acc, 1.0 / static_cast<double>(nodes.size()));
  };
  const int l_th = mean_of(th_losses), l_wr = mean_of(wr_losses), l_u = mean_of(u_losses);
  int total = t.add(t.add(t.scale(l_th, cfg.lambda_th), t.scale(l_wr, cfg.lambda_wr)),
                    t.scale(l_u, cfg.lambda_u));
  PolicyLossOut out;
  out.total_node = total;
  out.l_th = t.val(l_th).data[0];
  out.l_wr = t.val(l_wr).data[0];
  out.l_u = t.val(l_u).data[0];
  out.total = t.val(total).data[0];
  return out;
}

std::vector<Tensor> extract_latent_stream(const std::vector<Frame>& frames,
                                          const nn::ParamStore& enc_params,
                                          const EncoderConfig& enc_cfg) {
  require(frames.size() >= 2, "extract_latent_stream: need at least 2 frames");
  std::vector<Tensor> out;
  out.reserve(frames.size() - 1);
  for (size_t t = 0; t + 1 < frames.size(); ++t)
    out.push_back(encoder::encode_value(enc_params, enc_cfg, frames[t], frames[t + 1]));
  return out;
}

namespace {

struct LatentCache {
  // [episode][view] -> [T-1] standardized latents [1, D_z]
  std::vector<std::array<std::vector<Tensor>, 2>> eps;
};

LatentCache build_latent_cache(PolicyModel& model, const Dataset& demos,
                               const PretrainModel& enc_model) {
  LatentCache cache;
  cache.eps.resize(static_cast<size_t>(demos.size()));
  const EncoderConfig& ec = enc_model.cfg.encoder;
  const int dz = ec.latent_dim;
  Tensor sum[2] = {Tensor({1, dz}), Tensor({1, dz})};
  Tensor sum2[2] = {Tensor({1, dz}), Tensor({1, dz})};
  int64_t count = 0;
  for (int e = 0; e < demos.size(); ++e) {
    const Episode ep = demos.load(e);
    for (int v = 0; v < 2; ++v) {
      std::vector<Frame> frames;
      frames.reserve(static_cast<size_t>(ep.length()));
      for (int t = 0; t < ep.length(); ++t) frames.push_back(ep.frame(static_cast<View>(v), t));
      auto& lane = cache.eps[static_cast<size_t>(e)][static_cast<size_t>(v)];
      lane = extract_latent_stream(frames, enc_model.params, ec);
      for (const Tensor& z : lane)
        for (int j = 0; j < dz; ++j) {
          sum[v].data[static_cast<size_t>(j)] += z.data[static_cast<size_t>(j)];
          sum2[v].data[static_cast<size_t>(j)] += z.data[static_cast<size_t>(j)] * z.data[static_cast<size_t>(j)];
        }
    }
    count += ep.length() - 1;
  }
  require(count > 0, "policy: demo dataset has no transitions");
  for (int v = 0; v < 2; ++v) {
    for (int j = 0; j < dz; ++j) {
      const double mean = sum[v].data[static_cast<size_t>(j)] / static_cast<double>(count);
      const double var =
          sum2[v].data[static_cast<size_t>(j)] / static_cast<double>(count) - mean * mean;
      model.lat_mean[static_cast<size_t>(v)].data[static_cast<size_t>(j)] = mean;
      model.lat_std[static_cast<size_t>(v)].data[static_cast<size_t>(j)] = std::sqrt(std::max(var, 1e-12));
    }
  }
  for (auto& per_ep : cache.eps)
    for (int v = 0; v < 2; ++v)
      for (auto& z : per_ep[static_cast<size_t>(v)])
        for (int j = 0; j < dz; ++j)
          z.data[static_cast<size_t>(j)] =
              (z.data[static_cast<size_t>(j)] - model.lat_mean[static_cast<size_t>(v)].data[static_cast<size_t>(j)]) /
              model.lat_std[static_cast<size_t>(v)].data[static_cast<size_t>(j)];
  return cache;
}

nn::ParamStore merged_params(const PolicyModel& model) {
  if (model.arch != "two_stage") return model.params;
  nn::ParamStore merged;
  for (const auto& e : model.stage1.entries()) {
    Tensor v = e.value;
    merged.add(e.name, std::move(v));
    merged.entries().back().m = e.m;
    merged.entries().back().v = e.v;
  }
  for (const auto& e : model.params.entries()) {
    Tensor v = e.value;
    merged.add(e.name, std::move(v));
    merged.entries().back().m = e.m;
    merged.entries().back().v = e.v;
  }
  return merged;
}

void save_policy_checkpoint(const PolicyModel& model, int64_t step, const std::string& dir) {
  CheckpointData data;
  data.kind = "policy";
  data.config = config_to_json(model.cfg);
  data.step = step;
  data.params = merged_params(model);
  data.opt = model.opt;
  data.meta = model.meta;
  data.meta["arch"] = model.arch;
  data.meta["phase"] = model.phase;
  data.meta["stage1_opt_t"] = model.opt_stage1.t;
  data.rng_states.push_back(RngState::capture("sample", model.rng_sample));
  data.extra.emplace_back("lat_mean_th", model.lat_mean[0]);
  data.extra.emplace_back("lat_std_th", model.lat_std[0]);
  data.extra.emplace_back("lat_mean_wr", model.lat_mean[1]);
  data.extra.emplace_back("lat_std_wr", model.lat_std[1]);
  save_checkpoint(data, dir);
}

std::string ckpt_dir_name(const std::string& out_dir, int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_step_%07lld", static_cast<long long>(step));
  return (fs::path(out_dir) / buf).string();
}

}  // namespace

PolicyModel load_policy_model(const std::string& ckpt_dir) {
  CheckpointData data = load_checkpoint(ckpt_dir);
  require(data.kind == "policy", "expected a policy checkpoint in " + ckpt_dir);
  RunConfig cfg = config_from_json(data.config);
  PolicyModel model(cfg);
  if (model.arch == "two_stage") {
    nn::ParamStore s1, pol;
    for (auto& e : data.params.entries()) {
      nn::ParamStore& dst = e.name.rfind("s1.", 0) == 0 ? s1 : pol;
      dst.add(e.name, e.value);
      dst.entries().back().m = e.m;
      dst.entries().back().v = e.v;
    }
    model.stage1 = std::move(s1);
    model.params = std::move(pol);
  } else {
    model.params = std::move(data.params);
  }
  model.opt = data.opt;
  model.step = data.step;
  model.meta = data.meta;
  if (data.meta.contains("phase")) model.phase = data.meta["phase"].get<int>();
  if (data.meta.contains("stage1_opt_t"))
    model.opt_stage1.t = data.meta["stage1_opt_t"].get<int64_t>();
  for (const auto& r : data.rng_states)
    if (r.name == "sample") r.restore_into(model.rng_sample);
  if (const Tensor* t = data.find_extra("lat_mean_th")) model.lat_mean[0] = *t;
  if (const Tensor* t = data.find_extra("lat_std_th")) model.lat_std[0] = *t;
  if (const Tensor* t = data.find_extra("lat_mean_wr")) model.lat_mean[1] = *t;
  if (const Tensor* t = data.find_extra("lat_std_wr")) model.lat_std[1] = *t;
  return model;
}

PolicyTrainResult train_policy(PolicyModel& model, const Dataset& demos,
                               const PretrainModel* encoder_model, const std::string& out_dir) {
  const PolicyConfig& pc = model.cfg.policy;
  const int H = pc.horizon;
  require(demos.kind() == "demo", "train_policy expects a demo dataset");
  if (model.arch == "action_only") {
    require(encoder_model == nullptr, "action_only mode must not receive an encoder");
  } else {
    require(encoder_model != nullptr, "mode " + model.arch + " needs the frozen encoder");
    require(encoder_model->cfg.encoder.latent_dim == model.cfg.encoder.latent_dim,
            "policy latent_dim does not match the encoder checkpoint");
    require(encoder_model->cfg.world.resolution == demos.world().resolution,
            "demo resolution does not match the encoder checkpoint");
  }

  // demo windows need H+1 frames
  std::vector<int> usable;
  for (int e = 0; e < demos.size(); ++e)
    if (demos.load(e).length() >= H + 1) usable.push_back(e);
  require(!usable.empty(), "train_policy: no demo long enough for the horizon");

  LatentCache cache;
  if (model.arch != "action_only") {
    cache = build_latent_cache(model, demos, *encoder_model);
    model.meta["encoder_params_hash"] = encoder_model->params.content_hash();
  }

  fs::create_directories(out_dir);
  MetricsLog metrics((fs::path(out_dir) / "metrics.jsonl").string());
  TimingLog timings((fs::path(out_dir) / "timings.jsonl").string());
  const auto t_start = std::chrono::steady_clock::now();
  const int64_t ckpt_every =
      pc.checkpoint_every > 0
          ? pc.checkpoint_every
          : std::max<int64_t>(1, static_cast<int64_t>(usable.size()) / std::max(1, pc.batch));
  std::vector<std::string> kept;

  const int64_t stage1_steps = model.arch == "two_stage" ? pc.steps / 2 : 0;
  const double action_scale = model.cfg.world.max_step;

  PolicyTrainResult result;
  for (int64_t step = model.step; step < pc.steps; ++step) {
    const bool in_stage1 = model.arch == "two_stage" && step < stage1_steps;
    if (model.arch == "two_stage" && !in_stage1) model.phase = 2;
    const std::string arch = model.arch == "two_stage" ? (in_stage1 ? "latent_only" : "action_cond")
                                                       : model.arch;
    const std::string prefix = in_stage1 ? "s1." : "pol.";
    nn::ParamStore& store = in_stage1 ? model.stage1 : model.params;
    nn::AdamW& opt = in_stage1 ? model.opt_stage1 : model.opt;
    const SeqSpec spec = seq_spec_for(arch);

    std::vector<PolicyBatchItem> batch;
    for (int i = 0; i < pc.batch; ++i) {
      const int e = usable[model.rng_sample.uniform_int(usable.size())];
      const Episode ep = demos.load(e);
      const int w = static_cast<int>(model.rng_sample.uniform_range(0, ep.length() - 1 - H));
      PolicyBatchItem item;
      item.ctx.frame_th = ep.frame(View::global, w);
      item.ctx.frame_wr = ep.frame(View::wrist, w);
      item.ctx.goal = ep.states[static_cast<size_t>(w)].goal;
      item.ctx.proprio = ep.states[static_cast<size_t>(w)].agent;
      item.y_u = Tensor({H, kActionDim});
      for (int h = 0; h < H; ++h) {
        item.y_u.at(h, 0) = ep.actions[static_cast<size_t>(w + h)].u.x / action_scale;
        item.y_u.at(h, 1) = ep.actions[static_cast<size_t>(w + h)].u.y / action_scale;
      }
      if (spec.gen_th || spec.latent_ctx) {
        auto slice_lat = [&](int v) {
          Tensor z({H, model.cfg.encoder.latent_dim});
          for (int h = 0; h < H; ++h) {
            const Tensor& row = cache.eps[static_cast<size_t>(e)][static_cast<size_t>(v)][static_cast<size_t>(w + h)];
            for (int j = 0; j < z.cols(); ++j) z.at(h, j) = row.data[static_cast<size_t>(j)];
          }
          return z;
        };
        if (spec.gen_th) {
          item.z_th = slice_lat(0);
          item.z_wr = slice_lat(1);
        }
        if (spec.latent_ctx) {
          // condition on stage-1 samples, not ground truth
          PolicyContextInput ctx = item.ctx;
          const PolicyConfig s1_cfg = pc;
          const SeqSpec s1_spec = seq_spec_for("latent_only");
          AttnMask s1_mask = build_mask_for(
              InterleavedLayout::make(H, true, true, false), kCtxTokens);
          const nn::ParamStore* s1_store = &model.stage1;
          VelocityFn field = [s1_store, s1_cfg, s1_spec, ctx, s1_mask](
                                 const Tensor& x_th, const Tensor& x_wr, const Tensor& x_u,
                                 double tau, Tensor& v_th, Tensor& v_wr, Tensor& v_u) {
            const ForwardValues v = forward_values(*s1_store, "s1.", s1_cfg, s1_spec, ctx, x_th,
                                                   x_wr, x_u, nullptr, tau, s1_mask);
            v_th = v.th;
            v_wr = v.wr;
            v_u = Tensor(x_u.shape);
          };
          const IntegrateResult lat =
              integrate(field, H, kActionDim, pc.k_steps, InterventionSpec{}, model.rng_sample);
          item.latent_ctx = {lat.th, lat.wr};
        }
      }
      if (arch == "diffusion") {
        item.diffusion_t = static_cast<int>(model.rng_sample.uniform_int(
            static_cast<uint64_t>(pc.diffusion_timesteps)));
        for (int m = 0; m < 3; ++m) {
          Tensor eps({H, kActionDim});
          for (auto& v : eps.data) v = model.rng_sample.normal();
          item.flow.eps[static_cast<size_t>(m)] = std::move(eps);
        }
      } else {
        item.flow = make_flow_sample(H, kActionDim, spec.gen(), model.rng_sample);
      }
      batch.push_back(std::move(item));
    }

    ag::Tape tape;
    nn::Bound bound = nn::bind(tape, store, true);
    PolicyLossOut loss = policy_batch_loss(tape, bound, prefix, pc, arch, batch);
    if (!std::isfinite(loss.total)) {
      throw NumericalError("policy training diverged at step " + std::to_string(step));
    }
    tape.backward(loss.total_node);
    std::vector<Tensor> grads = nn::collect_grads(tape, bound);
    const double grad_norm = nn::clip_global_norm(grads, pc.grad_clip);
    opt.step(store, grads);
    model.step = step + 1;

    if (step == 0) result.first_loss = loss.total;
    result.last_loss = loss.total;

    if (model.step % pc.log_every == 0 || model.step == pc.steps) {
      metrics.append(model.step, {{"loss_total", loss.total},
                                  {"loss_th", loss.l_th},
                                  {"loss_wr", loss.l_wr},
                                  {"loss_u", loss.l_u},
                                  {"grad_norm", grad_norm},
                                  {"phase", static_cast<double>(model.phase)}});
      timings.append(model.step,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                         .count());
    }
    if (model.step % ckpt_every == 0 && model.step < pc.steps) {
      const std::string dir = ckpt_dir_name(out_dir, model.step);
      save_policy_checkpoint(model, model.step, dir);
      kept.push_back(dir);
      while (static_cast<int>(kept.size()) > pc.keep_checkpoints) {
        fs::remove_all(kept.front());
        kept.erase(kept.begin());
      }
    }
  }

  result.steps_done = model.step;
  result.final_checkpoint = (fs::path(out_dir) / "ckpt_final").string();
  save_policy_checkpoint(model, model.step, result.final_checkpoint);
  return result;
}

// ---------------- evaluation ----------------

EvalReport run_eval(const WorldConfig& world, const PolicyConfig& cfg,
                    const ChunkProvider& provider, int n_episodes, uint64_t seed) {
  EvalReport report;
  report.j["schema"] = "alam-eval-v1";
  report.j["episodes"] = json::array();
  int successes = 0;
  for (int e = 0; e < n_episodes; ++e) {
    Rng env_rng = make_stream(seed, "eval.env", static_cast<uint64_t>(e));
    WorldState state = sample_initial_state(env_rng, world);
    bool success = (state.goal - state.agent).linf() <= world.eps_goal;
    int steps = 0;
    int replan = 0;
    while (!success && steps < cfg.eval_max_len) {
      const Frame th = render_view(state, View::global, world.resolution, world);
      const Frame wr = render_view(state, View::wrist, world.resolution, world);
      Rng chunk_rng = make_stream(seed, "eval.chunk",
                                  static_cast<uint64_t>(e) * 100000 + static_cast<uint64_t>(replan));
      const Tensor chunk = provider(state, th, wr, chunk_rng);
      require(chunk.rows() == cfg.horizon && chunk.cols() == kActionDim,
              "run_eval: provider returned a malformed chunk");
      for (int h = 0; h < std::min(cfg.replan, cfg.horizon) && !success &&
                      steps < cfg.eval_max_len; ++h) {
        // out-of-range commands are clipped into the actuation envelope;
        // non-finite ones (a diverged sampler) become no-ops
        auto safe = [&](double v) {
          return std::isfinite(v) ? std::clamp(v, -world.max_step, world.max_step) : 0.0;
        };
        ActionCmd a;
        a.u.x = safe(chunk.at(h, 0));
        a.u.y = safe(chunk.at(h, 1));
        state = step_dynamics(state, a, world.max_step);
        ++steps;
        success = (state.goal - state.agent).linf() <= world.eps_goal;
      }
      ++replan;
    }
    successes += success ? 1 : 0;
    report.j["episodes"].push_back(json{{"episode", e},
                                        {"success", success},
                                        {"steps", steps},
                                        {"final_dist", (state.goal - state.agent).linf()}});
  }
  report.episodes = n_episodes;
  report.success_rate = n_episodes > 0 ? static_cast<double>(successes) / n_episodes : 0.0;
  report.j["n"] = n_episodes;
  report.j["successes"] = successes;
  report.j["success_rate"] = report.success_rate;
  // Wilson 95% interval
  if (n_episodes > 0) {
    const double z = 1.959963984540054;
    const double n = n_episodes, p = report.success_rate;
    const double denom = 1.0 + z * z / n;
    const double center = (p + z * z / (2 * n)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
    report.j["ci95"] = {std::max(0.0, center - half), std::min(1.0, center + half)};
  } else {
    report.j["ci95"] = {0.0, 0.0};
  }
  return report;
}

ChunkProvider expert_provider(const WorldConfig& world, int horizon) {
  return [world, horizon](const WorldState& state, const Frame&, const Frame&, Rng&) {
    Tensor chunk({horizon, kActionDim});
    WorldState s = state;
    for (int h = 0; h < horizon; ++h) {
      ActionCmd a;
      a.u.x = std::clamp(s.goal.x - s.agent.x, -world.max_step, world.max_step);
      a.u.y = std::clamp(s.goal.y - s.agent.y, -world.max_step, world.max_step);
      chunk.at(h, 0) = a.u.x;
      chunk.at(h, 1) = a.u.y;
      s = step_dynamics(s, a, world.max_step);
    }
    return chunk;
  };
}

EvalReport eval_policy(const PolicyModel& model, int n_episodes,
                       const InterventionSpec& intervention, uint64_t seed) {
  const PolicyConfig& pc = model.cfg.policy;
  const WorldConfig& world = model.cfg.world;
  const double action_scale = world.max_step;
  const int H = pc.horizon;

  if (model.arch == "action_only")
    require(intervention.kind == InterventionSpec::Kind::none,
            "interventions need a co-generated latent stream; arch is action_only");

  ChunkProvider provider;
  if (model.arch == "joint" || model.arch == "action_only") {
    const PolicyModel* m = &model;
    provider = [m, intervention, action_scale, H, pc](const WorldState& state, const Frame& th,
                                                      const Frame& wr, Rng& rng) {
      PolicyContextInput ctx{th, wr, state.goal, state.agent};
      const VelocityFn field = m->velocity_field(ctx, intervention);
      const IntegrateResult r = integrate(field, H, kActionDim, pc.k_steps, intervention, rng);
      Tensor chunk = r.u;
      for (auto& v : chunk.data) v *= action_scale;
      return chunk;
    };
  } else if (model.arch == "two_stage") {
    require(intervention.kind == InterventionSpec::Kind::none,
            "two_stage eval supports only the none intervention");
    const PolicyModel* m = &model;
    provider = [m, action_scale, H, pc](const WorldState& state, const Frame& th, const Frame& wr,
                                        Rng& rng) {
      PolicyContextInput ctx{th, wr, state.goal, state.agent};
      // stage 1: sample latents
      const SeqSpec s1_spec = seq_spec_for("latent_only");
      const AttnMask s1_mask =
          build_mask_for(InterleavedLayout::make(H, true, true, false), kCtxTokens);
      VelocityFn s1_field = [m, ctx, s1_spec, s1_mask, pc](const Tensor& x_th, const Tensor& x_wr,
                                                           const Tensor& x_u, double tau,
                                                           Tensor& v_th, Tensor& v_wr,
                                                           Tensor& v_u) {
        const ForwardValues v = forward_values(m->stage1, "s1.", pc, s1_spec, ctx, x_th, x_wr,
                                               x_u, nullptr, tau, s1_mask);
        v_th = v.th;
        v_wr = v.wr;
        v_u = Tensor(x_u.shape);
      };
      const IntegrateResult lat =
          integrate(s1_field, H, kActionDim, pc.k_steps, InterventionSpec{}, rng);
      const std::array<Tensor, 2> latctx{lat.th, lat.wr};
      // stage 2: actions conditioned on the sampled latents
      const SeqSpec s2_spec = seq_spec_for("action_cond");
      const AttnMask s2_mask = build_mask_for(InterleavedLayout::make(H, false, false, true),
                                              kCtxTokens + 2 * H);
      VelocityFn s2_field = [m, ctx, s2_spec, s2_mask, pc, latctx](
                                const Tensor& x_th, const Tensor& x_wr, const Tensor& x_u,
                                double tau, Tensor& v_th, Tensor& v_wr, Tensor& v_u) {
        const ForwardValues v = forward_values(m->params, "pol.", pc, s2_spec, ctx, x_th, x_wr,
                                               x_u, &latctx, tau, s2_mask);
        v_th = Tensor(x_th.shape);
        v_wr = Tensor(x_wr.shape);
        v_u = v.u;
      };
      const IntegrateResult r =
          integrate(s2_field, H, kActionDim, pc.k_steps, InterventionSpec{}, rng);
      Tensor chunk = r.u;
      for (auto& v : chunk.data) v *= action_scale;
      return chunk;
    };
  } else if (model.arch == "diffusion") {
    require(intervention.kind == InterventionSpec::Kind::none,
            "diffusion eval supports only the none intervention");
    const PolicyModel* m = &model;
    provider = [m, action_scale, H, pc](const WorldState& state, const Frame& th, const Frame& wr,
                                        Rng& rng) {
      PolicyContextInput ctx{th, wr, state.goal, state.agent};
      const SeqSpec spec = seq_spec_for("diffusion");
      const AttnMask mask =
          build_mask_for(InterleavedLayout::make(H, true, true, true), kCtxTokens);
      auto noise = [&rng, H]() {
        Tensor x({H, kActionDim});
        for (auto& v : x.data) v = rng.normal();
        return x;
      };
      Tensor x_th = noise(), x_wr = noise(), x_u = noise();
      const int T = pc.diffusion_timesteps;
      for (int i = T - 1; i >= 0; --i) {
        const double ab = alpha_bar(i, T);
        const double ab_prev = i > 0 ? alpha_bar(i - 1, T) : 1.0;
        const double alpha = ab / ab_prev;
        const double beta = std::min(1.0 - alpha, 0.999);
        const ForwardValues eps = forward_values(m->params, "pol.", pc, spec, ctx, x_th, x_wr,
                                                 x_u, nullptr, (i + 0.5) / T, mask);
        auto ddpm_step = [&](Tensor& x, const Tensor& e) {
          const double c1 = 1.0 / std::sqrt(alpha);
          const double c2 = beta / std::sqrt(1.0 - ab);
          for (int64_t k = 0; k < x.size(); ++k)
            x.data[static_cast<size_t>(k)] = c1 * (x.data[static_cast<size_t>(k)] - c2 * e.data[static_cast<size_t>(k)]);
          if (i > 0) {
            const double sigma = std::sqrt(beta);
            for (auto& v : x.data) v += sigma * rng.normal();
          }
        };
        ddpm_step(x_th, eps.th);
        ddpm_step(x_wr, eps.wr);
        ddpm_step(x_u, eps.u);
      }
      Tensor chunk = x_u;
      for (auto& v : chunk.data) v *= action_scale;
      return chunk;
    };
  } else {
    throw ValidationError("eval_policy: unsupported arch " + model.arch);
  }

  EvalReport report = run_eval(world, pc, provider, n_episodes, seed);
  report.j["arch"] = model.arch;
  report.j["intervention"] = intervention_name(intervention);
  report.j["seed"] = seed;
  return report;
}

}  // namespace alam

