#include "alam/pretrain.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "alam/checkpoint.hpp"
#include "alam/metrics_log.hpp"

namespace alam {

namespace fs = std::filesystem;

PairSet build_pair_set(const TripletSample& t) {
  require(t.a < t.b && t.b < t.c, "build_pair_set: indices must satisfy a<b<c");
  PairSet p;
  p.fwd = {std::pair{t.a, t.b}, std::pair{t.b, t.c}, std::pair{t.a, t.c}};
  p.rev = {t.b, t.a};
  return p;
}

int loss_add(ag::Tape& t, int z_ab, int z_bc, int z_ac) {
  return ag::sum_squares(t, t.sub(z_ac, t.add(z_ab, z_bc)));
}

int loss_rev(ag::Tape& t, int z_ab, int z_ba) {
  return ag::sum_squares(t, t.add(z_ab, z_ba));
}

LossBatchSpec make_alam_spec(const std::vector<std::array<Frame, 3>>& triplets,
                             bool vq_include_reverse) {
  LossBatchSpec spec;
  for (const auto& tr : triplets) {
    const int base = static_cast<int>(spec.pairs.size());
    spec.pairs.push_back({tr[0], tr[1], true, true});                     // (a,b)
    spec.pairs.push_back({tr[1], tr[2], true, true});                     // (b,c)
    spec.pairs.push_back({tr[0], tr[2], true, true});                     // (a,c)
    spec.pairs.push_back({tr[1], tr[0], false, vq_include_reverse});      // (b,a)
    spec.add_tuples.push_back({base, base + 1, base + 2});
    spec.rev_tuples.push_back({base, base + 3});
  }
  return spec;
}

LossBatchSpec make_lam_spec(const std::vector<std::pair<Frame, Frame>>& pairs) {
  LossBatchSpec spec;
  for (const auto& [src, tgt] : pairs) spec.pairs.push_back({src, tgt, true, true});
  return spec;
}

void mode_weights(const PretrainConfig& cfg, LossBreakdown& out) {
  out.lambda_vq = cfg.lambda_vq;
  out.lambda_rec = cfg.lambda_rec;
  out.lambda_perc = cfg.lambda_perc;
  out.lambda_add = cfg.lambda_add;
  out.lambda_rev = cfg.lambda_rev;
  if (cfg.mode == "lam" || cfg.mode == "alam_no_both") {
    out.lambda_add = 0.0;
    out.lambda_rev = 0.0;
  } else if (cfg.mode == "alam_no_add") {
    out.lambda_add = 0.0;
  } else if (cfg.mode == "alam_no_rev") {
    out.lambda_rev = 0.0;
  }
}

PretrainModel::PretrainModel(const RunConfig& run_cfg) : cfg(run_cfg) {
  Rng init = make_stream(cfg.seed, "pretrain.init");
  encoder::init_params(params, cfg.encoder, cfg.world.resolution, cfg.world.channels, init);
  decoder::init_params(params, cfg.decoder, cfg.encoder, cfg.world.resolution,
                       cfg.world.channels, init);
  Rng book_rng = make_stream(cfg.seed, "pretrain.codebook");
  book = Codebook::init(cfg.quantizer.codebook_size, cfg.encoder.latent_dim, book_rng,
                        cfg.quantizer);
  pyramid = PerceptualPyramid::init(cfg.pretrain.perc_seed, cfg.world.channels);
  opt.lr = cfg.pretrain.lr;
  opt.beta1 = cfg.pretrain.beta1;
  opt.beta2 = cfg.pretrain.beta2;
  opt.weight_decay = cfg.pretrain.weight_decay;
  rng_sample = make_stream(cfg.seed, "pretrain.sample");
  rng_restart = make_stream(cfg.seed, "pretrain.restart");
}

namespace {

int mean_nodes(ag::Tape& t, const std::vector<int>& nodes) {
  if (nodes.empty()) return t.constant_scalar(0.0);
  int acc = nodes[0];
  for (size_t i = 1; i < nodes.size(); ++i) acc = t.add(acc, nodes[static_cast<size_t>(i)]);
  return t.scale(acc, 1.0 / static_cast<double>(nodes.size()));
}

}  // namespace

BatchLoss total_loss(ag::Tape& t, const nn::Bound& b, PretrainModel& model,
                     const LossBatchSpec& spec) {
  require(!spec.pairs.empty(), "total_loss: empty batch");
  const EncoderConfig& enc = model.cfg.encoder;
  const DecoderConfig& dec = model.cfg.decoder;
  const int res = spec.pairs[0].src.h;
  const int channels = spec.pairs[0].src.c;

  BatchLoss out;
  mode_weights(model.cfg.pretrain, out.breakdown);

  std::vector<int> z_nodes;
  z_nodes.reserve(spec.pairs.size());
  for (size_t i = 0; i < spec.pairs.size(); ++i) {
    const int z = encoder::encode_transition(t, b, enc, spec.pairs[i].src, spec.pairs[i].tgt);
    if (!t.val(z).all_finite())
      throw NumericalError("encoder produced non-finite latent for pair " + std::to_string(i));
    z_nodes.push_back(z);
  }

  std::vector<int> commit_nodes, dec_inputs(spec.pairs.size(), -1);
  for (size_t i = 0; i < spec.pairs.size(); ++i) {
    const QuantizeResult qr = quantize(t.val(z_nodes[i]), model.book);
    if (spec.pairs[i].in_vq) {
      commit_nodes.push_back(ag::sum_squares(t, t.sub(z_nodes[i], t.constant(qr.z_q))));
      out.vq_latents.push_back(t.val(z_nodes[i]));
      out.vq_indices.push_back(qr.code_index);
    }
    dec_inputs[i] = model.cfg.quantizer.straight_through
                        ? ag::straight_through(t, z_nodes[i], qr.z_q)
                        : t.constant(qr.z_q);
  }

  std::vector<int> rec_nodes, perc_nodes;
  for (size_t i = 0; i < spec.pairs.size(); ++i) {
    if (!spec.pairs[i].decode) continue;
    const int src_tokens = encoder::embed_frame_tokens(t, b, enc, spec.pairs[i].src, 0);
    const int img = decoder::decode(t, b, dec, enc, dec_inputs[i], src_tokens, res, channels);
    const int target = t.constant(spec.pairs[i].tgt.to_tensor());
    rec_nodes.push_back(ag::mse(t, img, target));
    perc_nodes.push_back(model.pyramid.distance(t, img, target));
  }

  std::vector<int> add_nodes, rev_nodes;
  for (const auto& tup : spec.add_tuples)
    add_nodes.push_back(loss_add(t, z_nodes[static_cast<size_t>(tup.ab)],
                                 z_nodes[static_cast<size_t>(tup.bc)],
                                 z_nodes[static_cast<size_t>(tup.ac)]));
  for (const auto& tup : spec.rev_tuples)
    rev_nodes.push_back(loss_rev(t, z_nodes[static_cast<size_t>(tup.ab)],
                                 z_nodes[static_cast<size_t>(tup.ba)]));

  const int l_vq = mean_nodes(t, commit_nodes);
  const int l_rec = mean_nodes(t, rec_nodes);
  const int l_perc = mean_nodes(t, perc_nodes);
  const int l_add = mean_nodes(t, add_nodes);
  const int l_rev = mean_nodes(t, rev_nodes);

  LossBreakdown& lb = out.breakdown;
  lb.l_vq = t.val(l_vq).data[0];
  lb.l_rec = t.val(l_rec).data[0];
  lb.l_perc = t.val(l_perc).data[0];
  lb.l_add = t.val(l_add).data[0];
  lb.l_rev = t.val(l_rev).data[0];

  int total = t.scale(l_vq, lb.lambda_vq);
  total = t.add(total, t.scale(l_rec, lb.lambda_rec));
  total = t.add(total, t.scale(l_perc, lb.lambda_perc));
  total = t.add(total, t.scale(l_add, lb.lambda_add));
  total = t.add(total, t.scale(l_rev, lb.lambda_rev));
  out.total_node = total;
  lb.total = t.val(total).data[0];
  return out;
}

namespace {

std::string ckpt_dir_name(const std::string& out_dir, int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_step_%07lld", static_cast<long long>(step));
  return (fs::path(out_dir) / buf).string();
}

void save_pretrain_checkpoint(const PretrainModel& model, int64_t step, const std::string& dir) {
  CheckpointData data;
  data.kind = "pretrain";
  data.config = config_to_json(model.cfg);
  data.step = step;
  data.params = model.params;
  data.opt = model.opt;
  data.has_codebook = true;
  data.book = model.book;
  data.rng_states.push_back(RngState::capture("sample", model.rng_sample));
  data.rng_states.push_back(RngState::capture("restart", model.rng_restart));
  save_checkpoint(data, dir);
}

}  // namespace

TrainResult train_pretrain(PretrainModel& model, const Dataset& data, const std::string& out_dir) {
  const PretrainConfig& pc = model.cfg.pretrain;
  require(data.kind() == "video", "pretrain expects a video dataset");
  const auto train_ids = data.train_ids();
  require(!train_ids.empty(), "pretrain: empty training split");
  const int traj_frames = data.world().traj_len;

  fs::create_directories(out_dir);
  MetricsLog metrics((fs::path(out_dir) / "metrics.jsonl").string());
  TimingLog timings((fs::path(out_dir) / "timings.jsonl").string());
  const auto t_start = std::chrono::steady_clock::now();

  const int64_t ckpt_every =
      pc.checkpoint_every > 0
          ? pc.checkpoint_every
          : std::max<int64_t>(1, static_cast<int64_t>(train_ids.size()) / std::max(1, pc.batch));
  std::vector<std::string> kept;

  TrainResult result;
  const bool lam_mode = pc.mode == "lam";
  for (int64_t step = model.step; step < pc.steps; ++step) {
    LossBatchSpec spec;
    if (lam_mode) {
      std::vector<std::pair<Frame, Frame>> pairs;
      for (int i = 0; i < pc.batch; ++i) {
        const Episode ep = data.load(train_ids[model.rng_sample.uniform_int(train_ids.size())]);
        const View view = static_cast<View>(model.rng_sample.uniform_int(kNumViews));
        const int gap = static_cast<int>(model.rng_sample.uniform_range(pc.gap_lo, pc.gap_hi));
        const int a = static_cast<int>(model.rng_sample.uniform_range(0, traj_frames - 1 - gap));
        pairs.emplace_back(ep.frame(view, a), ep.frame(view, a + gap));
      }
      spec = make_lam_spec(pairs);
    } else {
      std::vector<std::array<Frame, 3>> triplets;
      for (int i = 0; i < pc.batch; ++i) {
        const Episode ep = data.load(train_ids[model.rng_sample.uniform_int(train_ids.size())]);
        const View view = static_cast<View>(model.rng_sample.uniform_int(kNumViews));
        const TripletSample tr = make_triplet(traj_frames, model.rng_sample, pc.gap_lo, pc.gap_hi);
        triplets.push_back({ep.frame(view, tr.a), ep.frame(view, tr.b), ep.frame(view, tr.c)});
      }
      spec = make_alam_spec(triplets, pc.vq_include_reverse);
    }

    ag::Tape tape;
    nn::Bound bound = nn::bind(tape, model.params, true);
    BatchLoss bl = total_loss(tape, bound, model, spec);
    if (!std::isfinite(bl.breakdown.total)) {
      char msg[256];
      std::snprintf(msg, sizeof(msg),
                    "pretrain diverged at step %lld: vq=%g rec=%g perc=%g add=%g rev=%g",
                    static_cast<long long>(step), bl.breakdown.l_vq, bl.breakdown.l_rec,
                    bl.breakdown.l_perc, bl.breakdown.l_add, bl.breakdown.l_rev);
      throw NumericalError(msg);
    }
    tape.backward(bl.total_node);
    std::vector<Tensor> grads = nn::collect_grads(tape, bound);
    const double grad_norm = nn::clip_global_norm(grads, pc.grad_clip);
    model.opt.step(model.params, grads);
    ema_update(model.book, bl.vq_latents, bl.vq_indices);
    if (model.cfg.quantizer.dead_restart)
      restart_dead_codes(model.book, bl.vq_latents, model.cfg.quantizer.dead_threshold,
                         model.rng_restart);
    model.step = step + 1;

    if (step == 0) result.first = bl.breakdown;
    result.last = bl.breakdown;

    if (model.step % pc.log_every == 0 || model.step == pc.steps) {
      metrics.append(model.step,
                     {{"loss_total", bl.breakdown.total},
                      {"loss_vq", bl.breakdown.l_vq},
                      {"loss_rec", bl.breakdown.l_rec},
                      {"loss_perc", bl.breakdown.l_perc},
                      {"loss_add", bl.breakdown.l_add},
                      {"loss_rev", bl.breakdown.l_rev},
                      {"grad_norm", grad_norm}});
      timings.append(model.step,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                         .count());
    }
    if (model.step % ckpt_every == 0 && model.step < pc.steps) {
      const std::string dir = ckpt_dir_name(out_dir, model.step);
      save_pretrain_checkpoint(model, model.step, dir);
      kept.push_back(dir);
      while (static_cast<int>(kept.size()) > pc.keep_checkpoints) {
        fs::remove_all(kept.front());
        kept.erase(kept.begin());
      }
    }
  }

  result.steps_done = model.step;
  result.final_checkpoint = (fs::path(out_dir) / "ckpt_final").string();
  save_pretrain_checkpoint(model, model.step, result.final_checkpoint);
  return result;
}

PretrainModel load_pretrain_model(const std::string& ckpt_dir) {
  CheckpointData data = load_checkpoint(ckpt_dir);
  require(data.kind == "pretrain", "expected a pretrain checkpoint in " + ckpt_dir);
  RunConfig cfg = config_from_json(data.config);
  PretrainModel model(cfg);
  model.params = std::move(data.params);
  require(data.has_codebook, "pretrain checkpoint missing codebook");
  model.book = std::move(data.book);
  model.opt = data.opt;
  model.step = data.step;
  for (const auto& r : data.rng_states) {
    if (r.name == "sample") r.restore_into(model.rng_sample);
    if (r.name == "restart") r.restore_into(model.rng_restart);
  }
  return model;
}

}  // namespace alam

