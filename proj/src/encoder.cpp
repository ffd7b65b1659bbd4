#include "alam/encoder.hpp"

namespace alam::encoder {

int tokens_per_frame(const EncoderConfig& cfg, int resolution) {
  require(resolution % cfg.patch == 0, "patchify: resolution not divisible by patch size");
  const int g = resolution / cfg.patch;
  return g * g;
}

void init_params(nn::ParamStore& p, const EncoderConfig& cfg, int resolution, int channels,
                 Rng& rng) {
  const int d = cfg.hidden;
  const int patch_dim = cfg.patch * cfg.patch * channels;
  const int n = tokens_per_frame(cfg, resolution);
  nn::init_linear(p, "enc.patch_embed", patch_dim, d, rng);
  // learned absolute position per (frame-slot, row, col), flattened
  p.add("enc.pos", nn::normal_init(2 * n, d, rng, 0.02));
  p.add("enc.query", nn::normal_init(cfg.queries, d, rng, 0.02));
  for (int l = 0; l < cfg.layers; ++l)
    nn::init_block(p, "enc.blk" + std::to_string(l), d, cfg.mlp_ratio, rng);
  nn::init_layer_norm(p, "enc.ln_f", d);
  const int head_in = cfg.readout == "concat" ? cfg.queries * d : d;
  nn::init_linear(p, "enc.head", head_in, cfg.latent_dim, rng);
}

Tensor patch_matrix(const Frame& f, int patch) {
  require(f.h % patch == 0 && f.w % patch == 0, "patchify: resolution not divisible by patch size");
  const int gh = f.h / patch, gw = f.w / patch;
  Tensor m({gh * gw, patch * patch * f.c});
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      double* row = m.data.data() + (static_cast<size_t>(gy) * gw + gx) * m.cols();
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          for (int c = 0; c < f.c; ++c)
            row[(static_cast<size_t>(py) * patch + px) * f.c + c] =
                static_cast<double>(f.at(gy * patch + py, gx * patch + px, c));
    }
  return m;
}

int embed_frame_tokens(ag::Tape& t, const nn::Bound& b, const EncoderConfig& cfg,
                       const Frame& frame, int slot) {
  require(slot == 0 || slot == 1, "embed_frame_tokens: slot must be 0 or 1");
  const int n = tokens_per_frame(cfg, frame.h);
  const int x = t.constant(patch_matrix(frame, cfg.patch));
  const int emb = nn::linear(t, b, "enc.patch_embed", x);
  const int pos = t.slice_rows(b("enc.pos"), slot * n, (slot + 1) * n);
  return t.add(emb, pos);
}

int patchify(ag::Tape& t, const nn::Bound& b, const EncoderConfig& cfg, const Frame& o_i,
             const Frame& o_j) {
  require(o_i.h == o_j.h && o_i.w == o_j.w && o_i.c == o_j.c, "patchify: frame shape mismatch");
  return t.concat_rows({embed_frame_tokens(t, b, cfg, o_i, 0),
                        embed_frame_tokens(t, b, cfg, o_j, 1)});
}

int encode_transition(ag::Tape& t, const nn::Bound& b, const EncoderConfig& cfg,
                      const Frame& o_i, const Frame& o_j) {
  const int tokens = patchify(t, b, cfg, o_i, o_j);
  int x = t.concat_rows({b("enc.query"), tokens});
  for (int l = 0; l < cfg.layers; ++l)
    x = nn::transformer_block(t, b, "enc.blk" + std::to_string(l), x, cfg.heads, nullptr);
  x = nn::layer_norm(t, b, "enc.ln_f", x);
  const int q = t.slice_rows(x, 0, cfg.queries);
  int pooled;
  if (cfg.readout == "concat") {
    pooled = t.reshape(q, {1, cfg.queries * cfg.hidden});
  } else {
    Tensor ones({cfg.queries, 1});
    for (auto& v : ones.data) v = 1.0 / cfg.queries;
    pooled = t.matmul_tn(t.constant(std::move(ones)), q);  // [1, d] mean over queries
  }
  return nn::linear(t, b, "enc.head", pooled);
}

Tensor encode_value(const nn::ParamStore& p, const EncoderConfig& cfg, const Frame& o_i,
                    const Frame& o_j) {
  ag::Tape t;
  nn::Bound b = nn::bind(t, p, false);
  const int z = encode_transition(t, b, cfg, o_i, o_j);
  Tensor out = t.val(z);
  if (!out.all_finite()) throw NumericalError("encoder produced non-finite latent");
  return out;
}

std::vector<Tensor> encode_batch(const nn::ParamStore& p, const EncoderConfig& cfg,
                                 const std::vector<std::pair<Frame, Frame>>& pairs) {
  std::vector<Tensor> out;
  out.reserve(pairs.size());
  for (const auto& [oi, oj] : pairs) {
    require(oi.h == pairs[0].first.h && oi.w == pairs[0].first.w && oj.h == oi.h && oj.w == oi.w,
            "encode_batch: ragged batch rejected");
    out.push_back(encode_value(p, cfg, oi, oj));
  }
  return out;
}

}  // namespace alam::encoder

