#include "alam/decoder.hpp"

namespace alam::decoder {

void init_params(nn::ParamStore& p, const DecoderConfig& cfg, const EncoderConfig& enc,
                 int resolution, int channels, Rng& rng) {
  const int d = enc.hidden;
  const int n = encoder::tokens_per_frame(enc, resolution);
  nn::init_linear(p, "dec.latent", enc.latent_dim, cfg.latent_tokens * d, rng);  // f_alpha
  nn::init_linear(p, "dec.src", d, d, rng);                                      // f_beta
  p.add("dec.pos", nn::normal_init(cfg.latent_tokens + n, d, rng, 0.02));
  for (int l = 0; l < cfg.blocks; ++l)
    nn::init_block(p, "dec.blk" + std::to_string(l), d, enc.mlp_ratio, rng);
  nn::init_layer_norm(p, "dec.ln_f", d);
  nn::init_linear(p, "dec.out", d, enc.patch * enc.patch * channels, rng);  // u_omega
}

int decode(ag::Tape& t, const nn::Bound& b, const DecoderConfig& cfg, const EncoderConfig& enc,
           int z_id, int source_tokens_id, int resolution, int channels) {
  require(t.val(z_id).size() == enc.latent_dim, "decode: latent dimension mismatch");
  const int n = encoder::tokens_per_frame(enc, resolution);
  require(t.val(source_tokens_id).rows() == n, "decode: source token count mismatch");
  const int d = enc.hidden;

  const int lat = t.reshape(nn::linear(t, b, "dec.latent", t.reshape(z_id, {1, enc.latent_dim})),
                            {cfg.latent_tokens, d});
  const int src = nn::linear(t, b, "dec.src", source_tokens_id);
  int x = t.add(t.concat_rows({lat, src}), b("dec.pos"));
  for (int l = 0; l < cfg.blocks; ++l)
    x = nn::transformer_block(t, b, "dec.blk" + std::to_string(l), x, enc.heads, nullptr);
  x = nn::layer_norm(t, b, "dec.ln_f", x);
  const int patches = nn::linear(t, b, "dec.out", t.slice_rows(x, cfg.latent_tokens,
                                                               cfg.latent_tokens + n));
  const int grid = resolution / enc.patch;
  return t.sigmoid(t.depatchify(patches, grid, grid, enc.patch, channels));
}

int decode_composed(ag::Tape& t, const nn::Bound& b, const DecoderConfig& cfg,
                    const EncoderConfig& enc, int z_sum_id, int source_tokens_id, int resolution,
                    int channels) {
  return decode(t, b, cfg, enc, z_sum_id, source_tokens_id, resolution, channels);
}

Frame decode_value(const nn::ParamStore& p, const DecoderConfig& cfg, const EncoderConfig& enc,
                   const Tensor& z, const Frame& source) {
  ag::Tape t;
  nn::Bound b = nn::bind(t, p, false);
  const int src = encoder::embed_frame_tokens(t, b, enc, source, 0);
  const int img = decode(t, b, cfg, enc, t.constant(z), src, source.h, source.c);
  const Tensor& out = t.val(img);
  if (!out.all_finite()) throw NumericalError("decoder produced non-finite pixels");
  return Frame::from_tensor(out, source.view);
}

}  // namespace alam::decoder

