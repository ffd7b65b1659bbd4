#pragma once

#include "alam/config.hpp"
#include "alam/encoder.hpp"

namespace alam::decoder {

// Parameters are registered under the "dec." prefix.
void init_params(nn::ParamStore& p, const DecoderConfig& cfg, const EncoderConfig& enc,
                 int resolution, int channels, Rng& rng);

// Reconstructs the target frame from a (quantized) latent and the source
// frame's embedded patch tokens. The latent is lifted to latent_tokens
// tokens, concatenated with the re-projected source tokens, and run through
// blocks that mix self- and cross-attention over the joint sequence; patch
// token outputs map back to pixels through a transposed patch projection
// and a sigmoid squash. Returns an [H,W,C] node with values in (0,1).
int decode(ag::Tape& t, const nn::Bound& b, const DecoderConfig& cfg, const EncoderConfig& enc,
           int z_id, int source_tokens_id, int resolution, int channels);

// Named entry point for composed (summed) latents; identical path to
// decode by construction.
int decode_composed(ag::Tape& t, const nn::Bound& b, const DecoderConfig& cfg,
                    const EncoderConfig& enc, int z_sum_id, int source_tokens_id, int resolution,
                    int channels);

// No-grad convenience: decode a latent value against a source frame.
Frame decode_value(const nn::ParamStore& p, const DecoderConfig& cfg, const EncoderConfig& enc,
                   const Tensor& z, const Frame& source);

}  // namespace alam::decoder
