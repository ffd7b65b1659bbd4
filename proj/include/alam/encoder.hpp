#pragma once

#include <vector>

#include "alam/config.hpp"
#include "alam/image.hpp"
#include "alam/nn.hpp"

namespace alam::encoder {

// Parameters are registered under the "enc." prefix.
void init_params(nn::ParamStore& p, const EncoderConfig& cfg, int resolution, int channels,
                 Rng& rng);

int tokens_per_frame(const EncoderConfig& cfg, int resolution);

// Non-overlapping P x P patches, row-major: [(H/P)^2, P*P*C]. Pure data
// movement, lives outside the tape.
Tensor patch_matrix(const Frame& f, int patch);

// Patch embedding + per-(frame-slot,row,col) position table for one frame.
int embed_frame_tokens(ag::Tape& t, const nn::Bound& b, const EncoderConfig& cfg,
                       const Frame& frame, int slot);

// Both frames' tokens in deterministic order: frame i first, row-major.
int patchify(ag::Tape& t, const nn::Bound& b, const EncoderConfig& cfg, const Frame& o_i,
             const Frame& o_j);

// z_i^j: queries prepended to patch tokens, full self-attention transformer,
// query readout (mean-pool or concat), linear head. Returns [1, D_z].
int encode_transition(ag::Tape& t, const nn::Bound& b, const EncoderConfig& cfg,
                      const Frame& o_i, const Frame& o_j);

// No-grad convenience path used by probes and the policy stage.
Tensor encode_value(const nn::ParamStore& p, const EncoderConfig& cfg, const Frame& o_i,
                    const Frame& o_j);

// Elementwise batched encode (evaluation only). Rejects ragged batches.
std::vector<Tensor> encode_batch(const nn::ParamStore& p, const EncoderConfig& cfg,
                                 const std::vector<std::pair<Frame, Frame>>& pairs);

}  // namespace alam::encoder
