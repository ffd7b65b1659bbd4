#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "alam/nn.hpp"
#include "alam/quantizer.hpp"

namespace alam {

// Serialized RNG stream (xoshiro state + Box-Muller spare).
struct RngState {
  std::string name;
  std::array<uint64_t, 4> state{};
  bool has_spare = false;
  double spare = 0.0;

  static RngState capture(const std::string& name, const Rng& rng);
  void restore_into(Rng& rng) const;
};

// Everything a run needs to resume: config snapshot, named parameter blobs
// with optimizer moments, optional codebook, RNG streams, extra tensors
// (e.g. normalization stats). Blobs live in params.bin as raw little-endian
// float64 with per-blob (shape, offset, crc32) in manifest.json.
struct CheckpointData {
  int schema_version = 1;
  std::string kind;  // "pretrain" | "policy"
  nlohmann::json config;
  int64_t step = 0;
  nn::ParamStore params;
  nn::AdamW opt;
  bool has_codebook = false;
  Codebook book;
  std::vector<RngState> rng_states;
  std::vector<std::pair<std::string, Tensor>> extra;
  nlohmann::json meta;  // free-form provenance (e.g. encoder hash)

  const Tensor* find_extra(const std::string& name) const;
};

// Atomic: writes into <dir>.tmp and renames over <dir>.
void save_checkpoint(const CheckpointData& data, const std::string& dir);
CheckpointData load_checkpoint(const std::string& dir);

uint64_t file_hash(const std::string& path);  // FNV over raw bytes
uint64_t checkpoint_hash(const std::string& dir);

}  // namespace alam
