#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alam/dataset.hpp"
#include "alam/perceptual.hpp"

namespace alam {

struct HorizonGrid {
  int stride = 5;               // k in frames
  std::vector<int> multiples;   // {1..max}
  std::vector<int> supervised;  // subset of multiples seen during training

  static HorizonGrid from_config(const ProbeConfig& cfg);
  int max_span() const { return stride * multiples.back(); }
};

// ---- image metrics ----
double psnr(const Frame& a, const Frame& b);  // dB; capped at 99 when MSE < 1e-10
double ssim(const Frame& a, const Frame& b);  // 7x7 uniform windows, C1=1e-4, C2=9e-4, L=1

// ---- algebraic probes ----
double residual_norm(const Tensor& r, const std::string& norm);
double additivity_error(const Tensor& z_long, const Tensor& z_chain, const std::string& norm);
double reversibility_error(const Tensor& z_fwd, const Tensor& z_bwd, const std::string& norm);

// Probes are generic over the transition extractor so the ground-truth
// displacement oracle can stand in for a trained encoder.
using TransitionFn = std::function<Tensor(const Episode& ep, View v, int i, int j)>;
using DecodeFn = std::function<Frame(const Tensor& z, const Frame& src)>;

TransitionFn oracle_transition();  // reads states, returns the exact displacement

// Z_t = sum of t consecutive short-horizon latents starting at the anchor.
Tensor cumulative_latent(const Episode& ep, View v, int anchor, int t_mult, int stride,
                         const TransitionFn& encode);

struct ProbeReport {
  nlohmann::json j;
  double add(int t_mult) const { return j.at("add").at(std::to_string(t_mult)).get<double>(); }
  double rev(int t_mult) const { return j.at("rev").at(std::to_string(t_mult)).get<double>(); }
  double metric(const std::string& regime, const std::string& name, int t_mult) const {
    return j.at(regime).at(name).at(std::to_string(t_mult)).get<double>();
  }
};

// Runs the full probe pass over the held-out split. decode may be null
// (algebraic probes only). pyramid may be null to skip the perceptual
// column. Deterministic given (checkpoint, split, seed).
ProbeReport probe_report(const TransitionFn& encode, const DecodeFn* decode,
                         const PerceptualPyramid* pyramid, const Dataset& data,
                         const std::vector<int>& episode_ids, const ProbeConfig& cfg,
                         uint64_t seed, const std::string& checkpoint_id);

void save_report(const ProbeReport& r, const std::string& path);
ProbeReport load_report(const std::string& path);

// [o_a | D(o_a, z_a^b) | D(o_a, z_a^c) | D(o_a, z_a^b + z_b^c)]
struct CompositionGrid {
  std::vector<Frame> panels;
  double mse_composed_vs_direct = 0.0;  // panels[3] vs panels[2]
};
CompositionGrid composition_grid(const Episode& ep, View v, int a, int b, int c,
                                 const TransitionFn& encode, const DecodeFn& decode);
void save_grid(const CompositionGrid& g, const std::string& path);

}  // namespace alam
