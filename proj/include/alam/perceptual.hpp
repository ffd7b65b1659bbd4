#pragma once

#include <vector>

#include "alam/autograd.hpp"
#include "alam/image.hpp"
#include "alam/rng.hpp"

namespace alam {

// Fixed random-feature perceptual distance: a 3-stage strided convolution
// pyramid with seed-initialized filters, GELU between stages, per-pixel
// channel unit-normalization, and mean squared feature differences averaged
// over stages. Symmetric, zero iff the stage features coincide. The filters
// are regenerated from the seed, never trained, never checkpointed.
class PerceptualPyramid {
 public:
  static PerceptualPyramid init(uint64_t seed, int in_channels);

  // Scalar distance node between two [H,W,C] image nodes.
  int distance(ag::Tape& t, int img_a, int img_b) const;

  double distance_value(const Frame& a, const Frame& b) const;

  static constexpr int kStages = 3;
  static constexpr int kKernel = 3;
  static constexpr int kStride = 2;
  static constexpr int kPad = 1;

 private:
  std::vector<Tensor> weights_;  // per stage [k,k,Cin,Cout]
  std::vector<int> features(ag::Tape& t, int img) const;
};

}  // namespace alam
