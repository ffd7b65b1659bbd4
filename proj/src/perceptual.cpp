#include "alam/perceptual.hpp"

#include <cmath>

namespace alam {

PerceptualPyramid PerceptualPyramid::init(uint64_t seed, int in_channels) {
  PerceptualPyramid p;
  Rng rng(splitmix64(seed ^ fnv1a("perceptual")));
  const int widths[kStages] = {8, 16, 32};
  int cin = in_channels;
  for (int s = 0; s < kStages; ++s) {
    const int cout = widths[s];
    Tensor w({kKernel, kKernel, cin, cout});
    const double std = std::sqrt(2.0 / (kKernel * kKernel * cin));
    for (auto& v : w.data) v = rng.normal(0.0, std);
    p.weights_.push_back(std::move(w));
    cin = cout;
  }
  return p;
}

std::vector<int> PerceptualPyramid::features(ag::Tape& t, int img) const {
  std::vector<int> feats;
  int x = img;
  for (const auto& w : weights_) {
    x = t.gelu(t.conv2d(x, w, kStride, kPad));
    feats.push_back(x);
  }
  return feats;
}

int PerceptualPyramid::distance(ag::Tape& t, int img_a, int img_b) const {
  require(t.val(img_a).shape == t.val(img_b).shape, "perceptual: shape mismatch");
  const auto fa = features(t, img_a);
  const auto fb = features(t, img_b);
  int acc = -1;
  for (int s = 0; s < kStages; ++s) {
    const int na = t.normalize_channels(fa[static_cast<size_t>(s)], 1e-10);
    const int nb = t.normalize_channels(fb[static_cast<size_t>(s)], 1e-10);
    const int d = ag::mse(t, na, nb);
    acc = acc < 0 ? d : t.add(acc, d);
  }
  return t.scale(acc, 1.0 / kStages);
}

double PerceptualPyramid::distance_value(const Frame& a, const Frame& b) const {
  ag::Tape t;
  return t.val(distance(t, t.constant(a.to_tensor()), t.constant(b.to_tensor()))).data[0];
}

}  // namespace alam

