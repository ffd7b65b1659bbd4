#pragma once

#include <cstdint>
#include <vector>

#include "alam/common.hpp"
#include "alam/tensor.hpp"

namespace alam {

enum class View : int { global = 0, wrist = 1 };
inline const char* view_name(View v) { return v == View::global ? "global" : "wrist"; }
constexpr int kNumViews = 2;

// One rendered frame, pixels in [0,1], row-major [h][w][c].
struct Frame {
  int h = 0, w = 0, c = 0;
  View view = View::global;
  std::vector<float> px;

  Frame() = default;
  Frame(int h_, int w_, int c_, View v)
      : h(h_), w(w_), c(c_), view(v), px(static_cast<size_t>(h_) * w_ * c_, 0.f) {}

  float& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
  float at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
  size_t size() const { return px.size(); }

  Tensor to_tensor() const {
    Tensor t({h, w, c});
    for (size_t i = 0; i < px.size(); ++i) t.data[i] = static_cast<double>(px[i]);
    return t;
  }
  static Frame from_tensor(const Tensor& t, View v) {
    require(t.ndim() == 3, "Frame::from_tensor: need [H,W,C]");
    Frame f(t.dim(0), t.dim(1), t.dim(2), v);
    for (size_t i = 0; i < f.px.size(); ++i) f.px[i] = static_cast<float>(t.data[i]);
    return f;
  }
};

double frame_mse(const Frame& a, const Frame& b);

}  // namespace alam
