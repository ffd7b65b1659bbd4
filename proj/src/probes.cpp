#include "alam/probes.hpp"

#include <cmath>
#include <fstream>

#include "alam/png.hpp"

namespace alam {

using nlohmann::json;

HorizonGrid HorizonGrid::from_config(const ProbeConfig& cfg) {
  HorizonGrid g;
  g.stride = cfg.stride;
  for (int t = 1; t <= cfg.max_multiple; ++t) g.multiples.push_back(t);
  g.supervised = cfg.supervised;
  return g;
}

double psnr(const Frame& a, const Frame& b) {
  const double mse = frame_mse(a, b);
  if (mse < 1e-10) return 99.0;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Frame& a, const Frame& b) {
  require(a.h == b.h && a.w == b.w && a.c == b.c, "ssim: shape mismatch");
  constexpr int kWin = 7;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  require(a.h >= kWin && a.w >= kWin, "ssim: image smaller than the 7x7 window");
  const double inv_n = 1.0 / (kWin * kWin);
  double total = 0.0;
  int64_t windows = 0;
  for (int c = 0; c < a.c; ++c)
    for (int y = 0; y + kWin <= a.h; ++y)
      for (int x = 0; x + kWin <= a.w; ++x) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dy = 0; dy < kWin; ++dy)
          for (int dx = 0; dx < kWin; ++dx) {
            const double va = a.at(y + dy, x + dx, c);
            const double vb = b.at(y + dy, x + dx, c);
            sx += va;
            sy += vb;
            sxx += va * va;
            syy += vb * vb;
            sxy += va * vb;
          }
        const double mx = sx * inv_n, my = sy * inv_n;
        const double vx = sxx * inv_n - mx * mx;
        const double vy = syy * inv_n - my * my;
        const double cov = sxy * inv_n - mx * my;
        total += ((2 * mx * my + kC1) * (2 * cov + kC2)) /
                 ((mx * mx + my * my + kC1) * (vx + vy + kC2));
        ++windows;
      }
  return total / static_cast<double>(windows);
}

double residual_norm(const Tensor& r, const std::string& norm) {
  if (norm == "l1") {
    double s = 0.0;
    for (double v : r.data) s += std::fabs(v);
    return s;
  }
  return std::sqrt(r.squared_norm());
}

double additivity_error(const Tensor& z_long, const Tensor& z_chain, const std::string& norm) {
  require(z_long.size() == z_chain.size(), "additivity_error: dimension mismatch");
  Tensor r = z_long;
  for (int64_t i = 0; i < r.size(); ++i) r.data[static_cast<size_t>(i)] -= z_chain.data[static_cast<size_t>(i)];
  return residual_norm(r, norm);
}

double reversibility_error(const Tensor& z_fwd, const Tensor& z_bwd, const std::string& norm) {
  require(z_fwd.size() == z_bwd.size(), "reversibility_error: dimension mismatch");
  Tensor r = z_fwd;
  for (int64_t i = 0; i < r.size(); ++i) r.data[static_cast<size_t>(i)] += z_bwd.data[static_cast<size_t>(i)];
  return residual_norm(r, norm);
}

TransitionFn oracle_transition() {
  return [](const Episode& ep, View, int i, int j) {
    const Vec2 d = true_transition(ep.states[static_cast<size_t>(i)], ep.states[static_cast<size_t>(j)]);
    return Tensor::from({1, 2}, {d.x, d.y});
  };
}

Tensor cumulative_latent(const Episode& ep, View v, int anchor, int t_mult, int stride,
                         const TransitionFn& encode) {
  require(t_mult >= 1, "cumulative_latent: need t >= 1");
  require(anchor + t_mult * stride < ep.length(),
          "cumulative_latent: chain exceeds the episode");
  Tensor acc = encode(ep, v, anchor, anchor + stride);
  for (int i = 1; i < t_mult; ++i) {
    const Tensor z = encode(ep, v, anchor + i * stride, anchor + (i + 1) * stride);
    for (int64_t k = 0; k < acc.size(); ++k) acc.data[static_cast<size_t>(k)] += z.data[static_cast<size_t>(k)];
  }
  return acc;
}

ProbeReport probe_report(const TransitionFn& encode, const DecodeFn* decode,
                         const PerceptualPyramid* pyramid, const Dataset& data,
                         const std::vector<int>& episode_ids, const ProbeConfig& cfg,
                         uint64_t seed, const std::string& checkpoint_id) {
  require(!episode_ids.empty(), "probe_report: empty split");
  const HorizonGrid grid = HorizonGrid::from_config(cfg);
  const int span = grid.max_span();

  // anchor sampling; episodes too short for the full grid are recorded
  Rng rng = make_stream(seed, "probe.anchors");
  struct Anchor {
    int episode, a;
    View view;
  };
  std::vector<Anchor> anchors;
  int skipped = 0;
  int attempts = 0;
  while (static_cast<int>(anchors.size()) < cfg.n_anchors && attempts < cfg.n_anchors * 20) {
    ++attempts;
    const int ep_id = episode_ids[rng.uniform_int(episode_ids.size())];
    const View view = static_cast<View>(rng.uniform_int(kNumViews));
    const Episode ep = data.load(ep_id);
    if (ep.length() <= span) {
      ++skipped;
      continue;
    }
    const int a = static_cast<int>(rng.uniform_range(0, ep.length() - 1 - span));
    anchors.push_back({ep_id, a, view});
  }
  require(!anchors.empty(), "probe_report: no episode long enough for the horizon grid");

  const size_t nt = grid.multiples.size();
  std::vector<double> add_sum(nt, 0.0), rev_sum(nt, 0.0);
  std::vector<double> d_psnr(nt, 0.0), d_ssim(nt, 0.0), d_perc(nt, 0.0);
  std::vector<double> c_psnr(nt, 0.0), c_ssim(nt, 0.0), c_perc(nt, 0.0);

  for (const Anchor& an : anchors) {
    const Episode ep = data.load(an.episode);
    // short-horizon chain, encoded once per anchor
    std::vector<Tensor> chain;
    for (int i = 0; i < grid.multiples.back(); ++i)
      chain.push_back(encode(ep, an.view, an.a + i * grid.stride, an.a + (i + 1) * grid.stride));

    const Frame src = decode ? ep.frame(an.view, an.a) : Frame();
    for (size_t ti = 0; ti < nt; ++ti) {
      const int t = grid.multiples[ti];
      const int far = an.a + t * grid.stride;
      const Tensor z_dir = encode(ep, an.view, an.a, far);
      const Tensor z_bwd = encode(ep, an.view, far, an.a);
      Tensor z_sum = chain[0];
      for (int i = 1; i < t; ++i)
        for (int64_t k = 0; k < z_sum.size(); ++k) z_sum.data[static_cast<size_t>(k)] += chain[static_cast<size_t>(i)].data[static_cast<size_t>(k)];
      add_sum[ti] += additivity_error(z_dir, z_sum, cfg.norm);
      rev_sum[ti] += reversibility_error(z_dir, z_bwd, cfg.norm);

      if (decode) {
        const Frame target = ep.frame(an.view, far);
        const Frame rec_dir = (*decode)(z_dir, src);
        const Frame rec_cum = (*decode)(z_sum, src);
        d_psnr[ti] += psnr(rec_dir, target);
        d_ssim[ti] += ssim(rec_dir, target);
        c_psnr[ti] += psnr(rec_cum, target);
        c_ssim[ti] += ssim(rec_cum, target);
        if (pyramid) {
          d_perc[ti] += pyramid->distance_value(rec_dir, target);
          c_perc[ti] += pyramid->distance_value(rec_cum, target);
        }
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(anchors.size());
  auto column = [&](const std::vector<double>& sums) {
    json col;
    for (size_t ti = 0; ti < nt; ++ti) col[std::to_string(grid.multiples[ti])] = sums[ti] * inv;
    return col;
  };
  auto delta_column = [&](const std::vector<double>& sums) {
    json col;
    for (size_t ti = 0; ti < nt; ++ti)
      col[std::to_string(grid.multiples[ti])] = (sums[ti] - sums[0]) * inv;
    return col;
  };

  ProbeReport r;
  r.j["schema"] = "alam-probe-v1";
  r.j["checkpoint"] = checkpoint_id;
  r.j["split_episodes"] = episode_ids.size();
  r.j["seed"] = seed;
  r.j["stride"] = grid.stride;
  r.j["multiples"] = grid.multiples;
  r.j["supervised"] = grid.supervised;
  r.j["norm"] = cfg.norm;
  r.j["n_anchors"] = cfg.n_anchors;
  r.j["anchors_used"] = anchors.size();
  r.j["anchors_skipped"] = skipped;
  r.j["add"] = column(add_sum);
  r.j["rev"] = column(rev_sum);
  if (decode) {
    r.j["direct"] = {{"psnr", column(d_psnr)}, {"ssim", column(d_ssim)}};
    r.j["cumulative"] = {{"psnr", column(c_psnr)}, {"ssim", column(c_ssim)}};
    r.j["delta_direct"] = {{"psnr", delta_column(d_psnr)}, {"ssim", delta_column(d_ssim)}};
    r.j["delta_cumulative"] = {{"psnr", delta_column(c_psnr)}, {"ssim", delta_column(c_ssim)}};
    if (pyramid) {
      r.j["direct"]["perceptual"] = column(d_perc);
      r.j["cumulative"]["perceptual"] = column(c_perc);
      r.j["delta_direct"]["perceptual"] = delta_column(d_perc);
      r.j["delta_cumulative"]["perceptual"] = delta_column(c_perc);
      r.j["perceptual_metric"] = "fixed random-feature pyramid (stand-in for a pretrained LPIPS)";
    }
  }
  return r;
}

void save_report(const ProbeReport& r, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "probe: cannot write " + path);
  f << r.j.dump(2) << "\n";
}

ProbeReport load_report(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "probe: cannot read " + path);
  ProbeReport r;
  f >> r.j;
  return r;
}

CompositionGrid composition_grid(const Episode& ep, View v, int a, int b, int c,
                                 const TransitionFn& encode, const DecodeFn& decode) {
  require(a <= b && b <= c && c < ep.length(), "composition_grid: need a <= b <= c in range");
  const Frame oa = ep.frame(v, a);
  const Tensor z_ab = encode(ep, v, a, b);
  const Tensor z_bc = encode(ep, v, b, c);
  const Tensor z_ac = encode(ep, v, a, c);
  Tensor z_sum = z_ab;
  for (int64_t k = 0; k < z_sum.size(); ++k) z_sum.data[static_cast<size_t>(k)] += z_bc.data[static_cast<size_t>(k)];

  CompositionGrid g;
  g.panels.push_back(oa);
  g.panels.push_back(decode(z_ab, oa));
  g.panels.push_back(decode(z_ac, oa));
  g.panels.push_back(decode(z_sum, oa));
  g.mse_composed_vs_direct = frame_mse(g.panels[3], g.panels[2]);
  return g;
}

void save_grid(const CompositionGrid& g, const std::string& path) {
  write_png_row(path, g.panels);
}

}  // namespace alam

