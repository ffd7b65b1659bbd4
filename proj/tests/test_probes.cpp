#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "alam/probes.hpp"
#include "test_util.hpp"

using namespace alam;
namespace fs = std::filesystem;

namespace {

Frame const_frame(float v, int res = 16) {
  Frame f(res, res, 3, View::global);
  for (auto& p : f.px) p = v;
  return f;
}

struct ProbeFixture {
  std::string dir;
  WorldConfig world;

  ProbeFixture() {
    dir = (fs::temp_directory_path() / "alam_probe_ds").string();
    fs::remove_all(dir);
    world.resolution = 16;
    world.traj_len = 30;  // enough for 5k + anchor slack at stride 5
    world.store_frames = false;
    Dataset::generate(world, "video", 40, 77, dir);
  }
  ~ProbeFixture() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("psnr formula and cap") {
  const Frame a = const_frame(0.25f);
  CHECK(psnr(a, a) == 99.0);

  Frame b = a;
  for (auto& p : b.px) p += 0.1f;  // MSE = 0.01
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));

  const Frame z = const_frame(0.0f), o = const_frame(1.0f);  // MSE = 1
  CHECK(psnr(z, o) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("ssim closed form on constant images and symmetry") {
  const Frame a = const_frame(0.0f), b = const_frame(1.0f);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  // mu_x=0, mu_y=1, sigma=0: C1/(1+C1)
  const double want = 1e-4 / (1.0 + 1e-4);
  CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-9));

  Rng rng(91);
  Frame r1 = const_frame(0.0f), r2 = const_frame(0.0f);
  for (auto& p : r1.px) p = static_cast<float>(rng.uniform());
  for (auto& p : r2.px) p = static_cast<float>(rng.uniform());
  CHECK(ssim(r1, r2) == doctest::Approx(ssim(r2, r1)).epsilon(1e-12));
}

TEST_CASE("additivity and reversibility errors") {
  const Tensor z1 = Tensor::from({1, 2}, {2.0, 0.5});
  const Tensor z2 = Tensor::from({1, 2}, {2.0, 0.0});
  CHECK(additivity_error(z1, z1, "l2") == 0.0);
  CHECK(additivity_error(z1, z2, "l2") == doctest::Approx(0.5));
  CHECK(additivity_error(z1, z2, "l1") == doctest::Approx(0.5));

  const Tensor f = Tensor::from({1, 2}, {1.0, 0.0});
  const Tensor fneg = Tensor::from({1, 2}, {-1.0, 0.0});
  const Tensor zero = Tensor::from({1, 2}, {0.0, 0.0});
  CHECK(reversibility_error(f, fneg, "l2") == 0.0);
  CHECK(reversibility_error(f, zero, "l2") == doctest::Approx(1.0));
}

TEST_CASE("cumulative latent telescopes exactly for the oracle") {
  ProbeFixture fx;
  Dataset data(fx.dir);
  const Episode ep = data.load(1);
  const TransitionFn oracle = oracle_transition();

  // t = 1 is the single short-horizon latent
  const Tensor z1 = cumulative_latent(ep, View::global, 0, 1, 5, oracle);
  const Tensor direct1 = oracle(ep, View::global, 0, 5);
  CHECK(z1.data == direct1.data);

  for (int t = 2; t <= 5; ++t) {
    const Tensor zt = cumulative_latent(ep, View::global, 0, t, 5, oracle);
    const Tensor direct = oracle(ep, View::global, 0, t * 5);
    CHECK(additivity_error(direct, zt, "l2") < 1e-10);
  }
  CHECK_THROWS_AS(cumulative_latent(ep, View::global, 0, 6, 5, oracle), ValidationError);
}

TEST_CASE("oracle probes are exactly algebraic and reports are deterministic") {
  ProbeFixture fx;
  Dataset data(fx.dir);
  ProbeConfig pc;
  pc.n_anchors = 24;

  const auto ids = data.test_ids();
  const ProbeReport r1 =
      probe_report(oracle_transition(), nullptr, nullptr, data, ids, pc, 5, "oracle");
  const ProbeReport r2 =
      probe_report(oracle_transition(), nullptr, nullptr, data, ids, pc, 5, "oracle");
  CHECK(r1.j.dump() == r2.j.dump());

  CHECK(r1.add(1) == 0.0);  // by construction, for any encoder
  for (int t = 1; t <= 5; ++t) {
    CHECK(r1.add(t) <= 1e-10);
    CHECK(r1.rev(t) <= 1e-10);
  }
  CHECK(r1.j.at("anchors_used").get<int>() == 24);
}

TEST_CASE("oracle encoder with oracle renderer-decoder reconstructs exactly at every t") {
  ProbeFixture fx;
  Dataset data(fx.dir);
  ProbeConfig pc;
  pc.n_anchors = 8;

  // decode(z, src) renders the source state displaced by z: an exact inverse
  const Dataset* dptr = &data;
  WorldConfig world = fx.world;
  const Episode ep = data.load(19);
  (void)dptr;
  const TransitionFn oracle = oracle_transition();
  for (int a : {0, 2}) {
    for (int t = 1; t <= 5; ++t) {
      const Tensor zd = oracle(ep, View::global, a, a + 5 * t);
      const Tensor zc = cumulative_latent(ep, View::global, a, t, 5, oracle);
      WorldState moved = ep.states[static_cast<size_t>(a)];
      moved.agent.x += zd.data[0];
      moved.agent.y += zd.data[1];
      const Frame direct = render_view(moved, View::global, world.resolution, world);
      WorldState moved2 = ep.states[static_cast<size_t>(a)];
      moved2.agent.x += zc.data[0];
      moved2.agent.y += zc.data[1];
      const Frame cumulative = render_view(moved2, View::global, world.resolution, world);
      const Frame target = ep.frame(View::global, a + 5 * t);
      CHECK(frame_mse(direct, target) == 0.0);
      CHECK(frame_mse(cumulative, direct) == 0.0);
    }
  }
}

TEST_CASE("probe report delta columns are zero at t=1 and counts are balanced") {
  ProbeFixture fx;
  Dataset data(fx.dir);
  ProbeConfig pc;
  pc.n_anchors = 6;

  // a cheap synthetic decoder exercises the reconstruction columns
  const DecodeFn decode = [](const Tensor& z, const Frame& src) {
    Frame out = src;
    const float shift = static_cast<float>(0.1 * z.data[0]);
    for (auto& p : out.px) p = std::min(1.0f, std::max(0.0f, p + shift));
    return out;
  };
  const PerceptualPyramid pyr = PerceptualPyramid::init(99, 3);
  const ProbeReport r = probe_report(oracle_transition(), &decode, &pyr, data, data.test_ids(),
                                     pc, 11, "synthetic");
  CHECK(r.metric("delta_direct", "psnr", 1) == 0.0);
  CHECK(r.metric("delta_cumulative", "psnr", 1) == 0.0);
  CHECK(r.metric("delta_direct", "ssim", 1) == 0.0);
  CHECK(r.metric("delta_cumulative", "perceptual", 1) == 0.0);
  for (int t = 1; t <= 5; ++t) {
    CHECK(std::isfinite(r.metric("direct", "psnr", t)));
    CHECK(std::isfinite(r.metric("cumulative", "ssim", t)));
  }
}

TEST_CASE("train and test splits never share an episode") {
  ProbeFixture fx;
  Dataset data(fx.dir);
  const auto train = data.train_ids();
  const auto test = data.test_ids();
  for (int id : test) CHECK(std::find(train.begin(), train.end(), id) == train.end());
  CHECK(train.size() + test.size() == static_cast<size_t>(data.size()));
  CHECK(test.size() * 20 == static_cast<size_t>(data.size()));
}

TEST_CASE("composition grid panels and oracle additivity") {
  ProbeFixture fx;
  Dataset data(fx.dir);
  const Episode ep = data.load(2);
  const TransitionFn oracle = oracle_transition();
  WorldConfig world = fx.world;
  const DecodeFn decode = [&world, &ep](const Tensor& z, const Frame& src) {
    (void)src;
    WorldState moved = ep.states[0];
    moved.agent.x += z.data[0];
    moved.agent.y += z.data[1];
    return render_view(moved, View::global, world.resolution, world);
  };

  const CompositionGrid g = composition_grid(ep, View::global, 0, 4, 9, oracle, decode);
  REQUIRE(g.panels.size() == 4);
  for (const auto& p : g.panels) {
    CHECK(p.h == world.resolution);
    CHECK(p.w == world.resolution);
  }
  // oracle additivity: composed panel equals the direct long-horizon panel
  CHECK(g.mse_composed_vs_direct == 0.0);

  // degenerate b == a: panel 2 reconstructs the anchor itself
  const CompositionGrid g2 = composition_grid(ep, View::global, 0, 0, 5, oracle, decode);
  CHECK(frame_mse(g2.panels[1], g2.panels[0]) == 0.0);

  const std::string path = (fs::temp_directory_path() / "alam_grid_test.png").string();
  save_grid(g, path);
  CHECK(fs::exists(path));
  fs::remove(path);
}
