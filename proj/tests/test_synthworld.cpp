#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "alam/dataset.hpp"
#include "alam/png.hpp"
#include "alam/synthworld.hpp"

using namespace alam;

namespace {

WorldConfig tiny_world() {
  WorldConfig w;
  w.resolution = 16;
  w.traj_len = 20;
  return w;
}

WorldState plain_state(Vec2 agent, Vec2 goal) {
  WorldState s;
  s.agent = agent;
  s.goal = goal;
  return s;
}

}  // namespace

TEST_CASE("step_dynamics adds, clips, and keeps everything else") {
  WorldState s = plain_state({0.5, 0.5}, {0.9, 0.9});
  s.distractors.push_back({1, {0.2, 0.2}, 0.05});

  const WorldState a = step_dynamics(s, {{0.1, 0.0}}, 0.2);
  CHECK(a.agent.x == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(a.agent.y == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a.step_index == 1);
  CHECK(a.goal.x == s.goal.x);
  CHECK(a.distractors.size() == 1);

  WorldState near_edge = plain_state({0.95, 0.5}, {0, 0});
  const WorldState b = step_dynamics(near_edge, {{0.1, 0.0}}, 0.2);
  CHECK(b.agent.x == 1.0);
  CHECK(b.agent.y == 0.5);

  const WorldState c = step_dynamics(plain_state({0.3, 0.3}, {0, 0}), {{0, 0}}, 0.2);
  CHECK(c.agent.x == 0.3);
  CHECK(c.agent.y == 0.3);

  ActionCmd bad;
  bad.u = {std::nan(""), 0.0};
  CHECK_THROWS_AS(step_dynamics(s, bad, 0.2), ValidationError);
  CHECK_THROWS_AS(step_dynamics(s, {{0.5, 0.0}}, 0.2), ValidationError);
}

TEST_CASE("renderer is deterministic") {
  WorldConfig cfg = tiny_world();
  Rng rng(5);
  WorldState s = sample_initial_state(rng, cfg);
  const Frame a = render_view(s, View::global, cfg.resolution, cfg);
  const Frame b = render_view(s, View::global, cfg.resolution, cfg);
  CHECK(a.px == b.px);
  const Frame w1 = render_view(s, View::wrist, cfg.resolution, cfg);
  const Frame w2 = render_view(s, View::wrist, cfg.resolution, cfg);
  CHECK(w1.px == w2.px);
  CHECK(w1.px != a.px);
}

TEST_CASE("agent disc renders centered when the agent is at the center") {
  WorldConfig cfg;
  cfg.resolution = 64;
  cfg.n_distractors = 0;
  WorldState s = plain_state({0.5, 0.5}, {0.9, 0.9});
  const Frame f = render_view(s, View::global, cfg.resolution, cfg);
  // red-dominant pixels belong to the agent disc
  double mass = 0.0, mx = 0.0, my = 0.0;
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x) {
      const double r = f.at(y, x, 0), g = f.at(y, x, 1);
      if (r > 0.5 && r > g) {
        const double m = r;
        mass += m;
        mx += m * x;
        my += m * y;
      }
    }
  REQUIRE(mass > 0.0);
  // world (0.5,0.5) maps to pixel-center coordinate 31.5
  CHECK(std::fabs(mx / mass - 31.5) < 1.0);
  CHECK(std::fabs(my / mass - 31.5) < 1.0);
}

TEST_CASE("global view changes are local to the agent disc") {
  WorldConfig cfg;
  cfg.resolution = 64;
  Rng rng(7);
  WorldState s1 = sample_initial_state(rng, cfg);
  s1.agent = {0.3, 0.4};
  WorldState s2 = s1;
  s2.agent = {0.65, 0.6};
  const Frame f1 = render_view(s1, View::global, cfg.resolution, cfg);
  const Frame f2 = render_view(s2, View::global, cfg.resolution, cfg);

  const int r_px = static_cast<int>(std::ceil((0.05 + 2.0 / 64) * 64));
  auto inside_box = [&](int x, int y, Vec2 p) {
    const int cx = static_cast<int>(p.x * 64), cy = static_cast<int>(p.y * 64);
    return std::abs(x - cx) <= r_px + 1 && std::abs(y - cy) <= r_px + 1;
  };
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      bool differs = false;
      for (int c = 0; c < 3; ++c) differs = differs || f1.at(y, x, c) != f2.at(y, x, c);
      if (differs) {
        CHECK((inside_box(x, y, s1.agent) || inside_box(x, y, s2.agent)));
      }
    }
}

TEST_CASE("sample_trajectory is seeded and respects action bounds") {
  WorldConfig cfg = tiny_world();
  const Trajectory t1 = sample_trajectory(42, 50, cfg, false);
  const Trajectory t2 = sample_trajectory(42, 50, cfg, false);
  CHECK(t1.length() == 50);
  CHECK(t1.actions.size() == 49);
  for (int t = 0; t < t1.length(); ++t) {
    CHECK(t1.states[static_cast<size_t>(t)].agent.x == t2.states[static_cast<size_t>(t)].agent.x);
    CHECK(t1.states[static_cast<size_t>(t)].agent.y == t2.states[static_cast<size_t>(t)].agent.y);
  }
  for (const auto& a : t1.actions) CHECK(a.u.linf() <= cfg.max_step);

  const Trajectory t3 = sample_trajectory(7, 2, cfg, false);
  CHECK(t3.length() == 2);
  CHECK(t3.actions.size() == 1);
  CHECK_THROWS_AS(sample_trajectory(7, 1, cfg, false), ValidationError);
}

TEST_CASE("scripted expert reaches the goal") {
  WorldConfig cfg = tiny_world();
  cfg.max_step = 0.2;
  cfg.eps_goal = 0.01;

  // 2 steps for a 0.3 gap at max_step 0.2
  {
    Rng rng(1);
    WorldState s;
    s.agent = {0.0, 0.0};
    s.goal = {0.3, 0.0};
    auto clip_step = [&](double d) { return std::min(std::max(d, -cfg.max_step), cfg.max_step); };
    int steps = 0;
    while ((s.goal - s.agent).linf() > cfg.eps_goal) {
      ActionCmd a;
      a.u = {clip_step(s.goal.x - s.agent.x), clip_step(s.goal.y - s.agent.y)};
      s = step_dynamics(s, a, cfg.max_step);
      ++steps;
    }
    CHECK(steps == 2);
  }

  // identity start: zero steps, still success
  {
    WorldConfig c2 = cfg;
    ExpertEpisode ep = generate_expert_episode(3, c2, false);
    // whatever the draw, running from goal==agent must terminate instantly
    WorldState s = ep.traj.states[0];
    s.agent = s.goal;
    // re-run the controller logic by constructing a trivial episode
    CHECK((s.goal - s.agent).linf() <= c2.eps_goal);
  }

  // controller is exact: every seed succeeds within the step bound
  WorldConfig c3 = tiny_world();
  const int bound = static_cast<int>(std::ceil(1.0 / c3.max_step)) + 1;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    ExpertEpisode ep = generate_expert_episode(seed, c3, false);
    CHECK(ep.success);
    CHECK(static_cast<int>(ep.traj.actions.size()) <= bound);
  }
}

TEST_CASE("triplet gaps are i.i.d. uniform and ordered") {
  Rng rng(11);
  const int lo = 1, hi = 16, n = 10000;
  std::vector<int> counts(static_cast<size_t>(2 * hi), 0);
  for (int i = 0; i < n; ++i) {
    const TripletSample t = make_triplet(64, rng, lo, hi);
    CHECK(t.a < t.b);
    CHECK(t.b < t.c);
    CHECK(t.gap_ab() >= lo);
    CHECK(t.gap_ab() <= hi);
    ++counts[static_cast<size_t>(t.gap_ab() - 1)];
    ++counts[static_cast<size_t>(hi + t.gap_bc() - 1)];
  }
  // 3-sigma multinomial band per bin
  const double p = 1.0 / hi;
  const double mean = n * p;
  const double sig = std::sqrt(n * p * (1 - p));
  for (int b = 0; b < 2 * hi; ++b) CHECK(std::fabs(counts[static_cast<size_t>(b)] - mean) <= 3.0 * sig);

  // degenerate range
  for (int i = 0; i < 10; ++i) {
    const TripletSample t = make_triplet(10, rng, 1, 1);
    CHECK(t.gap_ab() == 1);
    CHECK(t.gap_bc() == 1);
  }
  CHECK_THROWS_AS(make_triplet(8, rng, 1, 16), ValidationError);
}

TEST_CASE("true_transition is an exact difference operator") {
  const WorldState a = plain_state({0.2, 0.2}, {0, 0});
  const WorldState b = plain_state({0.5, 0.2}, {0, 0});
  const Vec2 d = true_transition(a, b);
  CHECK(d.x == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(d.y == 0.0);
  const Vec2 z = true_transition(a, a);
  CHECK(z.x == 0.0);
  CHECK(z.y == 0.0);
  const Vec2 r = true_transition(b, a);
  CHECK(r.x == -d.x);
  CHECK(r.y == -d.y);

  // additivity to machine precision along a rolled-out trajectory
  WorldConfig cfg = tiny_world();
  const Trajectory t = sample_trajectory(13, 30, cfg, false);
  for (int i : {0, 3, 11}) {
    for (int j : {5, 14, 25}) {
      for (int k : {27, 29}) {
        const Vec2 ij = true_transition(t.states[static_cast<size_t>(i)], t.states[static_cast<size_t>(j)]);
        const Vec2 jk = true_transition(t.states[static_cast<size_t>(j)], t.states[static_cast<size_t>(k)]);
        const Vec2 ik = true_transition(t.states[static_cast<size_t>(i)], t.states[static_cast<size_t>(k)]);
        CHECK(std::fabs(ik.x - (ij.x + jk.x)) < 1e-15);
        CHECK(std::fabs(ik.y - (ij.y + jk.y)) < 1e-15);
      }
    }
  }
}

TEST_CASE("dataset round-trips and lazy rendering matches stored frames") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "alam_test_ds").string();
  fs::remove_all(dir);

  WorldConfig w = tiny_world();
  w.store_frames = true;
  Dataset::generate(w, "video", 40, 123, dir);
  Dataset ds(dir);
  CHECK(ds.size() == 40);
  CHECK(ds.kind() == "video");

  // split: exactly 5%, disjoint
  const auto train = ds.train_ids();
  const auto test = ds.test_ids();
  CHECK(test.size() == 2);
  CHECK(train.size() + test.size() == 40);
  for (int id : test) CHECK(Dataset::is_test_index(id));

  Episode ep = ds.load(3);
  CHECK(ep.length() == w.traj_len);
  CHECK(ep.actions.size() == static_cast<size_t>(w.traj_len - 1));

  // stored frames equal the deterministic re-render
  const Frame stored = ep.frame(View::wrist, 5);
  const Frame rerender = render_view(ep.states[5], View::wrist, w.resolution, w);
  CHECK(stored.px == rerender.px);

  // stateless dataset written without frames produces identical pixels
  const std::string dir2 = dir + "_nf";
  fs::remove_all(dir2);
  WorldConfig w2 = w;
  w2.store_frames = false;
  Dataset::generate(w2, "video", 40, 123, dir2);
  Dataset ds2(dir2);
  Episode ep2 = ds2.load(3);
  CHECK(ep2.stored_frames[0].empty());
  CHECK(ep2.frame(View::wrist, 5).px == stored.px);
  CHECK(ep2.frame(View::global, 7).px == ep.frame(View::global, 7).px);

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("demo dataset records success and pads to the requested length") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "alam_test_demo").string();
  fs::remove_all(dir);
  WorldConfig w = tiny_world();
  Dataset::generate(w, "demo", 25, 9, dir, /*min_frames=*/12);
  Dataset ds(dir);
  for (int i = 0; i < ds.size(); ++i) {
    Episode ep = ds.load(i);
    CHECK(ep.has_success);
    CHECK(ep.success);
    CHECK(ep.length() >= 12);
    // padded steps hold the state exactly
    const auto& last = ep.states.back();
    CHECK((last.goal - last.agent).linf() <= w.eps_goal);
  }
  fs::remove_all(dir);
}

TEST_CASE("png writer emits a valid header") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "alam_test.png").string();
  WorldConfig cfg = tiny_world();
  Rng rng(3);
  const Frame f = render_view(sample_initial_state(rng, cfg), View::global, 16, cfg);
  write_png(path, f);
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8];
  in.read(reinterpret_cast<char*>(sig), 8);
  CHECK(sig[0] == 0x89);
  CHECK(sig[1] == 'P');
  CHECK(sig[2] == 'N');
  CHECK(sig[3] == 'G');
  fs::remove(path);
}
