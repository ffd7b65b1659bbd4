#include "alam/synthworld.hpp"

#include <cmath>

namespace alam {

namespace {

constexpr double kAgentRadius = 0.05;
constexpr double kGoalRadius = 0.07;
constexpr double kGoalRingHalf = 0.012;

struct Rgb {
  double r, g, b;
};
constexpr Rgb kBackground{0.10, 0.10, 0.12};
constexpr Rgb kAgentColor{0.90, 0.20, 0.15};
constexpr Rgb kGoalColor{0.10, 0.80, 0.25};
constexpr Rgb kDistractorColors[3] = {{0.30, 0.35, 0.45}, {0.42, 0.38, 0.28}, {0.32, 0.28, 0.40}};

double clip01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Signed "inside-ness" in world units; positive inside.
double shape_inset(const Distractor& d, Vec2 p) {
  const double dx = p.x - d.pos.x, dy = p.y - d.pos.y;
  switch (d.shape) {
    case 0:  // square
      return d.size - std::max(std::fabs(dx), std::fabs(dy));
    case 1:  // disc
      return d.size - std::sqrt(dx * dx + dy * dy);
    default:  // diamond
      return d.size - (std::fabs(dx) + std::fabs(dy));
  }
}

void blend(float* px, const Rgb& c, double cov) {
  px[0] = static_cast<float>(px[0] + (c.r - px[0]) * cov);
  px[1] = static_cast<float>(px[1] + (c.g - px[1]) * cov);
  px[2] = static_cast<float>(px[2] + (c.b - px[2]) * cov);
}

double coverage(double inset, double aa) { return clip01(0.5 + inset / aa); }

}  // namespace

WorldState step_dynamics(const WorldState& state, const ActionCmd& action, double max_step) {
  require(std::isfinite(action.u.x) && std::isfinite(action.u.y),
          "step_dynamics: non-finite action");
  require(action.u.linf() <= max_step + 1e-12, "step_dynamics: action exceeds max_step");
  WorldState next = state;
  next.agent.x = clip01(state.agent.x + action.u.x);
  next.agent.y = clip01(state.agent.y + action.u.y);
  next.step_index = state.step_index + 1;
  return next;
}

Frame render_view(const WorldState& state, View view, int resolution, const WorldConfig& cfg) {
  require(cfg.channels == 3, "render_view: only 3-channel RGB frames are supported");
  Frame f(resolution, resolution, 3, view);

  // Window of world space covered by the image.
  double zoom = 1.0, cx = 0.5, cy = 0.5;
  if (view == View::wrist) {
    zoom = cfg.wrist_zoom;
    const double half = 0.5 / zoom;
    cx = std::min(std::max(state.agent.x, half), 1.0 - half);
    cy = std::min(std::max(state.agent.y, half), 1.0 - half);
  }
  const double span = 1.0 / zoom;
  const double x0 = cx - 0.5 * span, y0 = cy - 0.5 * span;
  const double aa = span / resolution;  // one pixel in world units

  for (int iy = 0; iy < resolution; ++iy) {
    const double wy = y0 + (iy + 0.5) * span / resolution;
    for (int ix = 0; ix < resolution; ++ix) {
      const double wx = x0 + (ix + 0.5) * span / resolution;
      float* px = &f.at(iy, ix, 0);
      px[0] = static_cast<float>(kBackground.r);
      px[1] = static_cast<float>(kBackground.g);
      px[2] = static_cast<float>(kBackground.b);
      for (const auto& d : state.distractors) {
        const double cov = coverage(shape_inset(d, {wx, wy}), aa);
        if (cov > 0.0) blend(px, kDistractorColors[d.shape % 3], cov);
      }
      const double gdx = wx - state.goal.x, gdy = wy - state.goal.y;
      const double gdist = std::sqrt(gdx * gdx + gdy * gdy);
      const double gcov = coverage(kGoalRingHalf - std::fabs(gdist - kGoalRadius), aa);
      if (gcov > 0.0) blend(px, kGoalColor, gcov);
      const double adx = wx - state.agent.x, ady = wy - state.agent.y;
      const double acov = coverage(kAgentRadius - std::sqrt(adx * adx + ady * ady), aa);
      if (acov > 0.0) blend(px, kAgentColor, acov);
    }
  }
  return f;
}

WorldState sample_initial_state(Rng& rng, const WorldConfig& cfg) {
  WorldState s;
  s.agent = {rng.uniform(), rng.uniform()};
  s.goal = {rng.uniform(), rng.uniform()};
  s.distractors.reserve(static_cast<size_t>(cfg.n_distractors));
  for (int i = 0; i < cfg.n_distractors; ++i) {
    Distractor d;
    d.shape = static_cast<int>(rng.uniform_int(3));
    d.pos = {rng.uniform(), rng.uniform()};
    d.size = 0.04 + 0.05 * rng.uniform();
    s.distractors.push_back(d);
  }
  return s;
}

namespace {
void render_all(Trajectory& traj, const WorldConfig& cfg) {
  for (int v = 0; v < kNumViews; ++v) {
    traj.frames[static_cast<size_t>(v)].reserve(traj.states.size());
    for (const auto& s : traj.states)
      traj.frames[static_cast<size_t>(v)].push_back(
          render_view(s, static_cast<View>(v), cfg.resolution, cfg));
  }
}
}  // namespace

Trajectory sample_trajectory(uint64_t seed, int length, const WorldConfig& cfg, bool render) {
  require(length >= 2, "sample_trajectory: need length >= 2");
  Rng rng(seed);
  Trajectory traj;
  traj.states.push_back(sample_initial_state(rng, cfg));

  // stationary start for the AR(1) velocity: std = 0.1*sigma/sqrt(1-0.9^2)
  const double stat = 0.1 * cfg.max_step / std::sqrt(1.0 - 0.81);
  Vec2 v{rng.normal(0.0, stat), rng.normal(0.0, stat)};
  for (int t = 0; t + 1 < length; ++t) {
    ActionCmd a;
    a.u.x = std::min(std::max(v.x, -cfg.max_step), cfg.max_step);
    a.u.y = std::min(std::max(v.y, -cfg.max_step), cfg.max_step);
    traj.states.push_back(step_dynamics(traj.states.back(), a, cfg.max_step));
    traj.actions.push_back(a);
    v.x = 0.9 * v.x + 0.1 * rng.normal(0.0, cfg.max_step);
    v.y = 0.9 * v.y + 0.1 * rng.normal(0.0, cfg.max_step);
  }
  if (render) render_all(traj, cfg);
  return traj;
}

ExpertEpisode generate_expert_episode(uint64_t seed, const WorldConfig& cfg, bool render,
                                      int min_frames) {
  Rng rng(seed);
  ExpertEpisode ep;
  ep.traj.states.push_back(sample_initial_state(rng, cfg));
  auto clip_step = [&](double d) { return std::min(std::max(d, -cfg.max_step), cfg.max_step); };
  int steps = 0;
  while ((ep.traj.states.back().goal - ep.traj.states.back().agent).linf() > cfg.eps_goal &&
         steps < cfg.expert_max_len) {
    const WorldState& s = ep.traj.states.back();
    ActionCmd a;
    a.u = {clip_step(s.goal.x - s.agent.x), clip_step(s.goal.y - s.agent.y)};
    ep.traj.states.push_back(step_dynamics(s, a, cfg.max_step));
    ep.traj.actions.push_back(a);
    ++steps;
  }
  ep.success = (ep.traj.states.back().goal - ep.traj.states.back().agent).linf() <= cfg.eps_goal;
  // pad with no-op actions so downstream windows of a fixed horizon exist
  while (ep.traj.length() < min_frames) {
    ActionCmd a;  // zero action holds the state exactly
    ep.traj.states.push_back(step_dynamics(ep.traj.states.back(), a, cfg.max_step));
    ep.traj.actions.push_back(a);
  }
  if (render) render_all(ep.traj, cfg);
  return ep;
}

TripletSample make_triplet(int traj_frames, Rng& rng, int gap_lo, int gap_hi) {
  require(gap_lo >= 1 && gap_hi >= gap_lo, "make_triplet: bad gap range");
  require(traj_frames - 1 >= 2 * gap_hi,
          "make_triplet: trajectory too short for two maximal gaps (need length >= " +
              std::to_string(2 * gap_hi + 1) + ", got " + std::to_string(traj_frames) + ")");
  const int g1 = static_cast<int>(rng.uniform_range(gap_lo, gap_hi));
  const int g2 = static_cast<int>(rng.uniform_range(gap_lo, gap_hi));
  const int a = static_cast<int>(rng.uniform_range(0, traj_frames - 1 - g1 - g2));
  return TripletSample{a, a + g1, a + g1 + g2};
}

Vec2 true_transition(const WorldState& from, const WorldState& to) {
  return to.agent - from.agent;
}

double frame_mse(const Frame& a, const Frame& b) {
  require(a.h == b.h && a.w == b.w && a.c == b.c, "frame_mse: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    const double d = static_cast<double>(a.px[i]) - static_cast<double>(b.px[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.px.size());
}

}  // namespace alam

