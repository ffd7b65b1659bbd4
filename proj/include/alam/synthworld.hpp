#pragma once

#include <array>
#include <optional>
#include <vector>

#include "alam/image.hpp"
#include "alam/rng.hpp"

namespace alam {

struct Vec2 {
  double x = 0.0, y = 0.0;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  double linf() const { return std::max(std::fabs(x), std::fabs(y)); }
};

struct WorldConfig {
  int resolution = 64;
  int channels = 3;
  double max_step = 0.05;   // |u|_inf bound, arena widths per step
  double eps_goal = 0.02;   // reaching tolerance
  int traj_len = 40;        // frames per pretraining trajectory
  int expert_max_len = 32;  // step cap for the scripted controller
  int n_distractors = 3;
  double wrist_zoom = 2.0;
  bool store_frames = true;
};

struct Distractor {
  int shape = 0;  // 0 square, 1 disc, 2 diamond
  Vec2 pos;
  double size = 0.05;
};

struct WorldState {
  Vec2 agent;
  Vec2 goal;
  std::vector<Distractor> distractors;
  int step_index = 0;
};

struct ActionCmd {
  Vec2 u;
};

struct Trajectory {
  std::vector<WorldState> states;
  std::vector<ActionCmd> actions;
  // frames[view][t]; empty when frames were not rendered
  std::array<std::vector<Frame>, kNumViews> frames;

  int length() const { return static_cast<int>(states.size()); }
};

struct TripletSample {
  int a = 0, b = 0, c = 0;
  int gap_ab() const { return b - a; }
  int gap_bc() const { return c - b; }
};

// agent' = clip(agent + u, [0,1]^2); goal/distractors untouched.
WorldState step_dynamics(const WorldState& state, const ActionCmd& action, double max_step);

// Deterministic rasterizer; wrist view is a zoom crop centered on the agent
// with edge clamping.
Frame render_view(const WorldState& state, View view, int resolution, const WorldConfig& cfg);

// Draws the initial state (agent, goal, distractors) for an episode.
WorldState sample_initial_state(Rng& rng, const WorldConfig& cfg);

// Mean-reverting random-velocity rollout: v' = 0.9 v + 0.1 eta,
// eta ~ N(0, max_step); executed action is v clipped per axis.
Trajectory sample_trajectory(uint64_t seed, int length, const WorldConfig& cfg,
                             bool render = true);

struct ExpertEpisode {
  Trajectory traj;
  bool success = false;
};

// Scripted controller u = clip(goal - agent) until within eps_goal.
ExpertEpisode generate_expert_episode(uint64_t seed, const WorldConfig& cfg, bool render = true,
                                      int min_frames = 0);

// Gap sampling: g1, g2 ~ U{gap_lo..gap_hi} i.i.d., then a uniform over valid
// starts. Requires traj_frames - 1 >= 2 * gap_hi.
TripletSample make_triplet(int traj_frames, Rng& rng, int gap_lo, int gap_hi);

// Ground-truth transition: exact displacement of the agent. The oracle
// latent for the probe suite.
Vec2 true_transition(const WorldState& from, const WorldState& to);

}  // namespace alam
