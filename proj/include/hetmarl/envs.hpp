#pragma once

// Scenario layer: spawning, observations, communication graphs, shared
// rewards and success predicates for the four two-robot tasks.
//
//   A             1D line, two agents of different mass; team reward is the
//                 fastest agent's speed minus an energy cost.
//   B             corridor one robot wide with two recesses at the middle;
//                 each robot starts on the other's goal.
//   PassageSizes  a big and a small robot joined by a rigid bar must cross a
//                 wall through two gaps sized for one robot each.
//   PassageAsym   identical robots, bar with an off-centre point mass, one
//                 gap; team and goal have random pose.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetmarl/core.hpp"
#include "hetmarl/physics.hpp"

namespace hetmarl {

enum class ScenarioId { kA, kB, kPassageSizes, kPassageAsym };
enum class TypingMode { kNone, kExplicitIndex };

inline std::string to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::kA: return "A";
    case ScenarioId::kB: return "B";
    case ScenarioId::kPassageSizes: return "PassageSizes";
    case ScenarioId::kPassageAsym: return "PassageAsym";
  }
  return "?";
}

inline ScenarioId parse_scenario_id(std::string_view s) {
  if (s == "A") return ScenarioId::kA;
  if (s == "B") return ScenarioId::kB;
  if (s == "PassageSizes") return ScenarioId::kPassageSizes;
  if (s == "PassageAsym") return ScenarioId::kPassageAsym;
  throw ConfigError("unknown scenario id '" + std::string(s) + "'");
}

inline std::string to_string(TypingMode m) {
  return m == TypingMode::kNone ? "none" : "explicit_index";
}

inline TypingMode parse_typing_mode(std::string_view s) {
  if (s == "none") return TypingMode::kNone;
  if (s == "explicit_index") return TypingMode::kExplicitIndex;
  throw ConfigError("unknown typing_mode '" + std::string(s) + "'");
}

struct ScenarioSpec {
  ScenarioId id = ScenarioId::kA;
  int n_agents = 2;
  int horizon = 50;
  double comm_range = kInf;

  // Scenario A
  double workspace_half_width = 1.0;

  // Scenario B
  double corridor_length = 2.0;
  double corridor_width = 0.3;
  double recess_size = 0.3;
  double goal_radius = 0.05;
  double goal_margin = 0.2;
  double spawn_jitter = 0.02;

  // Passage scenarios
  double wall_extent = 1.5;
  double wall_thickness = 0.04;
  double gap_width_big = 0.28;
  double gap_width_small = 0.16;
  double gap_width = 0.26;
  double gap_spacing = 0.5;
  double link_length = 0.5;
  double spawn_offset = 0.6;
  double spawn_range = 0.6;
  double link_point_mass = 1.0;
  double link_point_mass_offset = 0.8;

  // Rewards
  double energy_coeff = 0.1;
  double positional_scale = 1.0;
  double final_reward = 0.05;
  double collision_penalty = 0.1;
  double curriculum_fraction = 0.8;
  double shaping_scale = 1.0;

  // Success
  double goal_tolerance = 0.05;
  double orientation_tolerance = 0.1;

  // Per-agent physical attributes.
  std::vector<double> masses{2.0, 0.5};
  std::vector<double> radii{0.05, 0.05};
  double max_force = 1.0;
  double max_speed = 1.0;

  PhysicsParams physics;

  static ScenarioSpec defaults(ScenarioId id);
  void validate() const;
  bool operator==(const ScenarioSpec&) const = default;
};

inline ScenarioSpec ScenarioSpec::defaults(ScenarioId id) {
  ScenarioSpec s;
  s.id = id;
  switch (id) {
    case ScenarioId::kA:
      s.horizon = 50;
      s.masses = {2.0, 0.5};
      s.radii = {0.05, 0.05};
      s.max_force = 1.0;
      s.max_speed = 1.0;
      break;
    case ScenarioId::kB:
      s.horizon = 500;
      s.masses = {1.0, 1.0};
      s.radii = {0.12, 0.12};
      s.max_force = 1.0;
      s.max_speed = 0.5;
      break;
    case ScenarioId::kPassageSizes:
      s.horizon = 250;
      s.masses = {1.0, 1.0};
      s.radii = {0.1, 0.05};
      s.max_force = 1.0;
      s.max_speed = 0.5;
      break;
    case ScenarioId::kPassageAsym:
      s.horizon = 250;
      s.masses = {1.0, 1.0};
      s.radii = {0.08, 0.08};
      s.max_force = 1.0;
      s.max_speed = 0.5;
      break;
  }
  return s;
}

inline void ScenarioSpec::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("scenario: ") + name + " must be > 0");
  };
  if (n_agents != 2) throw ConfigError("scenario: n_agents must be 2");
  if (horizon < 0) throw ConfigError("scenario: horizon must be >= 0");
  if (!(comm_range > 0.0)) throw ConfigError("scenario: comm_range must be > 0");
  if (static_cast<int>(masses.size()) != n_agents || static_cast<int>(radii.size()) != n_agents)
    throw ConfigError("scenario: masses and radii need one entry per agent");
  for (double m : masses) positive(m, "masses");
  for (double r : radii) positive(r, "radii");
  positive(max_force, "max_force");
  positive(max_speed, "max_speed");
  positive(goal_tolerance, "goal_tolerance");
  positive(orientation_tolerance, "orientation_tolerance");
  if (energy_coeff < 0.0 || positional_scale < 0.0 || final_reward < 0.0 ||
      collision_penalty < 0.0 || shaping_scale < 0.0)
    throw ConfigError("scenario: reward coefficients must be >= 0");
  physics.validate();
  switch (id) {
    case ScenarioId::kA:
      positive(workspace_half_width, "workspace_half_width");
      break;
    case ScenarioId::kB: {
      positive(corridor_length, "corridor_length");
      positive(corridor_width, "corridor_width");
      positive(recess_size, "recess_size");
      positive(goal_radius, "goal_radius");
      positive(wall_thickness, "wall_thickness");
      for (double r : radii) {
        if (!(corridor_width >= 2.0 * r && corridor_width < 4.0 * r))
          throw ConfigError("scenario: corridor must fit exactly one robot abreast");
        if (recess_size < 2.0 * r) throw ConfigError("scenario: recess cannot hold a robot");
      }
      if (spawn_jitter < 0.0 || spawn_jitter * std::sqrt(2.0) >= goal_radius)
        throw ConfigError("scenario: spawn_jitter must keep spawns inside the goal disk");
      if (goal_margin < radii[0] || corridor_length / 2 - goal_margin <= recess_size / 2 + radii[0])
        throw ConfigError("scenario: corridor too short for the goal layout");
      break;
    }
    case ScenarioId::kPassageSizes:
    case ScenarioId::kPassageAsym: {
      positive(wall_extent, "wall_extent");
      positive(wall_thickness, "wall_thickness");
      positive(link_length, "link_length");
      positive(spawn_offset, "spawn_offset");
      if (spawn_range < 0.0) throw ConfigError("scenario: spawn_range must be >= 0");
      if (link_point_mass < 0.0 || link_point_mass_offset < 0.0 || link_point_mass_offset > 1.0)
        throw ConfigError("scenario: invalid link point mass");
      if (link_length <= radii[0] + radii[1])
        throw ConfigError("scenario: link too short for the robots");
      if (id == ScenarioId::kPassageSizes) {
        positive(gap_width_big, "gap_width_big");
        positive(gap_width_small, "gap_width_small");
        positive(gap_spacing, "gap_spacing");
        const double big = std::max(radii[0], radii[1]);
        const double small = std::min(radii[0], radii[1]);
        if (gap_width_big < 2.0 * big || gap_width_small < 2.0 * small)
          throw ConfigError("scenario: gaps cannot fit the robots");
        if (gap_spacing < 0.5 * (gap_width_big + gap_width_small) + wall_thickness)
          throw ConfigError("scenario: gaps overlap");
        if (spawn_range + 0.5 * gap_spacing + gap_width_big > wall_extent)
          throw ConfigError("scenario: gaps do not fit in the wall");
      } else {
        positive(gap_width, "gap_width");
        if (gap_width < 2.0 * std::max(radii[0], radii[1]))
          throw ConfigError("scenario: gap cannot fit the robots");
        if (spawn_range + gap_width > wall_extent)
          throw ConfigError("scenario: gap does not fit in the wall");
      }
      if (spawn_offset < 0.5 * link_length + std::max(radii[0], radii[1]) + wall_thickness)
        throw ConfigError("scenario: spawn_offset puts the team inside the wall");
      break;
    }
  }
}

// Index layout of an observation vector. Position and velocity blocks are
// `spatial_dims` wide; everything except the position block is non-absolute.
struct ObsLayout {
  int dim = 0;
  int spatial_dims = 2;
  int pos_offset = 0;
  int vel_offset = 2;
};

using Observation = std::vector<double>;

inline ObsLayout observation_layout(ScenarioId id, TypingMode typing) {
  ObsLayout l;
  switch (id) {
    case ScenarioId::kA: l = {2, 1, 0, 1}; break;           // p, v
    case ScenarioId::kB: l = {6, 2, 0, 2}; break;           // p, v, own goal
    case ScenarioId::kPassageSizes: l = {10, 2, 0, 2}; break;  // p, v, big gap, small gap, goal
    case ScenarioId::kPassageAsym: l = {10, 2, 0, 2}; break;   // p, v, gap, goal, cos2a, sin2a
  }
  if (typing == TypingMode::kExplicitIndex) l.dim += 1;
  return l;
}

inline int action_dim(ScenarioId id) { return id == ScenarioId::kA ? 1 : 2; }

// Per-episode landmarks drawn at reset.
struct Landmarks {
  std::vector<Vec2> goals;        // B: one goal per agent
  std::vector<Vec2> gap_centers;  // Sizes: {big, small}; Asym: {gap}
  Vec2 goal_center;               // passage goal pose
  double goal_angle = 0.0;
  double wall_y = 0.0;
  bool operator==(const Landmarks&) const = default;

  Landmarks translated(Vec2 d) const {
    Landmarks l = *this;
    for (auto& g : l.goals) g += d;
    for (auto& g : l.gap_centers) g += d;
    l.goal_center += d;
    l.wall_y += d.y;
    return l;
  }
};

struct CommGraph {
  std::vector<std::vector<int>> neighbors;
  bool operator==(const CommGraph&) const = default;
};

inline CommGraph comm_graph(const WorldState& w, double range) {
  if (!(range > 0.0)) throw ConfigError("comm_graph: range must be > 0");
  const int n = static_cast<int>(w.agents.size());
  CommGraph g;
  g.neighbors.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if ((w.agents[i].position - w.agents[j].position).norm() <= range) g.neighbors[i].push_back(j);
    }
  }
  return g;
}

inline Observation observe(const WorldState& w, const ScenarioSpec& spec, const Landmarks& lm,
                           int agent, TypingMode typing) {
  if (agent < 0 || agent >= static_cast<int>(w.agents.size()))
    throw ShapeError("observe: unknown agent");
  const AgentBody& a = w.agents[agent];
  Observation o;
  o.reserve(12);
  auto push = [&o](Vec2 v) {
    o.push_back(v.x);
    o.push_back(v.y);
  };
  switch (spec.id) {
    case ScenarioId::kA:
      o.push_back(a.position.x);
      o.push_back(a.velocity.x);
      break;
    case ScenarioId::kB:
      push(a.position);
      push(a.velocity);
      push(lm.goals[agent] - a.position);
      break;
    case ScenarioId::kPassageSizes:
      push(a.position);
      push(a.velocity);
      push(lm.gap_centers[0] - a.position);
      push(lm.gap_centers[1] - a.position);
      push(lm.goal_center - a.position);
      break;
    case ScenarioId::kPassageAsym:
      push(a.position);
      push(a.velocity);
      push(lm.gap_centers[0] - a.position);
      push(lm.goal_center - a.position);
      o.push_back(std::cos(2.0 * lm.goal_angle));
      o.push_back(std::sin(2.0 * lm.goal_angle));
      break;
  }
  if (typing == TypingMode::kExplicitIndex) {
    const int n = static_cast<int>(w.agents.size());
    o.push_back(n > 1 ? static_cast<double>(agent) / (n - 1) : 0.0);
  }
  return o;
}

// --- rewards -----------------------------------------------------------------

// Shared team reward: fastest agent's speed minus energy spent.
inline std::vector<double> reward_scenario_a(const WorldState& /*prev*/,
                                             std::span<const Vec2> forces,
                                             const WorldState& next, double energy_coeff) {
  double vmax = 0.0;
  for (const auto& a : next.agents) vmax = std::max(vmax, a.velocity.norm());
  double energy = 0.0;
  for (const Vec2& f : forces) energy += f.squared_norm();
  return std::vector<double>(next.agents.size(), vmax - energy_coeff * energy);
}

struct RewardBParams {
  double positional_scale = 1.0;
  double final_reward = 0.05;
  double collision_penalty = 0.1;
  double goal_radius = 0.05;
};

struct RewardBTerms {
  double positional = 0.0;
  double final = 0.0;
  double collision = 0.0;
  double total() const { return positional + final - collision; }
};

inline bool all_on_goal(const WorldState& w, const Landmarks& lm, double goal_radius) {
  for (std::size_t i = 0; i < w.agents.size(); ++i) {
    if ((w.agents[i].position - lm.goals[i]).norm() > goal_radius) return false;
  }
  return true;
}

inline RewardBTerms reward_terms_b(const WorldState& prev, const WorldState& next,
                                   const Landmarks& lm, bool curriculum_on,
                                   const RewardBParams& p) {
  RewardBTerms t;
  for (std::size_t i = 0; i < next.agents.size(); ++i) {
    const double before = (prev.agents[i].position - lm.goals[i]).norm();
    const double after = (next.agents[i].position - lm.goals[i]).norm();
    t.positional += p.positional_scale * (before - after);
  }
  if (all_on_goal(next, lm, p.goal_radius)) t.final = p.final_reward;
  int counted = 0;
  for (const Contact& c : find_contacts(next)) {
    if (c.kind == ContactKind::kAgentAgent) {
      counted += 2;  // both robots are in the collision
    } else if (curriculum_on && c.segment_tag == SegmentTag::kRecess) {
      counted += 1;
    }
  }
  t.collision = p.collision_penalty * counted;
  return t;
}

inline std::vector<double> reward_scenario_b(const WorldState& prev, const WorldState& next,
                                             const Landmarks& lm, bool curriculum_on,
                                             const RewardBParams& p) {
  return std::vector<double>(next.agents.size(),
                             reward_terms_b(prev, next, lm, curriculum_on, p).total());
}

struct LinkPose {
  Vec2 center;
  double angle = 0.0;
};

inline LinkPose link_pose(const WorldState& w) {
  const Vec2 a = w.agents[0].position;
  const Vec2 b = w.agents[1].position;
  const Vec2 d = b - a;
  return {(a + b) * 0.5, std::atan2(d.y, d.x)};
}

// Target pose used before the link centre crosses the wall.
inline LinkPose passage_approach_pose(const ScenarioSpec& spec, const Landmarks& lm) {
  if (spec.id == ScenarioId::kPassageSizes) {
    return {(lm.gap_centers[0] + lm.gap_centers[1]) * 0.5, lm.goal_angle};
  }
  return {lm.gap_centers[0], kPi / 2};
}

inline bool passage_crossed(const WorldState& w, const Landmarks& lm) {
  return link_pose(w).center.y > lm.wall_y;
}

inline double passage_potential(const WorldState& w, const ScenarioSpec& spec,
                                const Landmarks& lm, bool after_wall) {
  const LinkPose pose = link_pose(w);
  const LinkPose target =
      after_wall ? LinkPose{lm.goal_center, lm.goal_angle} : passage_approach_pose(spec, lm);
  return undirected_angle_error(pose.angle, target.angle) + (pose.center - target.center).norm();
}

// Delta-shaped two-phase reward. The phase is chosen from `next`, and both
// potentials are evaluated against that phase's target.
inline std::vector<double> reward_passage(const WorldState& prev, const WorldState& next,
                                          const Landmarks& lm, const ScenarioSpec& spec) {
  const bool after = passage_crossed(next, lm);
  double r = spec.shaping_scale *
             (passage_potential(prev, spec, lm, after) - passage_potential(next, spec, lm, after));
  r -= spec.collision_penalty * static_cast<double>(find_contacts(next).size());
  return std::vector<double>(next.agents.size(), r);
}

inline bool passage_at_goal(const WorldState& w, const Landmarks& lm, const ScenarioSpec& spec) {
  const LinkPose pose = link_pose(w);
  return (pose.center - lm.goal_center).norm() <= spec.goal_tolerance &&
         undirected_angle_error(pose.angle, lm.goal_angle) <= spec.orientation_tolerance;
}

// --- spawning ----------------------------------------------------------------

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline AgentBody make_agent(const ScenarioSpec& s, int i, Vec2 p) {
  AgentBody a;
  a.position = p;
  a.mass = s.masses[i];
  a.radius = s.radii[i];
  a.max_force = s.max_force;
  a.max_speed = s.max_speed;
  a.shape_tag = i;
  return a;
}

inline void corridor_walls(const ScenarioSpec& s, StaticGeometry& g) {
  const double t = s.wall_thickness;
  const double hl = s.corridor_length / 2 + t / 2;
  const double hw = s.corridor_width / 2 + t / 2;
  const double rx = s.recess_size / 2 + t / 2;
  const double ry = s.corridor_width / 2 + s.recess_size + t / 2;
  for (double side : {1.0, -1.0}) {
    g.segments.push_back({{-hl, side * hw}, {-rx, side * hw}, t, SegmentTag::kWall});
    g.segments.push_back({{rx, side * hw}, {hl, side * hw}, t, SegmentTag::kWall});
    g.segments.push_back({{-rx, side * hw}, {-rx, side * ry}, t, SegmentTag::kRecess});
    g.segments.push_back({{rx, side * hw}, {rx, side * ry}, t, SegmentTag::kRecess});
    g.segments.push_back({{-rx, side * ry}, {rx, side * ry}, t, SegmentTag::kRecess});
  }
  g.segments.push_back({{-hl, -hw}, {-hl, hw}, t, SegmentTag::kWall});
  g.segments.push_back({{hl, -hw}, {hl, hw}, t, SegmentTag::kWall});
}

// Horizontal wall at y = 0 with openings of the given free width.
inline void passage_wall(const ScenarioSpec& s, std::vector<std::pair<double, double>> gaps,
                         StaticGeometry& g) {
  std::sort(gaps.begin(), gaps.end());
  const double t = s.wall_thickness;
  double x = -s.wall_extent;
  for (const auto& [center, width] : gaps) {
    const double left = center - width / 2 - t / 2;
    if (left > x) g.segments.push_back({{x, 0.0}, {left, 0.0}, t, SegmentTag::kWall});
    x = center + width / 2 + t / 2;
  }
  if (s.wall_extent > x) g.segments.push_back({{x, 0.0}, {s.wall_extent, 0.0}, t, SegmentTag::kWall});
}

}  // namespace detail

struct EpisodeStart {
  WorldState world;
  Landmarks landmarks;
};

inline EpisodeStart spawn(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  EpisodeStart out;
  WorldState& w = out.world;
  Landmarks& lm = out.landmarks;
  switch (spec.id) {
    case ScenarioId::kA: {
      for (int i = 0; i < spec.n_agents; ++i) {
        const double x = detail::uniform(rng, -spec.workspace_half_width, spec.workspace_half_width);
        w.agents.push_back(detail::make_agent(spec, i, {x, 0.0}));
        w.agents.back().collides = false;
      }
      break;
    }
    case ScenarioId::kB: {
      const double gx = spec.corridor_length / 2 - spec.goal_margin;
      lm.goals = {{gx, 0.0}, {-gx, 0.0}};
      for (int i = 0; i < 2; ++i) {
        const Vec2 jitter{detail::uniform(rng, -spec.spawn_jitter, spec.spawn_jitter),
                          detail::uniform(rng, -spec.spawn_jitter, spec.spawn_jitter)};
        w.agents.push_back(detail::make_agent(spec, i, lm.goals[1 - i] + jitter));
      }
      detail::corridor_walls(spec, w.statics);
      break;
    }
    case ScenarioId::kPassageSizes: {
      const double cx = detail::uniform(rng, -spec.spawn_range, spec.spawn_range);
      const bool big_left = detail::uniform(rng, 0.0, 1.0) < 0.5;
      const double half = spec.gap_spacing / 2;
      const Vec2 big{big_left ? cx - half : cx + half, 0.0};
      const Vec2 small{big_left ? cx + half : cx - half, 0.0};
      lm.gap_centers = {big, small};
      detail::passage_wall(spec, {{big.x, spec.gap_width_big}, {small.x, spec.gap_width_small}},
                           w.statics);
      const double tx = detail::uniform(rng, -spec.spawn_range, spec.spawn_range);
      const bool zero_low = detail::uniform(rng, 0.0, 1.0) < 0.5;
      const double lo = -spec.spawn_offset - spec.link_length / 2;
      const double hi = -spec.spawn_offset + spec.link_length / 2;
      w.agents.push_back(detail::make_agent(spec, 0, {tx, zero_low ? lo : hi}));
      w.agents.push_back(detail::make_agent(spec, 1, {tx, zero_low ? hi : lo}));
      w.links.push_back({0, 1, spec.link_length, 0.0, 0.5});
      lm.goal_center = {detail::uniform(rng, -spec.spawn_range, spec.spawn_range), spec.spawn_offset};
      lm.goal_angle = 0.0;
      break;
    }
    case ScenarioId::kPassageAsym: {
      const double gx = detail::uniform(rng, -spec.spawn_range, spec.spawn_range);
      lm.gap_centers = {{gx, 0.0}};
      detail::passage_wall(spec, {{gx, spec.gap_width}}, w.statics);
      const Vec2 c{detail::uniform(rng, -spec.spawn_range, spec.spawn_range), -spec.spawn_offset};
      // Keep the bar clear of the wall whatever its rotation.
      const double angle = detail::uniform(rng, 0.0, 2.0 * kPi);
      const Vec2 u{std::cos(angle), std::sin(angle)};
      const double h = spec.link_length / 2;
      w.agents.push_back(detail::make_agent(spec, 0, c - u * h));
      w.agents.push_back(detail::make_agent(spec, 1, c + u * h));
      w.links.push_back({0, 1, spec.link_length, spec.link_point_mass, spec.link_point_mass_offset});
      lm.goal_center = {detail::uniform(rng, -spec.spawn_range, spec.spawn_range), spec.spawn_offset};
      lm.goal_angle = detail::uniform(rng, 0.0, kPi);
      break;
    }
  }
  return out;
}

// --- episode driver ----------------------------------------------------------

// Force actually applied for one agent's action: components clamped to
// +/- max_force, then the vector clamped to max_force.
inline Vec2 applied_force(const ScenarioSpec& spec, std::span<const double> action) {
  if (action.empty() || action.size() > 2) throw ShapeError("applied_force: action must have 1 or 2 entries");
  const double fx = std::clamp(action[0], -spec.max_force, spec.max_force);
  const double fy = action.size() > 1 ? std::clamp(action[1], -spec.max_force, spec.max_force) : 0.0;
  return clamp_norm(Vec2{fx, fy}, spec.max_force);
}

struct StepInfo {
  bool success = false;
  int collisions = 0;
  std::vector<double> distance_to_goal;
  // Scenario B positional reward component of this step.
  double positional = 0.0;
};

struct StepResult {
  std::vector<Observation> observations;
  std::vector<double> rewards;
  bool done = false;
  // True when the episode ended on a terminal state rather than a time limit
  // that should be bootstrapped.
  bool terminal = false;
  StepInfo info;
};

class Env {
 public:
  Env(ScenarioSpec spec, TypingMode typing) : spec_(std::move(spec)), typing_(typing) {
    spec_.validate();
    layout_ = observation_layout(spec_.id, typing_);
  }

  std::vector<Observation> reset(std::uint64_t seed) {
    EpisodeStart s = spawn(spec_, seed);
    world_ = std::move(s.world);
    landmarks_ = std::move(s.landmarks);
    done_ = spec_.horizon == 0;
    success_ = false;
    crossed_ = spec_.id == ScenarioId::kPassageSizes || spec_.id == ScenarioId::kPassageAsym
                   ? passage_crossed(world_, landmarks_)
                   : false;
    initial_distance_ = total_goal_distance();
    return observations();
  }

  StepResult step(std::span<const double> actions) {
    if (done_) throw StateError("step: episode is done; call reset");
    const int n = spec_.n_agents;
    const int ad = action_dim(spec_.id);
    if (static_cast<int>(actions.size()) != n * ad) throw ShapeError("step: wrong action size");
    std::vector<Vec2> forces(n);
    for (int i = 0; i < n; ++i) forces[i] = applied_force(spec_, actions.subspan(i * ad, ad));
    const WorldState prev = world_;
    world_ = step_world(prev, forces, spec_.physics);

    StepResult r;
    switch (spec_.id) {
      case ScenarioId::kA:
        r.rewards = reward_scenario_a(prev, forces, world_, spec_.energy_coeff);
        break;
      case ScenarioId::kB: {
        const RewardBTerms t =
            reward_terms_b(prev, world_, landmarks_, curriculum_on_, reward_b_params());
        r.rewards.assign(n, t.total());
        r.info.positional = t.positional;
        break;
      }
      case ScenarioId::kPassageSizes:
      case ScenarioId::kPassageAsym:
        r.rewards = reward_passage(prev, world_, landmarks_, spec_);
        if (passage_crossed(world_, landmarks_)) crossed_ = true;
        if (crossed_ && passage_at_goal(world_, landmarks_, spec_)) {
          success_ = true;
          r.terminal = true;
        }
        break;
    }
    r.info.collisions = static_cast<int>(find_contacts(world_).size());
    r.info.distance_to_goal = goal_distances();
    const bool time_up = world_.time >= spec_.horizon;
    r.done = time_up || r.terminal;
    if (spec_.id == ScenarioId::kB && r.done) {
      success_ = all_on_goal(world_, landmarks_, spec_.goal_radius);
      // The fixed-length episode is the task definition, not a truncation.
      r.terminal = true;
    }
    r.info.success = success_;
    done_ = r.done;
    r.observations = observations();
    return r;
  }

  bool success() const { return success_; }
  bool done() const { return done_; }
  void set_curriculum(bool on) { curriculum_on_ = on; }
  bool curriculum() const { return curriculum_on_; }
  const WorldState& world() const { return world_; }
  const Landmarks& landmarks() const { return landmarks_; }
  const ScenarioSpec& spec() const { return spec_; }
  TypingMode typing() const { return typing_; }
  const ObsLayout& layout() const { return layout_; }
  int action_size() const { return action_dim(spec_.id); }
  CommGraph graph() const { return comm_graph(world_, spec_.comm_range); }

  std::vector<Observation> observations() const {
    std::vector<Observation> obs;
    for (int i = 0; i < spec_.n_agents; ++i)
      obs.push_back(observe(world_, spec_, landmarks_, i, typing_));
    return obs;
  }

  // Largest positional return achievable in the current episode.
  double max_positional_return() const { return spec_.positional_scale * initial_distance_; }

  // Negative summed goal distance scaled by its initial value; 0 when done.
  double task_completion() const {
    return initial_distance_ > 0.0 ? -total_goal_distance() / initial_distance_ : 0.0;
  }

 private:
  RewardBParams reward_b_params() const {
    return {spec_.positional_scale, spec_.final_reward, spec_.collision_penalty, spec_.goal_radius};
  }

  std::vector<double> goal_distances() const {
    std::vector<double> d(spec_.n_agents, 0.0);
    if (spec_.id == ScenarioId::kB) {
      for (int i = 0; i < spec_.n_agents; ++i)
        d[i] = (world_.agents[i].position - landmarks_.goals[i]).norm();
    } else if (spec_.id != ScenarioId::kA) {
      for (int i = 0; i < spec_.n_agents; ++i)
        d[i] = (world_.agents[i].position - landmarks_.goal_center).norm();
    }
    return d;
  }

  double total_goal_distance() const {
    double s = 0.0;
    for (double d : goal_distances()) s += d;
    return s;
  }

  ScenarioSpec spec_;
  TypingMode typing_;
  ObsLayout layout_;
  WorldState world_;
  Landmarks landmarks_;
  bool done_ = true;
  bool success_ = false;
  bool crossed_ = false;
  bool curriculum_on_ = false;
  double initial_distance_ = 0.0;
};

}  // namespace hetmarl
