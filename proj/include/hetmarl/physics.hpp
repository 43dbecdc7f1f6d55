#pragma once

// Deterministic 2D dynamics for circular agents: clamped actuation, linear
// friction, drag, penalty-spring contacts and distance-constrained links.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hetmarl/core.hpp"

namespace hetmarl {

struct AgentBody {
  Vec2 position;
  Vec2 velocity;
  double mass = 1.0;
  double radius = 0.1;
  double max_force = 1.0;
  double max_speed = kInf;
  int shape_tag = 0;
  bool collides = true;
};

enum class SegmentTag : std::uint8_t { kWall = 0, kRecess = 1 };

struct Segment {
  Vec2 a;
  Vec2 b;
  double thickness = 0.02;
  SegmentTag tag = SegmentTag::kWall;
};

struct StaticGeometry {
  std::vector<Segment> segments;
};

struct RigidLink {
  int agent_a = 0;
  int agent_b = 1;
  double rest_length = 0.5;
  double point_mass = 0.0;
  // Position of the point mass along a -> b, in [0, 1].
  double point_mass_offset = 0.5;
};

struct WorldState {
  std::vector<AgentBody> agents;
  StaticGeometry statics;
  std::vector<RigidLink> links;
  std::int64_t time = 0;

  bool operator==(const WorldState& o) const;
};

struct PhysicsParams {
  double dt = 0.1;
  // Deceleration magnitude (m/s^2) opposing motion, i.e. a constant force of
  // linear_friction * mass.
  double linear_friction = 0.25;
  double drag = 0.0;
  double collision_stiffness = 100.0;
  double max_acceleration = 10.0;

  bool operator==(const PhysicsParams&) const = default;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("physics: dt must be > 0");
    if (!(linear_friction >= 0.0)) throw ConfigError("physics: linear_friction must be >= 0");
    if (!(drag >= 0.0)) throw ConfigError("physics: drag must be >= 0");
    if (!(collision_stiffness > 0.0)) throw ConfigError("physics: collision_stiffness must be > 0");
    if (!(max_acceleration > 0.0)) throw ConfigError("physics: max_acceleration must be > 0");
  }
};

inline bool operator==(const AgentBody& a, const AgentBody& b) {
  return a.position == b.position && a.velocity == b.velocity && a.mass == b.mass &&
         a.radius == b.radius && a.max_force == b.max_force && a.max_speed == b.max_speed &&
         a.shape_tag == b.shape_tag && a.collides == b.collides;
}
inline bool operator==(const Segment& a, const Segment& b) {
  return a.a == b.a && a.b == b.b && a.thickness == b.thickness && a.tag == b.tag;
}
inline bool operator==(const RigidLink& a, const RigidLink& b) {
  return a.agent_a == b.agent_a && a.agent_b == b.agent_b && a.rest_length == b.rest_length &&
         a.point_mass == b.point_mass && a.point_mass_offset == b.point_mass_offset;
}
inline bool WorldState::operator==(const WorldState& o) const {
  return agents == o.agents && statics.segments == o.statics.segments && links == o.links &&
         time == o.time;
}

enum class ContactKind : std::uint8_t { kAgentAgent, kAgentSegment };

struct Contact {
  ContactKind kind;
  int agent = 0;
  // Other agent index or segment index depending on kind.
  int other = 0;
  double depth = 0.0;
  // Unit normal pushing `agent` out of the contact.
  Vec2 normal;
  SegmentTag segment_tag = SegmentTag::kWall;
};

namespace detail {

inline bool linked(const WorldState& w, int i, int j) {
  for (const auto& l : w.links) {
    if ((l.agent_a == i && l.agent_b == j) || (l.agent_a == j && l.agent_b == i)) return true;
  }
  return false;
}

inline Vec2 closest_point_on_segment(Vec2 p, const Segment& s) {
  const Vec2 ab = s.b - s.a;
  const double len2 = ab.squared_norm();
  double t = len2 > 0.0 ? (p - s.a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return s.a + ab * t;
}

}  // namespace detail

inline void validate_world(const WorldState& w) {
  for (const auto& a : w.agents) {
    if (!a.position.finite() || !a.velocity.finite())
      throw NumericError("world: non-finite agent state");
    if (!(a.mass > 0.0) || !(a.radius > 0.0) || !(a.max_force > 0.0))
      throw ConfigError("world: agent mass, radius and max_force must be > 0");
  }
  for (const auto& s : w.statics.segments) {
    if (!(s.thickness > 0.0)) throw ConfigError("world: segment thickness must be > 0");
    if (s.a == s.b) throw ConfigError("world: segment endpoints must be distinct");
  }
  const int n = static_cast<int>(w.agents.size());
  for (const auto& l : w.links) {
    if (l.agent_a < 0 || l.agent_a >= n || l.agent_b < 0 || l.agent_b >= n)
      throw ConfigError("world: link references unknown agent");
    if (l.agent_a == l.agent_b) throw ConfigError("world: link endpoints must differ");
    if (!(l.rest_length > 0.0) || !(l.point_mass >= 0.0))
      throw ConfigError("world: link rest_length must be > 0 and point_mass >= 0");
    if (l.point_mass_offset < 0.0 || l.point_mass_offset > 1.0)
      throw ConfigError("world: link point_mass_offset must lie in [0, 1]");
  }
}

// All penetrating agent-agent and agent-segment pairs. Linked agents never
// collide with each other.
inline std::vector<Contact> find_contacts(const WorldState& w) {
  std::vector<Contact> out;
  const int n = static_cast<int>(w.agents.size());
  for (int i = 0; i < n; ++i) {
    const auto& ai = w.agents[i];
    if (!ai.collides) continue;
    for (int j = i + 1; j < n; ++j) {
      const auto& aj = w.agents[j];
      if (!aj.collides || detail::linked(w, i, j)) continue;
      const Vec2 d = ai.position - aj.position;
      const double dist = d.norm();
      const double depth = ai.radius + aj.radius - dist;
      if (depth <= 0.0) continue;
      const Vec2 normal = dist > 0.0 ? d / dist : Vec2{1.0, 0.0};
      out.push_back({ContactKind::kAgentAgent, i, j, depth, normal, SegmentTag::kWall});
    }
    for (int s = 0; s < static_cast<int>(w.statics.segments.size()); ++s) {
      const Segment& seg = w.statics.segments[s];
      const Vec2 c = detail::closest_point_on_segment(ai.position, seg);
      const Vec2 d = ai.position - c;
      const double dist = d.norm();
      const double depth = ai.radius + 0.5 * seg.thickness - dist;
      if (depth <= 0.0) continue;
      Vec2 normal;
      if (dist > 0.0) {
        normal = d / dist;
      } else {
        const Vec2 ab = seg.b - seg.a;
        normal = Vec2{-ab.y, ab.x} / ab.norm();
      }
      out.push_back({ContactKind::kAgentSegment, i, s, depth, normal, seg.tag});
    }
  }
  return out;
}

inline std::vector<Vec2> collision_forces(const WorldState& w, double stiffness) {
  std::vector<Vec2> f(w.agents.size());
  for (const Contact& c : find_contacts(w)) {
    const Vec2 push = c.normal * (stiffness * c.depth);
    f[c.agent] += push;
    if (c.kind == ContactKind::kAgentAgent) f[c.other] -= push;
  }
  return f;
}

// Mass of each agent including its share of any link point mass; the share
// is split linearly by the point mass position along the link.
inline std::vector<double> effective_masses(const WorldState& w) {
  std::vector<double> m(w.agents.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = w.agents[i].mass;
  for (const auto& l : w.links) {
    m[l.agent_a] += l.point_mass * (1.0 - l.point_mass_offset);
    m[l.agent_b] += l.point_mass * l.point_mass_offset;
  }
  return m;
}

// Projects positions onto the link length constraints and removes relative
// velocity along each link axis. Corrections are weighted by inverse
// effective mass so the constraint impulse conserves momentum.
inline WorldState solve_links(WorldState w) {
  if (w.links.empty()) return w;
  const std::vector<double> m = effective_masses(w);
  constexpr int kMaxPasses = 32;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    double worst = 0.0;
    for (const auto& l : w.links) {
      AgentBody& a = w.agents[l.agent_a];
      AgentBody& b = w.agents[l.agent_b];
      const Vec2 d = b.position - a.position;
      const double len = d.norm();
      if (!(len > 0.0)) throw NumericError("solve_links: coincident link endpoints");
      const Vec2 n = d / len;
      const double wa = 1.0 / m[l.agent_a];
      const double wb = 1.0 / m[l.agent_b];
      const double share_a = wa / (wa + wb);
      const double share_b = wb / (wa + wb);
      const double err = len - l.rest_length;
      worst = std::max(worst, std::abs(err));
      if (err != 0.0) {
        a.position += n * (share_a * err);
        b.position -= n * (share_b * err);
      }
      const double rel = (b.velocity - a.velocity).dot(n);
      if (rel != 0.0) {
        a.velocity += n * (share_a * rel);
        b.velocity -= n * (share_b * rel);
      }
    }
    if (w.links.size() == 1 || worst <= 1e-12) break;
  }
  return w;
}

inline WorldState step_world(const WorldState& world, std::span<const Vec2> forces,
                             const PhysicsParams& params) {
  if (forces.size() != world.agents.size())
    throw ShapeError("step_world: expected one force per agent");
  for (const Vec2& f : forces) {
    if (!f.finite()) throw NumericError("step_world: non-finite force");
  }
  validate_world(world);

  WorldState next = world;
  const std::vector<Vec2> contact = collision_forces(world, params.collision_stiffness);
  const std::vector<double> mass = effective_masses(world);
  const double dt = params.dt;
  for (std::size_t i = 0; i < next.agents.size(); ++i) {
    AgentBody& a = next.agents[i];
    const Vec2 applied = clamp_norm(forces[i], a.max_force);
    const Vec2 total = applied + contact[i] - a.velocity * params.drag;
    const Vec2 acc = clamp_norm(total / mass[i], params.max_acceleration);
    Vec2 v = a.velocity + acc * dt;
    // Friction removes at most the speed it would take to stop.
    const double speed = v.norm();
    const double loss = params.linear_friction * dt;
    if (speed <= loss) {
      v = Vec2{};
    } else if (loss > 0.0) {
      v = v * ((speed - loss) / speed);
    }
    if (std::isfinite(a.max_speed)) v = clamp_norm(v, a.max_speed);
    a.velocity = v;
    a.position += v * dt;
  }
  next = solve_links(std::move(next));
  for (const auto& a : next.agents) {
    if (!a.position.finite() || !a.velocity.finite())
      throw NumericError("step_world: integration produced non-finite state");
  }
  next.time = world.time + 1;
  return next;
}

inline double kinetic_energy(const WorldState& w) {
  double e = 0.0;
  for (const auto& a : w.agents) e += 0.5 * a.mass * a.velocity.squared_norm();
  return e;
}

}  // namespace hetmarl
