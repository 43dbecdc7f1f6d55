#pragma once

// Deployment-time evaluation: observation noise, batched evaluation runs,
// normalised noise sweeps, Scenario A vector fields and rollout traces,
// plus their CSV / JSONL emitters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetmarl/checkpoint.hpp"
#include "hetmarl/core.hpp"
#include "hetmarl/envs.hpp"
#include "hetmarl/nn.hpp"
#include "hetmarl/training.hpp"

namespace hetmarl {

// A loaded policy together with the scenario it was trained on.
struct Policy {
  ScenarioSpec spec;
  TypingMode typing = TypingMode::kNone;
  GnnModel<float> model;

  explicit Policy(const Checkpoint& ck) : spec(ck.scenario), typing(ck.typing), model(ck.model) {
    import_params(model, ck.sets);
  }
  template <typename T>
  Policy(ScenarioSpec s, TypingMode t, const GnnModel<T>& m)
      : spec(std::move(s)), typing(t), model(m.config()) {
    import_params(model, export_params(m));
  }
  SharingMode sharing() const { return model.config().sharing; }
};

inline Observation inject_noise(const Observation& obs, double magnitude, std::mt19937_64& rng) {
  if (!(magnitude >= 0.0)) throw ConfigError("inject_noise: magnitude must be >= 0");
  if (magnitude == 0.0) return obs;
  std::uniform_real_distribution<double> u(-magnitude, magnitude);
  Observation out = obs;
  for (double& v : out) v += u(rng);
  return out;
}

struct EvalOptions {
  bool sample_actions = false;  // deployment uses the distribution mean
};

struct EvalSummary {
  int n_runs = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double success_rate = 0.0;
  double mean_length = 0.0;
  std::vector<double> rewards;          // per run
  std::vector<double> mean_abs_force;   // per agent, averaged over all steps
};

struct StepRecord {
  std::int64_t t = 0;
  WorldState world;
  std::vector<Observation> clean_obs;
  std::vector<Observation> noisy_obs;
  std::vector<std::vector<double>> actions;  // empty for the initial record
  std::vector<double> rewards;
  double task_completion = 0.0;
  bool done = false;
  bool success = false;
};

struct EpisodeOutcome {
  double reward = 0.0;
  bool success = false;
  int length = 0;
  std::vector<double> force_sum;  // summed |applied force| per agent
};

inline void check_compatible(const Policy& p, const ScenarioSpec& spec) {
  if (p.spec.id != spec.id)
    throw ConfigError("checkpoint trained on scenario " + to_string(p.spec.id) + " cannot run " +
                      to_string(spec.id));
  if (p.model.config().obs.dim != observation_layout(spec.id, p.typing).dim ||
      p.model.config().n_agents != spec.n_agents)
    throw ConfigError("checkpoint model does not match the scenario layout");
}

namespace detail {

inline std::mt19937_64 run_stream(std::uint64_t seed, std::uint64_t run) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(run >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

}  // namespace detail

// One deployment episode: env seeded with `env_seed`, noise and action
// sampling from `rng`. `on_step` sees every record including the initial one.
inline EpisodeOutcome run_episode(const Policy& p, const ScenarioSpec& spec, std::uint64_t env_seed,
                                  double noise, std::mt19937_64& rng, const EvalOptions& opts,
                                  const std::function<void(const StepRecord&)>& on_step = {}) {
  Env env(spec, p.typing);
  std::vector<Observation> obs = env.reset(env_seed);
  const int n = spec.n_agents;
  const int ad = env.action_size();
  EpisodeOutcome out;
  out.force_sum.assign(n, 0.0);
  if (on_step) {
    StepRecord r;
    r.t = env.world().time;
    r.world = env.world();
    r.clean_obs = obs;
    r.noisy_obs = obs;
    r.task_completion = env.task_completion();
    r.done = env.done();
    on_step(r);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> flat(static_cast<std::size_t>(n) * ad);
  while (!env.done()) {
    std::vector<Observation> noisy(n);
    for (int i = 0; i < n; ++i) noisy[i] = inject_noise(obs[i], noise, rng);
    const TeamOutput<float> pv = p.model.forward(make_team_input<float>(noisy, env.graph()));
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < ad; ++k) {
        double a = pv.mean[i](k, 0);
        if (opts.sample_actions) a += std::exp(static_cast<double>(pv.log_std[i][k])) * normal(rng);
        flat[static_cast<std::size_t>(i) * ad + k] = a;
      }
      out.force_sum[i] += applied_force(spec, std::span<const double>(flat).subspan(i * ad, ad)).norm();
    }
    const StepResult res = env.step(flat);
    out.reward += res.rewards[0];
    out.length += 1;
    out.success = res.info.success;
    if (on_step) {
      StepRecord r;
      r.t = env.world().time;
      r.world = env.world();
      r.clean_obs = obs;
      r.noisy_obs = noisy;
      for (int i = 0; i < n; ++i)
        r.actions.emplace_back(flat.begin() + i * ad, flat.begin() + (i + 1) * ad);
      r.rewards = res.rewards;
      r.task_completion = env.task_completion();
      r.done = res.done;
      r.success = res.info.success;
      on_step(r);
    }
    obs = res.observations;
  }
  return out;
}

// Run r uses env seed `seed + r` and its own noise stream.
inline EvalSummary evaluate(const Policy& p, const ScenarioSpec& spec, int n_runs, double noise,
                            std::uint64_t seed, const EvalOptions& opts = {}) {
  check_compatible(p, spec);
  spec.validate();
  if (n_runs < 0) throw ConfigError("evaluate: n_runs must be >= 0");
  if (!(noise >= 0.0)) throw ConfigError("evaluate: noise must be >= 0");
  EvalSummary s;
  s.n_runs = n_runs;
  s.mean_abs_force.assign(spec.n_agents, 0.0);
  if (n_runs == 0) return s;
  double steps = 0.0;
  int wins = 0;
  for (int r = 0; r < n_runs; ++r) {
    std::mt19937_64 rng = detail::run_stream(seed, r);
    const EpisodeOutcome o = run_episode(p, spec, seed + r, noise, rng, opts);
    s.rewards.push_back(o.reward);
    wins += o.success ? 1 : 0;
    steps += o.length;
    for (int i = 0; i < spec.n_agents; ++i) s.mean_abs_force[i] += o.force_sum[i];
  }
  double sum = 0.0;
  for (double v : s.rewards) sum += v;
  s.mean_reward = sum / n_runs;
  double var = 0.0;
  for (double v : s.rewards) var += (v - s.mean_reward) * (v - s.mean_reward);
  s.std_reward = std::sqrt(var / n_runs);
  s.success_rate = static_cast<double>(wins) / n_runs;
  s.mean_length = steps / n_runs;
  for (double& f : s.mean_abs_force) f = steps > 0 ? f / steps : 0.0;
  return s;
}

struct NoiseSweepResult {
  std::vector<double> levels;
  std::vector<double> mean;      // normalised
  std::vector<double> std;       // normalised
  std::vector<double> raw_mean;
  std::vector<double> raw_std;
  double anchor = 1.0;
};

inline void check_levels(const std::vector<double>& levels) {
  if (levels.empty()) throw ConfigError("noise_sweep: need at least one level");
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (!(levels[k] >= 0.0)) throw ConfigError("noise_sweep: levels must be >= 0");
    if (k > 0 && !(levels[k] > levels[k - 1]))
      throw ConfigError("noise_sweep: levels must be strictly increasing");
  }
}

// Normalised value = clamp(raw / anchor, 0, 1), std scaled by the same anchor.
inline void normalize_sweep(NoiseSweepResult& r, double anchor) {
  if (!(anchor > 0.0) || !std::isfinite(anchor))
    throw NumericError("noise_sweep: normalisation anchor must be a positive reward");
  r.anchor = anchor;
  r.mean.resize(r.raw_mean.size());
  r.std.resize(r.raw_std.size());
  for (std::size_t k = 0; k < r.raw_mean.size(); ++k) {
    r.mean[k] = std::clamp(r.raw_mean[k] / anchor, 0.0, 1.0);
    r.std[k] = r.raw_std[k] / anchor;
  }
}

// Evaluates every policy at every level. The anchor is the level-0 raw mean
// of policies[anchor_index], or of the best policy at the first level when
// anchor_index < 0.
inline std::vector<NoiseSweepResult> noise_sweep(const std::vector<const Policy*>& policies,
                                                 const ScenarioSpec& spec,
                                                 const std::vector<double>& levels, int n_runs,
                                                 std::uint64_t seed, int anchor_index = -1,
                                                 const EvalOptions& opts = {}) {
  check_levels(levels);
  if (policies.empty()) throw ConfigError("noise_sweep: no policies");
  if (n_runs < 1) throw ConfigError("noise_sweep: n_runs must be >= 1");
  std::vector<NoiseSweepResult> out(policies.size());
  for (std::size_t m = 0; m < policies.size(); ++m) {
    out[m].levels = levels;
    for (double lv : levels) {
      const EvalSummary s = evaluate(*policies[m], spec, n_runs, lv, seed, opts);
      out[m].raw_mean.push_back(s.mean_reward);
      out[m].raw_std.push_back(s.std_reward);
    }
  }
  std::size_t a = 0;
  if (anchor_index >= 0) {
    if (anchor_index >= static_cast<int>(policies.size())) throw ConfigError("noise_sweep: bad anchor index");
    a = static_cast<std::size_t>(anchor_index);
  } else {
    for (std::size_t m = 1; m < out.size(); ++m)
      if (out[m].raw_mean[0] > out[a].raw_mean[0]) a = m;
  }
  const double anchor = out[a].raw_mean[0];
  for (auto& r : out) normalize_sweep(r, anchor);
  return out;
}

// Parses "a:b:n" into n evenly spaced values from a to b inclusive.
inline std::vector<double> parse_levels(const std::string& text) {
  const auto c1 = text.find(':');
  const auto c2 = c1 == std::string::npos ? std::string::npos : text.find(':', c1 + 1);
  if (c2 == std::string::npos) throw ConfigError("levels: expected a:b:n, got '" + text + "'");
  double a = 0, b = 0;
  long n = 0;
  try {
    std::size_t used = 0;
    a = std::stod(text.substr(0, c1), &used);
    if (used != c1) throw std::invalid_argument("a");
    const std::string bs = text.substr(c1 + 1, c2 - c1 - 1);
    b = std::stod(bs, &used);
    if (used != bs.size()) throw std::invalid_argument("b");
    const std::string ns = text.substr(c2 + 1);
    n = std::stol(ns, &used);
    if (used != ns.size()) throw std::invalid_argument("n");
  } catch (const std::exception&) {
    throw ConfigError("levels: cannot parse '" + text + "' as a:b:n");
  }
  if (n < 1) throw ConfigError("levels: n must be >= 1");
  if (n > 1 && !(b > a)) throw ConfigError("levels: need b > a when n > 1");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) v[k] = n == 1 ? a : a + (b - a) * static_cast<double>(k) / (n - 1);
  return v;
}

struct VectorFieldCell {
  double v1 = 0.0, v2 = 0.0, f1 = 0.0, f2 = 0.0;
};

struct VectorFieldTable {
  int resolution = 0;
  std::vector<VectorFieldCell> cells;  // row-major, v1 outer, v2 inner
  const VectorFieldCell& at(int a, int b) const { return cells[static_cast<std::size_t>(a) * resolution + b]; }
};

inline double grid_value(double lo, double hi, int res, int k) {
  return res == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(k) / (res - 1);
}

// Mean actions of both Scenario A agents with positions pinned at 0.
inline VectorFieldTable vector_field(const Policy& p, double vmin, double vmax, int resolution) {
  if (p.spec.id != ScenarioId::kA) throw ConfigError("vector_field: needs a Scenario A checkpoint");
  if (resolution < 1) throw ConfigError("vector_field: resolution must be >= 1");
  if (!(vmax >= vmin)) throw ConfigError("vector_field: need v_max >= v_min");
  const int n = p.spec.n_agents;
  const int cells = resolution * resolution;
  TeamInput<float> in;
  in.batch = cells;
  in.obs.assign(n, Matrix<float>::Zero(p.model.config().obs.dim, cells));
  in.adj.assign(static_cast<std::size_t>(cells) * n * n, 0);
  WorldState w;
  for (int i = 0; i < n; ++i) w.agents.push_back(AgentBody{});
  const CommGraph g = comm_graph(w, p.spec.comm_range);
  VectorFieldTable t;
  t.resolution = resolution;
  for (int a = 0; a < resolution; ++a) {
    for (int b = 0; b < resolution; ++b) {
      const int c = a * resolution + b;
      const double v[2] = {grid_value(vmin, vmax, resolution, a), grid_value(vmin, vmax, resolution, b)};
      for (int i = 0; i < n; ++i) {
        WorldState wi = w;
        wi.agents[i].velocity = {v[i], 0.0};
        const Observation o = observe(wi, p.spec, {}, i, p.typing);
        for (std::size_t k = 0; k < o.size(); ++k) in.obs[i](static_cast<Eigen::Index>(k), c) = float(o[k]);
        for (int j : g.neighbors[i]) in.adj[(static_cast<std::size_t>(c) * n + i) * n + j] = 1;
      }
      t.cells.push_back({v[0], v[1], 0.0, 0.0});
    }
  }
  const TeamOutput<float> out = p.model.forward(in);
  for (int c = 0; c < cells; ++c) {
    t.cells[c].f1 = out.mean[0](0, c);
    t.cells[c].f2 = out.mean[1](0, c);
  }
  return t;
}

// Largest deviation from (v1, v2, f1, f2) -> (v2, v1, f2, f1) symmetry.
inline double swap_asymmetry(const VectorFieldTable& t) {
  double worst = 0.0;
  for (int a = 0; a < t.resolution; ++a)
    for (int b = 0; b < t.resolution; ++b) {
      const auto& x = t.at(a, b);
      const auto& y = t.at(b, a);
      worst = std::max({worst, std::abs(x.f1 - y.f2), std::abs(x.f2 - y.f1)});
    }
  return worst;
}

struct RolloutTrace {
  std::vector<StepRecord> steps;
  bool success = false;
};

inline RolloutTrace rollout_trace(const Policy& p, const ScenarioSpec& spec, std::uint64_t seed,
                                  double noise, const EvalOptions& opts = {}) {
  check_compatible(p, spec);
  RolloutTrace tr;
  std::mt19937_64 rng = detail::run_stream(seed, 0);
  const EpisodeOutcome o =
      run_episode(p, spec, seed, noise, rng, opts, [&](const StepRecord& r) { tr.steps.push_back(r); });
  tr.success = o.success;
  return tr;
}

// --- emitters ----------------------------------------------------------------

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace detail

inline void write_sweep_csv(const std::filesystem::path& path, const NoiseSweepResult& r) {
  std::ofstream os = detail::open_output(path);
  os << "noise,mean,std\n";
  for (std::size_t k = 0; k < r.levels.size(); ++k)
    os << detail::fmt(r.levels[k]) << "," << detail::fmt(r.mean[k]) << "," << detail::fmt(r.std[k]) << "\n";
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline void write_vector_field_csv(const std::filesystem::path& path, const VectorFieldTable& t) {
  std::ofstream os = detail::open_output(path);
  os << "v1,v2,f1,f2\n";
  for (const auto& c : t.cells)
    os << detail::fmt(c.v1) << "," << detail::fmt(c.v2) << "," << detail::fmt(c.f1) << "," << detail::fmt(c.f2)
       << "\n";
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline nlohmann::json trace_record_json(const StepRecord& r) {
  nlohmann::json j;
  j["t"] = r.t;
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : r.world.agents)
    agents.push_back({{"p", {a.position.x, a.position.y}}, {"v", {a.velocity.x, a.velocity.y}}});
  j["agents"] = agents;
  j["obs"] = r.clean_obs;
  j["obs_noisy"] = r.noisy_obs;
  j["actions"] = r.actions;
  j["rewards"] = r.rewards;
  j["task_completion"] = r.task_completion;
  j["done"] = r.done;
  j["success"] = r.success;
  return j;
}

inline void write_trace_jsonl(const std::filesystem::path& path, const RolloutTrace& tr) {
  std::ofstream os = detail::open_output(path);
  for (const auto& r : tr.steps) os << trace_record_json(r).dump() << "\n";
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace hetmarl
