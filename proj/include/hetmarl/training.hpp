#pragma once

// Multi-agent PPO over the GNN actor-critic: rollout collection, returns and
// GAE, clipped surrogate plus adaptive KL penalty, Adam, and the outer loop
// that writes metrics and checkpoints.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hetmarl/checkpoint.hpp"
#include "hetmarl/core.hpp"
#include "hetmarl/envs.hpp"
#include "hetmarl/nn.hpp"

namespace hetmarl {

struct TrainConfig {
  std::string profile = "desk";
  int iterations = 100;
  int batch_size = 4096;  // team env-steps per iteration
  int minibatch_size = 512;
  int sgd_iters = 8;
  double lr = 3e-4;
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.9;
  double entropy_coeff = 0.0;
  double kl_coeff = 0.01;
  double kl_target = 0.01;
  double value_coeff = 0.5;
  double max_grad_norm = 0.5;
  int n_env_workers = 1;
  int envs_per_worker = 16;
  // When > 0, overrides batch_size with whole episodes per iteration.
  int episodes_per_iteration = 0;
  double obs_noise_train = 0.0;
  double curriculum_ema_alpha = 0.3;
  std::uint64_t seed = 0;
  SharingMode sharing = SharingMode::kPerAgent;
  TypingMode typing = TypingMode::kNone;
  int checkpoint_every = 10;

  static TrainConfig desk() { return {}; }

  static TrainConfig paper() {
    TrainConfig c;
    c.profile = "paper";
    c.batch_size = 60000;
    c.minibatch_size = 4096;
    c.sgd_iters = 40;
    c.lr = 5e-5;
    c.clip_epsilon = 0.2;
    c.gamma = 0.99;
    c.gae_lambda = 0.9;
    c.entropy_coeff = 0.0;
    c.kl_coeff = 0.01;
    c.kl_target = 0.01;
    c.n_env_workers = 5;
    c.envs_per_worker = 50;
    return c;
  }

  static TrainConfig for_profile(std::string_view name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw ConfigError("unknown profile '" + std::string(name) + "' (expected desk or paper)");
  }

  int num_envs() const { return n_env_workers * envs_per_worker; }

  void validate() const {
    if (iterations < 0) throw ConfigError("train: iterations must be >= 0");
    if (batch_size < 1 || minibatch_size < 1) throw ConfigError("train: batch sizes must be >= 1");
    if (minibatch_size > batch_size) throw ConfigError("train: minibatch_size must be <= batch_size");
    if (sgd_iters < 1) throw ConfigError("train: sgd_iters must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (!(clip_epsilon > 0.0)) throw ConfigError("train: clip_epsilon must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train: gamma must lie in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("train: gae_lambda must lie in [0, 1]");
    if (entropy_coeff < 0.0 || kl_coeff < 0.0 || !(kl_target > 0.0) || value_coeff < 0.0)
      throw ConfigError("train: loss coefficients must be >= 0 and kl_target > 0");
    if (!(max_grad_norm > 0.0)) throw ConfigError("train: max_grad_norm must be > 0");
    if (n_env_workers < 1 || envs_per_worker < 1) throw ConfigError("train: need at least one env");
    if (episodes_per_iteration < 0) throw ConfigError("train: episodes_per_iteration must be >= 0");
    if (obs_noise_train < 0.0) throw ConfigError("train: obs_noise_train must be >= 0");
    if (!(curriculum_ema_alpha > 0.0 && curriculum_ema_alpha <= 1.0))
      throw ConfigError("train: curriculum_ema_alpha must lie in (0, 1]");
    if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  }

  // Steps each env takes per collection.
  int steps_per_env(int horizon) const {
    if (episodes_per_iteration > 0) {
      const int per_env = (episodes_per_iteration + num_envs() - 1) / num_envs();
      return std::max(1, horizon) * per_env;
    }
    return (batch_size + num_envs() - 1) / num_envs();
  }
};

// Worker thread budget: HETMARL_THREADS caps the hardware count.
inline int thread_budget() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("HETMARL_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return n;
}

// --- return math -------------------------------------------------------------

// v_t = sum_k gamma^k r_{t+k}, restarting after every done.
inline std::vector<double> discounted_returns(std::span<const double> rewards,
                                              std::span<const std::uint8_t> dones, double gamma) {
  if (rewards.size() != dones.size()) throw ShapeError("discounted_returns: length mismatch");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    if (dones[k]) acc = 0.0;
    acc = rewards[k] + gamma * acc;
    out[k] = acc;
  }
  return out;
}

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// next_values[t] is V(s_{t+1}) for non-terminal transitions and 0 at
// terminal ones; dones[t] stops the recursion so nothing leaks across
// episode boundaries.
inline Advantages gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const double> next_values, std::span<const std::uint8_t> dones,
                      double gamma, double lambda) {
  const std::size_t T = rewards.size();
  if (values.size() != T || next_values.size() != T || dones.size() != T)
    throw ShapeError("gae: length mismatch");
  Advantages out;
  out.advantages.resize(T);
  out.returns.resize(T);
  double acc = 0.0;
  for (std::size_t k = T; k-- > 0;) {
    const double delta = rewards[k] + gamma * next_values[k] - values[k];
    acc = delta + (dones[k] ? 0.0 : gamma * lambda * acc);
    out.advantages[k] = acc;
    out.returns[k] = acc + values[k];
  }
  return out;
}

// --- rollouts ----------------------------------------------------------------

struct EpisodeStats {
  double reward = 0.0;  // summed shared reward
  bool success = false;
  int length = 0;
  double positional = 0.0;
  double max_positional = 0.0;
};

// Team samples stored env-major: sample s = segment offset + e * steps + t.
template <typename T>
struct RolloutBatch {
  int n_agents = 0;
  int size = 0;
  int steps_per_env = 0;
  int num_envs = 0;
  std::vector<Matrix<T>> obs;      // per agent, obs_dim x size (policy input)
  std::vector<std::uint8_t> adj;   // size * n * n
  std::vector<Matrix<T>> actions;  // per agent, unclamped samples
  std::vector<Matrix<T>> old_mean;
  std::vector<Vector<T>> old_log_std;
  std::vector<std::vector<double>> logp, values, next_values, rewards, advantages, returns;
  std::vector<std::uint8_t> dones;      // episode boundary after this sample
  std::vector<std::uint8_t> terminals;  // true end of task (no bootstrap)
  std::vector<EpisodeStats> episodes;

  void resize(int n, int obs_dim, int act_dim, int count) {
    n_agents = n;
    size = count;
    obs.assign(n, Matrix<T>(obs_dim, count));
    actions.assign(n, Matrix<T>(act_dim, count));
    old_mean.assign(n, Matrix<T>(act_dim, count));
    old_log_std.assign(n, Vector<T>(act_dim));
    adj.assign(static_cast<std::size_t>(count) * n * n, 0);
    for (auto* v : {&logp, &values, &next_values, &rewards, &advantages, &returns})
      v->assign(n, std::vector<double>(count, 0.0));
    dones.assign(count, 0);
    terminals.assign(count, 0);
  }
};

template <typename T>
T gaussian_log_prob(const T* a, const T* mean, const T* log_std, int dim) {
  const T half_log_2pi = T(0.5 * std::log(2.0 * kPi));
  T lp = 0;
  for (int k = 0; k < dim; ++k) {
    const T z = (a[k] - mean[k]) * std::exp(-log_std[k]);
    lp += -T(0.5) * z * z - log_std[k] - half_log_2pi;
  }
  return lp;
}

namespace detail {

template <typename T>
void fill_team_column(TeamInput<T>& in, int col, const std::vector<Observation>& obs,
                      const CommGraph& g, double noise, std::mt19937_64& rng) {
  const int n = static_cast<int>(obs.size());
  std::uniform_real_distribution<double> u(-noise, noise);
  for (int i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < obs[i].size(); ++k) {
      const double v = noise > 0.0 ? obs[i][k] + u(rng) : obs[i][k];
      in.obs[i](static_cast<Eigen::Index>(k), col) = T(v);
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j : g.neighbors[i]) in.adj[(static_cast<std::size_t>(col) * n + i) * n + j] = 1;
}

template <typename T>
TeamInput<T> empty_input(int n, int obs_dim, int batch) {
  TeamInput<T> in;
  in.batch = batch;
  in.obs.assign(n, Matrix<T>(obs_dim, batch));
  in.adj.assign(static_cast<std::size_t>(batch) * n * n, 0);
  return in;
}

// One worker's share of a collection: `envs` run in lockstep for `steps`.
template <typename T>
void collect_segment(const GnnModel<T>& model, std::vector<Env>& envs, int steps, double noise,
                     bool curriculum, std::mt19937_64& rng, RolloutBatch<T>& out, int offset) {
  const int E = static_cast<int>(envs.size());
  const int n = model.config().n_agents;
  const int od = model.config().obs.dim;
  const int ad = model.config().action_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<Observation>> obs(E);
  std::vector<EpisodeStats> running(E);
  for (int e = 0; e < E; ++e) {
    envs[e].set_curriculum(curriculum);
    obs[e] = envs[e].reset(rng());
  }
  auto index = [&](int e, int t) { return offset + e * steps + t; };
  std::vector<double> flat(static_cast<std::size_t>(n) * ad);
  for (int t = 0; t < steps; ++t) {
    TeamInput<T> in = empty_input<T>(n, od, E);
    for (int e = 0; e < E; ++e) fill_team_column(in, e, obs[e], envs[e].graph(), noise, rng);
    const TeamOutput<T> pv = model.forward(in);
    std::vector<int> truncated;
    std::vector<std::vector<Observation>> final_obs;
    std::vector<CommGraph> final_graph;
    for (int e = 0; e < E; ++e) {
      const int s = index(e, t);
      for (int i = 0; i < n; ++i) {
        out.obs[i].col(s) = in.obs[i].col(e);
        const T* mu = pv.mean[i].col(e).data();
        const T* ls = pv.log_std[i].data();
        for (int k = 0; k < ad; ++k) {
          const T a = mu[k] + std::exp(ls[k]) * T(normal(rng));
          out.actions[i](k, s) = a;
          flat[static_cast<std::size_t>(i) * ad + k] = static_cast<double>(a);
        }
        out.old_mean[i].col(s) = pv.mean[i].col(e);
        out.logp[i][s] = static_cast<double>(gaussian_log_prob(out.actions[i].col(s).data(), mu, ls, ad));
        out.values[i][s] = static_cast<double>(pv.value[i](0, e));
        if (t > 0 && !out.dones[index(e, t - 1)]) out.next_values[i][index(e, t - 1)] = out.values[i][s];
      }
      for (int i = 0; i < n; ++i) out.old_log_std[i] = pv.log_std[i];
      std::copy(in.adj.begin() + static_cast<std::ptrdiff_t>(e) * n * n,
                in.adj.begin() + static_cast<std::ptrdiff_t>(e + 1) * n * n,
                out.adj.begin() + static_cast<std::ptrdiff_t>(s) * n * n);

      const StepResult r = envs[e].step(flat);
      for (int i = 0; i < n; ++i) out.rewards[i][s] = r.rewards[i];
      running[e].reward += r.rewards[0];
      running[e].positional += r.info.positional;
      running[e].length += 1;
      obs[e] = r.observations;
      if (r.done) {
        out.dones[s] = 1;
        out.terminals[s] = r.terminal ? 1 : 0;
        if (!r.terminal) {
          truncated.push_back(e);
          final_obs.push_back(r.observations);
          final_graph.push_back(envs[e].graph());
        }
        running[e].success = r.info.success;
        running[e].max_positional = envs[e].max_positional_return();
        out.episodes.push_back(running[e]);
        running[e] = {};
        obs[e] = envs[e].reset(rng());
      }
    }
    if (!truncated.empty()) {
      const int m = static_cast<int>(truncated.size());
      TeamInput<T> tin = empty_input<T>(n, od, m);
      for (int q = 0; q < m; ++q) fill_team_column(tin, q, final_obs[q], final_graph[q], noise, rng);
      const TeamOutput<T> tv = model.forward(tin);
      for (int q = 0; q < m; ++q)
        for (int i = 0; i < n; ++i)
          out.next_values[i][index(truncated[q], t)] = static_cast<double>(tv.value[i](0, q));
    }
  }
  // Cut-off tails bootstrap from the critic.
  TeamInput<T> tail = empty_input<T>(n, od, E);
  for (int e = 0; e < E; ++e) fill_team_column(tail, e, obs[e], envs[e].graph(), noise, rng);
  const TeamOutput<T> tv = model.forward(tail);
  for (int e = 0; e < E; ++e) {
    const int s = index(e, steps - 1);
    out.dones[s] = 1;
    if (out.terminals[s]) continue;
    if (running[e].length == 0) continue;  // already bootstrapped above
    for (int i = 0; i < n; ++i) out.next_values[i][s] = static_cast<double>(tv.value[i](0, e));
  }
}

}  // namespace detail

// Collects one batch with n_env_workers x envs_per_worker envs. Each worker
// draws its env seeds and noise from its own stream forked from `rng`, so
// the batch is identical for any thread count.
template <typename T>
RolloutBatch<T> collect_rollouts(const GnnModel<T>& model, const ScenarioSpec& spec,
                                 const TrainConfig& cfg, std::mt19937_64& rng,
                                 bool curriculum_on = false) {
  cfg.validate();
  const int W = cfg.n_env_workers;
  const int E = cfg.envs_per_worker;
  const int steps = cfg.steps_per_env(spec.horizon);
  const int n = model.config().n_agents;
  if (spec.horizon == 0) throw ConfigError("collect_rollouts: horizon must be > 0 for training");
  RolloutBatch<T> batch;
  batch.resize(n, model.config().obs.dim, model.config().action_dim, W * E * steps);
  batch.steps_per_env = steps;
  batch.num_envs = W * E;
  std::vector<std::uint64_t> worker_seeds(W);
  for (auto& s : worker_seeds) s = rng();
  std::vector<RolloutBatch<T>> shells(W);
  std::vector<std::exception_ptr> errors(W);
  auto run = [&](int w) {
    try {
      std::mt19937_64 wrng(worker_seeds[w]);
      std::vector<Env> envs;
      for (int e = 0; e < E; ++e) envs.emplace_back(spec, cfg.typing);
      RolloutBatch<T>& sh = shells[w];
      sh.resize(n, model.config().obs.dim, model.config().action_dim, E * steps);
      detail::collect_segment(model, envs, steps, cfg.obs_noise_train, curriculum_on, wrng, sh, 0);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  const int threads = std::min(W, thread_budget());
  if (threads <= 1) {
    for (int w = 0; w < W; ++w) run(w);
  } else {
    for (int start = 0; start < W; start += threads) {
      std::vector<std::thread> pool;
      for (int w = start; w < std::min(W, start + threads); ++w) pool.emplace_back(run, w);
      for (auto& th : pool) th.join();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  {
    const std::size_t nn = static_cast<std::size_t>(n) * n;
    for (int w = 0; w < W; ++w) {
      const RolloutBatch<T>& sh = shells[w];
      const int off = w * E * steps;
      for (int i = 0; i < n; ++i) {
        batch.obs[i].middleCols(off, sh.size) = sh.obs[i];
        batch.actions[i].middleCols(off, sh.size) = sh.actions[i];
        batch.old_mean[i].middleCols(off, sh.size) = sh.old_mean[i];
        batch.old_log_std[i] = sh.old_log_std[i];
        for (auto [dst, src] : {std::pair{&batch.logp, &sh.logp}, {&batch.values, &sh.values},
                                {&batch.next_values, &sh.next_values}, {&batch.rewards, &sh.rewards}})
          std::copy((*src)[i].begin(), (*src)[i].end(), (*dst)[i].begin() + off);
      }
      std::copy(sh.adj.begin(), sh.adj.end(), batch.adj.begin() + static_cast<std::ptrdiff_t>(off * nn));
      std::copy(sh.dones.begin(), sh.dones.end(), batch.dones.begin() + off);
      std::copy(sh.terminals.begin(), sh.terminals.end(), batch.terminals.begin() + off);
      batch.episodes.insert(batch.episodes.end(), sh.episodes.begin(), sh.episodes.end());
    }
  }
  return batch;
}

// Fills advantages and return targets per agent.
template <typename T>
void compute_advantages(RolloutBatch<T>& b, double gamma, double lambda) {
  for (int i = 0; i < b.n_agents; ++i) {
    const Advantages a = gae(b.rewards[i], b.values[i], b.next_values[i], b.dones, gamma, lambda);
    b.advantages[i] = a.advantages;
    b.returns[i] = a.returns;
  }
}

// Batch-level normalisation over every (sample, agent) advantage.
inline void normalize_advantages(std::vector<std::vector<double>>& adv) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& a : adv)
    for (double v : a) {
      sum += v;
      ++count;
    }
  if (count < 2) return;
  const double mean = sum / count;
  double var = 0.0;
  for (const auto& a : adv)
    for (double v : a) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / count);
  for (auto& a : adv)
    for (double& v : a) v = sd > 1e-12 ? (v - mean) / sd : v - mean;
}

// --- optimisation ------------------------------------------------------------

template <typename T>
struct Adam {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<ParamVector<T>> m, v;

  void step(std::vector<ParamVector<T>>& params, const std::vector<ParamVector<T>>& grads) {
    if (m.empty()) {
      m.assign(params.size(), {});
      v.assign(params.size(), {});
      for (std::size_t s = 0; s < params.size(); ++s) {
        m[s].assign(params[s].size(), T(0));
        v[s].assign(params[s].size(), T(0));
      }
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const T step = T(lr * std::sqrt(c2) / c1);
    const T b1 = T(beta1), b2 = T(beta2), e = T(eps * std::sqrt(c2));
    for (std::size_t s = 0; s < params.size(); ++s) {
      T* p = params[s].data();
      const T* g = grads[s].data();
      T* ms = m[s].data();
      T* vs = v[s].data();
      for (std::size_t k = 0; k < params[s].size(); ++k) {
        ms[k] = b1 * ms[k] + (T(1) - b1) * g[k];
        vs[k] = b2 * vs[k] + (T(1) - b2) * g[k] * g[k];
        p[k] -= step * ms[k] / (std::sqrt(vs[k]) + e);
      }
    }
  }
};

struct TrainMetrics {
  std::int64_t iteration = 0;
  int episodes = 0;
  double mean_episode_reward = 0.0;
  double success_rate = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_kl = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double wall_time_s = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "iteration,episodes,mean_episode_reward,success_rate,policy_loss,value_loss,mean_kl,entropy,"
    "grad_norm,wall_time_s";

inline std::string metrics_row(const TrainMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f",
                static_cast<long long>(m.iteration), m.episodes, m.mean_episode_reward,
                m.success_rate, m.policy_loss, m.value_loss, m.mean_kl, m.entropy, m.grad_norm,
                m.wall_time_s);
  return buf;
}

struct MinibatchLoss {
  double policy = 0.0;
  double value = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
};

// Loss and output gradients for one minibatch. Every (sample, agent) term is
// weighted 1 / (M * n).
template <typename T>
MinibatchLoss ppo_loss(const RolloutBatch<T>& b, std::span<const int> idx, const TeamOutput<T>& out,
                       const std::vector<std::vector<double>>& adv, const TrainConfig& cfg,
                       double kl_coeff, std::type_identity_t<TeamGrad<T>>* grad) {
  const int n = b.n_agents;
  const int M = static_cast<int>(idx.size());
  const int ad = static_cast<int>(out.log_std[0].size());
  const double w = 1.0 / (static_cast<double>(M) * n);
  const double half_log_2pi = 0.5 * std::log(2.0 * kPi);
  MinibatchLoss L;
  if (grad) {
    grad->mean.assign(n, Matrix<T>::Zero(ad, M));
    grad->value.assign(n, Matrix<T>::Zero(1, M));
    grad->log_std.assign(n, Vector<T>::Zero(ad));
  }
  for (int i = 0; i < n; ++i) {
    const Vector<T>& ls_new = out.log_std[i];
    const Vector<T>& ls_old = b.old_log_std[i];
    std::vector<double> dls(ad, 0.0);
    for (int q = 0; q < M; ++q) {
      const int s = idx[q];
      double logp = 0.0;
      double kl = 0.0;
      std::vector<double> zs(ad), diff(ad);
      for (int k = 0; k < ad; ++k) {
        const double mu = out.mean[i](k, q);
        const double lsn = ls_new[k];
        const double sn2 = std::exp(2.0 * lsn);
        const double so2 = std::exp(2.0 * static_cast<double>(ls_old[k]));
        const double a = b.actions[i](k, s);
        const double z = (a - mu) / std::exp(lsn);
        zs[k] = z;
        logp += -0.5 * z * z - lsn - half_log_2pi;
        const double dm = static_cast<double>(b.old_mean[i](k, s)) - mu;
        diff[k] = dm;
        kl += lsn - static_cast<double>(ls_old[k]) + (so2 + dm * dm) / (2.0 * sn2) - 0.5;
      }
      const double A = adv[i][s];
      const double ratio = std::exp(logp - b.logp[i][s]);
      const double clipped = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
      const double s1 = ratio * A;
      const double s2 = clipped * A;
      const bool unclipped = s1 <= s2;
      L.policy += -std::min(s1, s2) * w;
      L.kl += kl * w;
      const double v = out.value[i](0, q);
      const double verr = v - b.returns[i][s];
      L.value += verr * verr * w;
      if (!std::isfinite(logp) || !std::isfinite(ratio) || !std::isfinite(verr))
        throw NumericError("ppo_update: non-finite loss term");
      if (grad) {
        const double dlogp = unclipped ? -ratio * A : 0.0;
        for (int k = 0; k < ad; ++k) {
          const double lsn = ls_new[k];
          const double sn = std::exp(lsn);
          const double sn2 = sn * sn;
          const double so2 = std::exp(2.0 * static_cast<double>(ls_old[k]));
          // d logp / d mu = z / sigma; d KL / d mu = -(mu_old - mu) / sigma^2
          const double gmu = dlogp * zs[k] / sn + kl_coeff * (-diff[k]) / sn2;
          grad->mean[i](k, q) = T(gmu * w);
          dls[k] += w * (dlogp * (zs[k] * zs[k] - 1.0) +
                         kl_coeff * (1.0 - (so2 + diff[k] * diff[k]) / sn2) - cfg.entropy_coeff);
        }
        grad->value[i](0, q) = T(w * 2.0 * cfg.value_coeff * verr);
      }
    }
    double ent = 0.0;
    for (int k = 0; k < ad; ++k) ent += 0.5 + half_log_2pi + static_cast<double>(ls_new[k]);
    L.entropy += ent / n;
    if (grad)
      for (int k = 0; k < ad; ++k) grad->log_std[i][k] = T(dls[k]);
  }
  return L;
}

template <typename T>
TeamInput<T> gather_input(const RolloutBatch<T>& b, std::span<const int> idx) {
  const int n = b.n_agents;
  const int M = static_cast<int>(idx.size());
  TeamInput<T> in;
  in.batch = M;
  in.obs.resize(n);
  for (int i = 0; i < n; ++i) {
    in.obs[i].resize(b.obs[i].rows(), M);
    for (int q = 0; q < M; ++q) in.obs[i].col(q) = b.obs[i].col(idx[q]);
  }
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  in.adj.resize(M * nn);
  for (int q = 0; q < M; ++q)
    std::copy(b.adj.begin() + idx[q] * nn, b.adj.begin() + (idx[q] + 1) * nn, in.adj.begin() + q * nn);
  return in;
}

template <typename T>
double global_grad_norm(const std::vector<ParamVector<T>>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (T v : g) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_kl = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

// sgd_iters epochs of shuffled minibatches; adapts kl_coeff afterwards from
// the last epoch's mean KL.
template <typename T>
UpdateStats ppo_update(RolloutBatch<T>& b, GnnModel<T>& model, Adam<T>& opt, const TrainConfig& cfg,
                       double& kl_coeff, std::mt19937_64& rng) {
  std::vector<std::vector<double>> adv = b.advantages;
  normalize_advantages(adv);
  const int N = b.size;
  const int M = std::min(cfg.minibatch_size, N);
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  UpdateStats st;
  int updates = 0;
  double last_kl = 0.0;
  int last_count = 0;
  opt.lr = cfg.lr;
  for (int epoch = 0; epoch < cfg.sgd_iters; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    last_kl = 0.0;
    last_count = 0;
    for (int start = 0; start + M <= N; start += M) {
      std::span<const int> idx(order.data() + start, M);
      const TeamInput<T> in = gather_input(b, idx);
      TeamTrace<T> tr;
      const TeamOutput<T> out = model.forward(in, &tr);
      TeamGrad<T> g;
      const MinibatchLoss L = ppo_loss(b, idx, out, adv, cfg, kl_coeff, &g);
      auto grads = model.zero_grads();
      model.backward(tr, g, grads);
      const double norm = global_grad_norm(grads);
      if (!std::isfinite(norm)) throw NumericError("ppo_update: non-finite gradient norm");
      if (norm > cfg.max_grad_norm) {
        const T scale = T(cfg.max_grad_norm / norm);
        for (auto& gs : grads)
          for (T& v : gs) v *= scale;
      }
      opt.step(model.sets(), grads);
      st.policy_loss += L.policy;
      st.value_loss += L.value;
      st.entropy += L.entropy;
      st.grad_norm += norm;
      last_kl += L.kl;
      ++last_count;
      ++updates;
    }
  }
  if (updates > 0) {
    st.policy_loss /= updates;
    st.value_loss /= updates;
    st.entropy /= updates;
    st.grad_norm /= updates;
  }
  st.mean_kl = last_count > 0 ? last_kl / last_count : 0.0;
  if (st.mean_kl > 2.0 * cfg.kl_target) {
    kl_coeff *= 2.0;
  } else if (st.mean_kl < 0.5 * cfg.kl_target) {
    kl_coeff *= 0.5;
  }
  return st;
}

// --- outer loop --------------------------------------------------------------

inline ModelConfig model_config_for(const ScenarioSpec& spec, TypingMode typing, SharingMode sharing,
                                    ModelConfig base = {}) {
  base.n_agents = spec.n_agents;
  base.obs = observation_layout(spec.id, typing);
  base.action_dim = action_dim(spec.id);
  base.sharing = sharing;
  base.validate();
  return base;
}

// Owns the model, optimiser, RNG and curriculum latch between iterations.
template <typename T = float>
class Trainer {
 public:
  Trainer(ScenarioSpec spec, ModelConfig model, TrainConfig cfg)
      : spec_(std::move(spec)), cfg_(std::move(cfg)), model_(std::move(model)), rng_(cfg_.seed) {
    spec_.validate();
    cfg_.validate();
    if (model_.config().sharing != cfg_.sharing)
      throw ConfigError("trainer: model and train sharing modes differ");
    if (model_.config().obs.dim != observation_layout(spec_.id, cfg_.typing).dim)
      throw ConfigError("trainer: model observation layout does not match scenario/typing");
    model_.initialize(rng_);
    kl_coeff_ = cfg_.kl_coeff;
  }

  void restore(const Checkpoint& ck) {
    if (!(ck.model == model_.config()) || ck.typing != cfg_.typing || ck.scenario.id != spec_.id)
      throw ConfigError("trainer: checkpoint does not match the configured model");
    import_params(model_, ck.sets);
    rng_ = rng_from_string(ck.rng_state);
    iteration_ = ck.iteration;
    kl_coeff_ = ck.kl_coeff;
    curriculum_on_ = ck.curriculum_on;
    curriculum_ema_ = ck.curriculum_ema;
    ema_init_ = curriculum_ema_ != 0.0;
  }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.scenario = spec_;
    ck.typing = cfg_.typing;
    ck.model = model_.config();
    ck.sets = export_params(model_);
    ck.rng_state = rng_to_string(rng_);
    ck.iteration = iteration_;
    ck.kl_coeff = kl_coeff_;
    ck.curriculum_on = curriculum_on_;
    ck.curriculum_ema = curriculum_ema_;
    return ck;
  }

  TrainMetrics iterate() {
    RolloutBatch<T> batch = collect_rollouts(model_, spec_, cfg_, rng_, curriculum_on_);
    compute_advantages(batch, cfg_.gamma, cfg_.gae_lambda);
    const UpdateStats up = ppo_update(batch, model_, opt_, cfg_, kl_coeff_, rng_);
    ++iteration_;
    TrainMetrics m;
    m.iteration = iteration_;
    m.episodes = static_cast<int>(batch.episodes.size());
    double reward = 0.0;
    int wins = 0;
    for (const auto& e : batch.episodes) {
      reward += e.reward;
      wins += e.success ? 1 : 0;
    }
    if (m.episodes > 0) {
      m.mean_episode_reward = reward / m.episodes;
      m.success_rate = static_cast<double>(wins) / m.episodes;
    }
    m.policy_loss = up.policy_loss;
    m.value_loss = up.value_loss;
    m.mean_kl = up.mean_kl;
    m.entropy = up.entropy;
    m.grad_norm = up.grad_norm;
    advance_curriculum(batch);
    return m;
  }

  GnnModel<T>& model() { return model_; }
  const GnnModel<T>& model() const { return model_; }
  const ScenarioSpec& spec() const { return spec_; }
  const TrainConfig& config() const { return cfg_; }
  std::mt19937_64& rng() { return rng_; }
  std::int64_t iteration() const { return iteration_; }
  double kl_coeff() const { return kl_coeff_; }
  bool curriculum_on() const { return curriculum_on_; }
  double curriculum_ema() const { return curriculum_ema_; }

 private:
  // Scenario B: latch recess penalties on once the EMA of the normalised
  // positional return reaches curriculum_fraction.
  void advance_curriculum(const RolloutBatch<T>& b) {
    if (spec_.id != ScenarioId::kB || curriculum_on_ || b.episodes.empty()) return;
    double frac = 0.0;
    for (const auto& e : b.episodes) frac += e.max_positional > 0.0 ? e.positional / e.max_positional : 0.0;
    frac /= static_cast<double>(b.episodes.size());
    curriculum_ema_ = ema_init_ ? cfg_.curriculum_ema_alpha * frac + (1.0 - cfg_.curriculum_ema_alpha) * curriculum_ema_
                                : frac;
    ema_init_ = true;
    if (curriculum_ema_ >= spec_.curriculum_fraction) curriculum_on_ = true;
  }

  ScenarioSpec spec_;
  TrainConfig cfg_;
  GnnModel<T> model_;
  std::mt19937_64 rng_;
  Adam<T> opt_;
  std::int64_t iteration_ = 0;
  double kl_coeff_ = 0.0;
  bool curriculum_on_ = false;
  double curriculum_ema_ = 0.0;
  bool ema_init_ = false;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  bool record_wall_time = true;
  const std::atomic<bool>* stop = nullptr;
  std::function<void(const TrainMetrics&)> on_iteration;
  // Continue an earlier run: append to metrics.csv, no initial checkpoint.
  bool resume = false;
};

struct TrainResult {
  std::vector<TrainMetrics> history;
  std::filesystem::path last_checkpoint;
  bool interrupted = false;
};

template <typename T>
std::filesystem::path write_trainer_checkpoint(const Trainer<T>& tr, const std::filesystem::path& dir) {
  const std::string name = checkpoint_name(tr.iteration());
  const std::filesystem::path path = dir / name;
  save_checkpoint(path, tr.checkpoint());
  write_latest_pointer(dir, name);
  return path;
}

// Runs cfg.iterations iterations, appending one metrics row each. An
// initial checkpoint is written before the first iteration, then every
// checkpoint_every iterations and after the last one.
template <typename T>
TrainResult train(Trainer<T>& tr, const TrainOptions& opts) {
  TrainResult res;
  const bool write = !opts.out_dir.empty();
  std::ofstream metrics;
  if (write) {
    std::filesystem::create_directories(opts.out_dir);
    const auto path = opts.out_dir / "metrics.csv";
    const bool append = opts.resume && std::filesystem::exists(path);
    metrics.open(path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw std::runtime_error("train: cannot open metrics file in " + opts.out_dir.string());
    if (!append) metrics << kMetricsHeader << "\n" << std::flush;
    if (!opts.resume) res.last_checkpoint = write_trainer_checkpoint(tr, opts.out_dir);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const int every = tr.config().checkpoint_every;
  for (int k = 0; k < tr.config().iterations; ++k) {
    if (opts.stop && opts.stop->load()) {
      res.interrupted = true;
      break;
    }
    TrainMetrics m = tr.iterate();
    if (opts.record_wall_time)
      m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(m);
    if (write) {
      metrics << metrics_row(m) << "\n" << std::flush;
      if (!metrics) throw std::runtime_error("train: metrics write failed");
      const bool last = k + 1 == tr.config().iterations;
      if (last || (every > 0 && tr.iteration() % every == 0))
        res.last_checkpoint = write_trainer_checkpoint(tr, opts.out_dir);
    }
    if (opts.on_iteration) opts.on_iteration(m);
  }
  if (write && res.interrupted) res.last_checkpoint = write_trainer_checkpoint(tr, opts.out_dir);
  return res;
}

}  // namespace hetmarl
