#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hetmarl/evaluation.hpp"
#include "hetmarl/training.hpp"

using namespace hetmarl;
namespace fs = std::filesystem;

namespace {

GnnModel<float> fresh_model(const ScenarioSpec& spec, SharingMode sharing, std::uint64_t seed,
                            TypingMode typing = TypingMode::kNone) {
  ModelConfig m;
  m.encoder_widths = {16, 16};
  m.gnn_hidden = 16;
  m.hidden_width = 16;
  m.decoder_hidden = 16;
  GnnModel<float> model(model_config_for(spec, typing, sharing, m));
  std::mt19937_64 rng(seed);
  model.initialize(rng);
  return model;
}

// Perturbs every parameter so outputs depend visibly on the input.
void scramble(GnnModel<float>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.4);
  for (auto& s : m.sets())
    for (float& v : s) v = static_cast<float>(nd(rng));
}

// Policy whose mean action ignores the observation.
void make_constant(GnnModel<float>& m, float bias) {
  const ParamLayout& l = m.layout();
  const TensorInfo& w = l[m.policy_decoder().weights.back()];
  const TensorInfo& b = l[m.policy_decoder().biases.back()];
  for (auto& s : m.sets()) {
    std::fill(s.begin() + w.offset, s.begin() + w.offset + w.size(), 0.0f);
    std::fill(s.begin() + b.offset, s.begin() + b.offset + b.size(), bias);
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(InjectNoise, ZeroMagnitudeIsIdentity) {
  std::mt19937_64 rng(1);
  const Observation o{0.1, -0.2, 3.0};
  EXPECT_EQ(inject_noise(o, 0.0, rng), o);
}

TEST(InjectNoise, PerturbationsStayWithinMagnitude) {
  std::mt19937_64 rng(2);
  const Observation o(50, 0.5);
  for (int k = 0; k < 100; ++k) {
    const Observation n = inject_noise(o, 0.3, rng);
    for (std::size_t j = 0; j < o.size(); ++j) {
      EXPECT_LE(std::abs(n[j] - o[j]), 0.3);
    }
  }
}

TEST(InjectNoise, MonteCarloMeanIsCentred) {
  std::mt19937_64 rng(3);
  const Observation o(1, 0.0);
  double sum = 0.0;
  for (int k = 0; k < 100000; ++k) sum += inject_noise(o, 1.0, rng)[0];
  EXPECT_LE(std::abs(sum / 100000), 0.02);
}

TEST(InjectNoise, IndexEntryIsAlsoPerturbed) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kPassageAsym);
  Env env(spec, TypingMode::kExplicitIndex);
  const auto obs = env.reset(4);
  std::mt19937_64 rng(5);
  const Observation n = inject_noise(obs[1], 0.5, rng);
  EXPECT_NE(n.back(), obs[1].back());
}

TEST(InjectNoise, NegativeMagnitudeRejected) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(inject_noise(Observation{1.0}, -0.1, rng), ConfigError);
}

TEST(Evaluate, ZeroRunsGivesEmptySummary) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  const Policy p(spec, TypingMode::kNone, fresh_model(spec, SharingMode::kShared, 1));
  const EvalSummary s = evaluate(p, spec, 0, 0.0, 7);
  EXPECT_EQ(s.n_runs, 0);
  EXPECT_TRUE(s.rewards.empty());
  EXPECT_EQ(s.mean_reward, 0.0);
  EXPECT_EQ(s.success_rate, 0.0);
}

TEST(Evaluate, SameSeedSameSummary) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kB);
  GnnModel<float> m = fresh_model(spec, SharingMode::kPerAgent, 2);
  scramble(m, 3);
  const Policy p(spec, TypingMode::kNone, m);
  EvalOptions sampled;
  sampled.sample_actions = true;
  const EvalSummary a = evaluate(p, spec, 3, 0.2, 11, sampled);
  const EvalSummary b = evaluate(p, spec, 3, 0.2, 11, sampled);
  EXPECT_EQ(a.rewards, b.rewards);
  EXPECT_EQ(a.mean_abs_force, b.mean_abs_force);
  EXPECT_EQ(a.mean_length, 500.0);
  const EvalSummary c = evaluate(p, spec, 3, 0.2, 12, sampled);
  EXPECT_NE(a.rewards, c.rewards);
}

TEST(Evaluate, RunsUseConsecutiveSeeds) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> m = fresh_model(spec, SharingMode::kPerAgent, 2);
  scramble(m, 3);
  const Policy p(spec, TypingMode::kNone, m);
  const EvalSummary all = evaluate(p, spec, 3, 0.1, 40);
  const EvalSummary third = evaluate(p, spec, 1, 0.1, 42);
  // Run 2 of seed 40 has env seed 42 but a different noise stream.
  const EvalSummary clean_all = evaluate(p, spec, 3, 0.0, 40);
  const EvalSummary clean_third = evaluate(p, spec, 1, 0.0, 42);
  EXPECT_EQ(clean_all.rewards[2], clean_third.rewards[0]);
  EXPECT_EQ(all.rewards.size(), 3u);
  EXPECT_EQ(third.rewards.size(), 1u);
}

TEST(Evaluate, NoiseFreeEqualsRolloutBitwise) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kPassageSizes);
  GnnModel<float> m = fresh_model(spec, SharingMode::kPerAgent, 5);
  scramble(m, 6);
  const Policy p(spec, TypingMode::kNone, m);
  const EvalSummary s = evaluate(p, spec, 1, 0.0, 17);
  const RolloutTrace tr = rollout_trace(p, spec, 17, 0.0);
  double sum = 0.0;
  for (const auto& r : tr.steps)
    if (!r.rewards.empty()) sum += r.rewards[0];
  EXPECT_EQ(s.rewards[0], sum);
  EXPECT_EQ(s.mean_length, static_cast<double>(tr.steps.size() - 1));
  for (const auto& r : tr.steps) EXPECT_EQ(r.clean_obs, r.noisy_obs);
}

TEST(Evaluate, ScenarioMismatchIsConfigError) {
  const ScenarioSpec a = ScenarioSpec::defaults(ScenarioId::kA);
  const ScenarioSpec b = ScenarioSpec::defaults(ScenarioId::kB);
  const Policy p(a, TypingMode::kNone, fresh_model(a, SharingMode::kShared, 1));
  EXPECT_THROW(evaluate(p, b, 1, 0.0, 1), ConfigError);
  EXPECT_THROW(rollout_trace(p, b, 1, 0.0), ConfigError);
}

TEST(Evaluate, HeavyAgentForceIsMeasuredPerAgent) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> m = fresh_model(spec, SharingMode::kPerAgent, 1);
  make_constant(m, 0.0f);
  // Only agent 1 pushes.
  const TensorInfo& b = m.layout()[m.policy_decoder().biases.back()];
  m.params(1)[b.offset] = 0.5f;
  const Policy p(spec, TypingMode::kNone, m);
  const EvalSummary s = evaluate(p, spec, 2, 0.0, 3);
  EXPECT_EQ(s.mean_abs_force[0], 0.0);
  EXPECT_GT(s.mean_abs_force[1], 0.1);
}

// --- sweeps ------------------------------------------------------------------

TEST(NoiseSweep, SingleLevelSelfNormalises) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> m = fresh_model(spec, SharingMode::kShared, 1);
  make_constant(m, 0.6f);
  const Policy p(spec, TypingMode::kNone, m);
  const auto r = noise_sweep({&p}, spec, {0.0}, 4, 1);
  ASSERT_EQ(r.size(), 1u);
  ASSERT_EQ(r[0].mean.size(), 1u);
  EXPECT_DOUBLE_EQ(r[0].mean[0], 1.0);
}

TEST(NoiseSweep, ConstantPolicyCurveIsFlat) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> m = fresh_model(spec, SharingMode::kPerAgent, 1);
  make_constant(m, 0.6f);
  const Policy p(spec, TypingMode::kNone, m);
  const auto r = noise_sweep({&p}, spec, {0.0, 0.5, 1.0, 2.0}, 5, 1);
  for (std::size_t k = 0; k < r[0].mean.size(); ++k) {
    EXPECT_NEAR(r[0].mean[k], 1.0, r[0].std[k] + 1e-12);
    EXPECT_GE(r[0].std[k], 0.0);
  }
}

TEST(NoiseSweep, StdIsZeroWithOneRun) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> m = fresh_model(spec, SharingMode::kShared, 1);
  make_constant(m, 0.6f);
  const Policy p(spec, TypingMode::kNone, m);
  const auto r = noise_sweep({&p}, spec, {0.0, 1.0}, 1, 1);
  for (double s : r[0].std) EXPECT_EQ(s, 0.0);
}

TEST(NoiseSweep, AnchorIsBestModelAtLevelZero) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> fast = fresh_model(spec, SharingMode::kShared, 1);
  GnnModel<float> slow = fresh_model(spec, SharingMode::kShared, 1);
  make_constant(fast, 0.8f);
  make_constant(slow, 0.3f);
  const Policy pf(spec, TypingMode::kNone, fast), ps(spec, TypingMode::kNone, slow);
  const auto r = noise_sweep({&ps, &pf}, spec, {0.0, 0.5}, 2, 1);
  EXPECT_DOUBLE_EQ(r[1].mean[0], 1.0);
  EXPECT_LT(r[0].mean[0], 1.0);
  EXPECT_EQ(r[0].anchor, r[1].anchor);
  const auto pinned = noise_sweep({&ps, &pf}, spec, {0.0, 0.5}, 2, 1, 0);
  EXPECT_DOUBLE_EQ(pinned[0].mean[0], 1.0);
}

TEST(NoiseSweep, NormalisationIsScaleInvariant) {
  NoiseSweepResult a;
  a.levels = {0, 1, 2};
  a.raw_mean = {4.0, 3.0, -1.0};
  a.raw_std = {0.5, 1.0, 2.0};
  NoiseSweepResult b = a;
  for (double& v : b.raw_mean) v *= 7.5;
  for (double& v : b.raw_std) v *= 7.5;
  normalize_sweep(a, 4.0);
  normalize_sweep(b, 30.0);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(a.mean[k], b.mean[k], 1e-15);
    EXPECT_NEAR(a.std[k], b.std[k], 1e-15);
    EXPECT_GE(a.mean[k], 0.0);
    EXPECT_LE(a.mean[k], 1.0);
  }
  EXPECT_EQ(a.mean[2], 0.0);
  EXPECT_THROW(normalize_sweep(a, -1.0), NumericError);
}

TEST(NoiseSweep, LevelsMustIncrease) {
  EXPECT_THROW(check_levels({}), ConfigError);
  EXPECT_THROW(check_levels({0.0, 0.0}), ConfigError);
  EXPECT_THROW(check_levels({0.5, 0.2}), ConfigError);
  EXPECT_THROW(check_levels({-0.1}), ConfigError);
  EXPECT_NO_THROW(check_levels({0.0, 0.1}));
}

TEST(ParseLevels, RangeSyntax) {
  const auto v = parse_levels("0:2:50");
  ASSERT_EQ(v.size(), 50u);
  EXPECT_EQ(v.front(), 0.0);
  EXPECT_EQ(v.back(), 2.0);
  EXPECT_NO_THROW(check_levels(v));
  EXPECT_EQ(parse_levels("0.3:0.3:1"), std::vector<double>{0.3});
  EXPECT_THROW(parse_levels("0:1"), ConfigError);
  EXPECT_THROW(parse_levels("0:1:x"), ConfigError);
  EXPECT_THROW(parse_levels("1:0:3"), ConfigError);
  EXPECT_THROW(parse_levels("0:1:0"), ConfigError);
}

// --- vector field ------------------------------------------------------------

TEST(VectorField, ResolutionOneIsGridCentre) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  const Policy p(spec, TypingMode::kNone, fresh_model(spec, SharingMode::kShared, 1));
  const VectorFieldTable t = vector_field(p, -1.0, 0.5, 1);
  ASSERT_EQ(t.cells.size(), 1u);
  EXPECT_EQ(t.cells[0].v1, -0.25);
  EXPECT_EQ(t.cells[0].v2, -0.25);
}

TEST(VectorField, GridIsRectangularAndFinite) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> m = fresh_model(spec, SharingMode::kPerAgent, 1);
  scramble(m, 2);
  const Policy p(spec, TypingMode::kNone, m);
  const VectorFieldTable t = vector_field(p, -1.0, 1.0, 21);
  ASSERT_EQ(t.cells.size(), 441u);
  EXPECT_EQ(t.at(0, 0).v1, -1.0);
  EXPECT_EQ(t.at(20, 20).v2, 1.0);
  EXPECT_EQ(t.at(3, 7).v1, t.at(3, 0).v1);
  EXPECT_EQ(t.at(3, 7).v2, t.at(0, 7).v2);
  for (const auto& c : t.cells) {
    EXPECT_TRUE(std::isfinite(c.f1));
    EXPECT_TRUE(std::isfinite(c.f2));
  }
}

TEST(VectorField, WrongScenarioIsConfigError) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kB);
  const Policy p(spec, TypingMode::kNone, fresh_model(spec, SharingMode::kShared, 1));
  EXPECT_THROW(vector_field(p, -1.0, 1.0, 5), ConfigError);
}

TEST(VectorField, FreshPolicyIsNearZero) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  const Policy p(spec, TypingMode::kNone, fresh_model(spec, SharingMode::kPerAgent, 9));
  for (const auto& c : vector_field(p, -1.0, 1.0, 21).cells) {
    EXPECT_LT(std::abs(c.f1), 1e-2);
    EXPECT_LT(std::abs(c.f2), 1e-2);
  }
}

TEST(VectorField, SharedModelIsSwapSymmetric) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> m = fresh_model(spec, SharingMode::kShared, 1);
  scramble(m, 4);
  const Policy p(spec, TypingMode::kNone, m);
  EXPECT_LT(swap_asymmetry(vector_field(p, -1.0, 1.0, 21)), 1e-6);
}

TEST(VectorField, PerAgentModelCanBreakSymmetry) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> m = fresh_model(spec, SharingMode::kPerAgent, 1);
  scramble(m, 4);
  const Policy p(spec, TypingMode::kNone, m);
  EXPECT_GT(swap_asymmetry(vector_field(p, -1.0, 1.0, 21)), 1e-3);
}

// --- traces ------------------------------------------------------------------

TEST(RolloutTrace, HorizonZeroHasInitialStateOnly) {
  ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kB);
  const Policy p(spec, TypingMode::kNone, fresh_model(spec, SharingMode::kShared, 1));
  spec.horizon = 0;
  const RolloutTrace tr = rollout_trace(p, spec, 3, 0.0);
  ASSERT_EQ(tr.steps.size(), 1u);
  EXPECT_TRUE(tr.steps[0].actions.empty());
}

TEST(RolloutTrace, ScenarioAStartsAtRest) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  GnnModel<float> m = fresh_model(spec, SharingMode::kPerAgent, 1);
  scramble(m, 8);
  const Policy p(spec, TypingMode::kNone, m);
  const RolloutTrace tr = rollout_trace(p, spec, 5, 0.3);
  for (const auto& a : tr.steps.front().world.agents) {
    EXPECT_EQ(a.velocity.x, 0.0);
    EXPECT_EQ(a.velocity.y, 0.0);
  }
  EXPECT_EQ(static_cast<int>(tr.steps.size()), spec.horizon + 1);
  for (std::size_t k = 1; k < tr.steps.size(); ++k) EXPECT_GT(tr.steps[k].t, tr.steps[k - 1].t);
}

TEST(RolloutTrace, NoisyObservationsAreRecordedSeparately) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kA);
  const Policy p(spec, TypingMode::kNone, fresh_model(spec, SharingMode::kShared, 1));
  const RolloutTrace tr = rollout_trace(p, spec, 5, 0.3);
  const StepRecord& r = tr.steps[1];
  double dev = 0.0;
  for (std::size_t i = 0; i < r.clean_obs.size(); ++i)
    for (std::size_t k = 0; k < r.clean_obs[i].size(); ++k) {
      const double d = std::abs(r.noisy_obs[i][k] - r.clean_obs[i][k]);
      EXPECT_LE(d, 0.3);
      dev = std::max(dev, d);
    }
  EXPECT_GT(dev, 0.0);
}

TEST(RolloutTrace, ScenarioBHasTaskCompletionSeries) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kB);
  const Policy p(spec, TypingMode::kNone, fresh_model(spec, SharingMode::kShared, 1));
  const RolloutTrace tr = rollout_trace(p, spec, 2, 0.0);
  ASSERT_EQ(static_cast<int>(tr.steps.size()), spec.horizon + 1);
  for (const auto& r : tr.steps) EXPECT_TRUE(std::isfinite(r.task_completion));
  EXPECT_NE(tr.steps.front().task_completion, 0.0);
}

TEST(RolloutTrace, SameSeedGivesIdenticalFiles) {
  const ScenarioSpec spec = ScenarioSpec::defaults(ScenarioId::kPassageAsym);
  GnnModel<float> m = fresh_model(spec, SharingMode::kPerAgent, 1, TypingMode::kExplicitIndex);
  scramble(m, 3);
  const Policy p(spec, TypingMode::kExplicitIndex, m);
  const fs::path dir = fs::temp_directory_path() / ("hetmarl_eval_" + std::to_string(::getpid()));
  write_trace_jsonl(dir / "a.jsonl", rollout_trace(p, spec, 9, 0.2));
  write_trace_jsonl(dir / "b.jsonl", rollout_trace(p, spec, 9, 0.2));
  const std::string a = slurp(dir / "a.jsonl");
  EXPECT_EQ(a, slurp(dir / "b.jsonl"));
  std::istringstream lines(a);
  std::string first;
  std::getline(lines, first);
  const auto j = nlohmann::json::parse(first);
  for (const char* key : {"t", "agents", "obs", "obs_noisy", "actions", "rewards", "task_completion", "done", "success"})
    EXPECT_TRUE(j.contains(key)) << key;
  fs::remove_all(dir);
}

TEST(Emitters, CsvHeaders) {
  const fs::path dir = fs::temp_directory_path() / ("hetmarl_csv_" + std::to_string(::getpid()));
  NoiseSweepResult r;
  r.levels = {0.0, 0.5};
  r.raw_mean = {2.0, 1.0};
  r.raw_std = {0.0, 0.2};
  normalize_sweep(r, 2.0);
  write_sweep_csv(dir / "s.csv", r);
  EXPECT_EQ(slurp(dir / "s.csv"), "noise,mean,std\n0,1,0\n0.5,0.5,0.1\n");
  VectorFieldTable t;
  t.resolution = 1;
  t.cells.push_back({0.0, 0.0, 0.25, -0.5});
  write_vector_field_csv(dir / "v.csv", t);
  EXPECT_EQ(slurp(dir / "v.csv"), "v1,v2,f1,f2\n0,0,0.25,-0.5\n");
  fs::remove_all(dir);
}
