#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "hetmarl/cli.hpp"

using namespace hetmarl;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(# tiny run
seed = 4
[scenario]
id = "A"
[model]
sharing_mode = "hetgppo"
encoder_widths = [8, 8]
gnn_hidden = 8
hidden_width = 8
decoder_hidden = 8
[train]
iterations = 2
batch_size = 160
minibatch_size = 40
sgd_iters = 2
envs_per_worker = 4
[io]
checkpoint_every = 1
)";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hetmarl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run_subcommand(args, out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_comments(const std::string& s) {
  return std::regex_replace(s, std::regex("  #[^\n]*"), "");
}

}  // namespace

// --- config parsing ----------------------------------------------------------

TEST(Config, MinimalConfigFillsDefaults) {
  const ExperimentConfig c = parse_config_text("[scenario]\nid = \"A\"\n[model]\nsharing_mode = \"hetgppo\"\n");
  EXPECT_EQ(c.scenario, ScenarioSpec::defaults(ScenarioId::kA));
  EXPECT_EQ(c.model.sharing, SharingMode::kPerAgent);
  EXPECT_EQ(c.train.profile, "desk");
  EXPECT_EQ(c.train.sharing, SharingMode::kPerAgent);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.provenance.at("scenario.id"), "<string>:2");
}

TEST(Config, PaperProfileLoadsTableValues) {
  const ExperimentConfig c = parse_config_text("[train]\nprofile = \"paper\"\n");
  EXPECT_DOUBLE_EQ(c.train.gamma, 0.99);
  EXPECT_EQ(c.train.batch_size, 60000);
  EXPECT_EQ(c.train.minibatch_size, 4096);
  EXPECT_EQ(c.train.sgd_iters, 40);
  EXPECT_DOUBLE_EQ(c.train.lr, 5e-5);
  EXPECT_DOUBLE_EQ(c.train.gae_lambda, 0.9);
  EXPECT_DOUBLE_EQ(c.train.kl_coeff, 0.01);
}

TEST(Config, FileKeysOverrideProfile) {
  const ExperimentConfig c = parse_config_text("[train]\nprofile = \"paper\"\nlr = 1e-3\n");
  EXPECT_DOUBLE_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.train.batch_size, 60000);
  ConfigOverrides ov;
  ov.profile = "desk";
  const ExperimentConfig d = parse_config_text("[train]\nprofile = \"paper\"\nlr = 1e-3\n", "x", ov);
  EXPECT_EQ(d.train.profile, "desk");
  EXPECT_EQ(d.train.batch_size, TrainConfig::desk().batch_size);
  EXPECT_DOUBLE_EQ(d.train.lr, 1e-3);
}

TEST(Config, MisspelledKeyIsNamedWithLine) {
  try {
    parse_config_text("[train]\nitertions = 5\n", "exp.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("itertions"), std::string::npos) << msg;
    EXPECT_NE(msg.find("exp.cfg:2"), std::string::npos) << msg;
  }
}

TEST(Config, TypeMismatchNamesLine) {
  try {
    parse_config_text("seed = 1\n[train]\niterations = \"many\"\n", "exp.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("exp.cfg:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config_text("[train]\niterations = 2.5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[model]\nsharing_mode = hetgppo\n"), ConfigError);
}

TEST(Config, InvariantViolationsAreRejected) {
  EXPECT_THROW(parse_config_text("[train]\ngamma = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[train]\nbatch_size = 10\nminibatch_size = 20\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[model]\nsharing_mode = \"both\"\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[scenario]\nid = \"Z\"\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[eval]\nnoise_levels = [0.5, 0.1]\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[physics]\ndt = -1\n"), ConfigError);
}

TEST(Config, SyntaxErrors) {
  EXPECT_THROW(parse_config_text("[train\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[extras]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("seed 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[scenario]\nmasses = [1, 2\n"), ConfigError);
}

TEST(Config, ValuesAndComments) {
  const ExperimentConfig c = parse_config_text(
      "seed = 12  # trailing\n"
      "[scenario]\n"
      "id = \"B\"\n"
      "comm_range = inf\n"
      "masses = [1.5, 0.5]\n"
      "[model]\n"
      "typing_mode = \"explicit_index\"\n"
      "aggregation = \"mean\"\n"
      "[eval]\n"
      "noise_levels = \"0:2:5\"\n"
      "sample_actions = true\n"
      "[io]\n"
      "output_dir = \"runs/#1\"\n");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.scenario.id, ScenarioId::kB);
  EXPECT_EQ(c.scenario.horizon, ScenarioSpec::defaults(ScenarioId::kB).horizon);
  EXPECT_TRUE(std::isinf(c.scenario.comm_range));
  EXPECT_EQ(c.scenario.masses, (std::vector<double>{1.5, 0.5}));
  EXPECT_EQ(c.train.typing, TypingMode::kExplicitIndex);
  EXPECT_EQ(c.model.obs.dim, observation_layout(ScenarioId::kB, TypingMode::kExplicitIndex).dim);
  EXPECT_EQ(c.model.aggregation, Aggregation::kMean);
  EXPECT_EQ(c.eval.noise_levels, (std::vector<double>{0, 0.5, 1, 1.5, 2}));
  EXPECT_TRUE(c.eval.sample_actions);
  EXPECT_EQ(c.io.output_dir, "runs/#1");
}

TEST(Config, SnapshotRoundTrips) {
  ConfigOverrides ov;
  ov.seed = 77;
  const ExperimentConfig c = parse_config_text(
      "[scenario]\nid = \"PassageAsym\"\nlink_length = 0.45\n[train]\nprofile = \"paper\"\nlr = 0.0001\n"
      "obs_noise_train = 0.2\n[model]\nsharing_mode = \"gppo\"\n",
      "orig.cfg", ov);
  const std::string snap = config_snapshot(c);
  EXPECT_NE(snap.find("seed = 77  # command line"), std::string::npos) << snap;
  EXPECT_NE(snap.find("# orig.cfg:3"), std::string::npos);
  EXPECT_NE(snap.find("# paper profile"), std::string::npos);
  const ExperimentConfig back = parse_config_text(snap, "snap.cfg");
  EXPECT_EQ(back.scenario, c.scenario);
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_DOUBLE_EQ(back.train.lr, 1e-4);
  EXPECT_EQ(back.train.batch_size, 60000);
  EXPECT_EQ(strip_comments(config_snapshot(back)), strip_comments(snap));
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(parse_config("/nonexistent/hetmarl.cfg"), ConfigError);
}

// --- subcommands -------------------------------------------------------------

TEST_F(Cli, UnknownSubcommandPrintsUsageAndExitsTwo) {
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_NE(err_.str().find("usage:"), std::string::npos);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"train", "--bogus-flag", "1"}), 2);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(Cli, TrainWritesMetricsCheckpointsAndSnapshot) {
  const fs::path cfg = write("a.cfg", kTinyConfig);
  const fs::path out = dir_ / "run";
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", out.string()}), 0) << err_.str();
  EXPECT_TRUE(fs::exists(out / "metrics.csv"));
  EXPECT_TRUE(fs::exists(out / "ck_000000.bin"));
  EXPECT_TRUE(fs::exists(out / "ck_000001.bin"));
  EXPECT_TRUE(fs::exists(out / "ck_000002.bin"));
  EXPECT_EQ(slurp(out / "latest"), "ck_000002.bin\n");
  EXPECT_TRUE(fs::exists(out / kSnapshotName));
  const std::string metrics = slurp(out / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), kMetricsHeader);
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);
}

TEST_F(Cli, TrainRequiresConfig) {
  EXPECT_EQ(run({"train", "--out", (dir_ / "x").string()}), 1);
  EXPECT_NE(err_.str().find("--config"), std::string::npos);
}

TEST_F(Cli, SnapshotRerunReproducesMetrics) {
  const fs::path cfg = write("a.cfg", kTinyConfig);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "first").string()}), 0) << err_.str();
  const fs::path snap = dir_ / "first" / kSnapshotName;
  ASSERT_EQ(run({"train", "--config", snap.string(), "--out", (dir_ / "second_with_longer_name").string()}), 0)
      << err_.str();
  auto strip_time = [](const std::string& s) { return std::regex_replace(s, std::regex(",[0-9.]+\n"), "\n"); };
  EXPECT_EQ(strip_time(slurp(dir_ / "first" / "metrics.csv")),
            strip_time(slurp(dir_ / "second_with_longer_name" / "metrics.csv")));
  EXPECT_EQ(slurp(dir_ / "first" / "ck_000002.bin"), slurp(dir_ / "second_with_longer_name" / "ck_000002.bin"));
}

TEST_F(Cli, SeedFlagOverridesConfig) {
  const fs::path cfg = write("a.cfg", kTinyConfig);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "s9").string(), "--seed", "9"}), 0);
  EXPECT_NE(slurp(dir_ / "s9" / kSnapshotName).find("seed = 9  # command line"), std::string::npos);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "s4").string()}), 0);
  EXPECT_NE(slurp(dir_ / "s9" / "ck_000002.bin"), slurp(dir_ / "s4" / "ck_000002.bin"));
}

TEST_F(Cli, ResumeContinuesToConfiguredIterations) {
  std::string text = kTinyConfig;
  text = std::regex_replace(text, std::regex("iterations = 2"), "iterations = 3");
  const fs::path cfg = write("a.cfg", text);
  const fs::path out = dir_ / "run";
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", out.string()}), 0);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", out.string(), "--checkpoint",
                 (out / "ck_000001.bin").string()}),
            0)
      << err_.str();
  const std::string metrics = slurp(out / "metrics.csv");
  // 3 rows from the first run plus iterations 2 and 3 again.
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 6);
  EXPECT_EQ(load_checkpoint(out).iteration, 3);
}

TEST_F(Cli, EvaluationCommandsWriteOutputs) {
  const fs::path cfg = write("a.cfg", kTinyConfig);
  const fs::path run_dir = dir_ / "run";
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", run_dir.string()}), 0);

  ASSERT_EQ(run({"evaluate", "--checkpoint", run_dir.string(), "--runs", "3", "--out", (dir_ / "ev").string()}), 0)
      << err_.str();
  const auto ev = nlohmann::json::parse(slurp(dir_ / "ev" / "eval.json"));
  EXPECT_EQ(ev["n_runs"], 3);
  EXPECT_TRUE(fs::exists(dir_ / "ev" / kSnapshotName));

  ASSERT_EQ(run({"vector-field", "--checkpoint", run_dir.string(), "--out", (dir_ / "vf" / "vf.csv").string()}), 0)
      << err_.str();
  const std::string vf = slurp(dir_ / "vf" / "vf.csv");
  EXPECT_EQ(std::count(vf.begin(), vf.end(), '\n'), 1 + 21 * 21);
  EXPECT_TRUE(fs::exists(dir_ / "vf" / kSnapshotName));

  ASSERT_EQ(run({"rollout", "--checkpoint", (run_dir / "ck_000002.bin").string(), "--out", (dir_ / "ro").string()}),
            0)
      << err_.str();
  const std::string trace = slurp(dir_ / "ro" / "trace.jsonl");
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 51);

  ASSERT_EQ(run({"inspect-checkpoint", "--checkpoint", run_dir.string()}), 0);
  const auto info = nlohmann::json::parse(out_.str());
  EXPECT_EQ(info["iteration"], 2);
  EXPECT_EQ(info["parameter_sets"], 2);
}

TEST_F(Cli, SweepLevelsFlagSetsShape) {
  std::string text = kTinyConfig;
  text = std::regex_replace(text, std::regex("iterations = 2"), "iterations = 0");
  const fs::path cfg = write("a.cfg", text);
  const fs::path run_dir = dir_ / "run";
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", run_dir.string()}), 0);
  // Hand-made constant policy so the anchor reward is positive.
  Checkpoint ck = load_checkpoint(run_dir);
  Policy p(ck);
  const TensorInfo& b = p.model.layout()[p.model.policy_decoder().biases.back()];
  const TensorInfo& w = p.model.layout()[p.model.policy_decoder().weights.back()];
  for (auto& s : ck.sets) {
    std::fill(s.begin() + w.offset, s.begin() + w.offset + w.size(), 0.0f);
    s[b.offset] = 0.8f;
  }
  save_checkpoint(dir_ / "const.bin", ck);
  ASSERT_EQ(run({"sweep", "--checkpoint", (dir_ / "const.bin").string(), "--levels", "0:2:50", "--runs", "2",
                 "--out", (dir_ / "sw").string()}),
            0)
      << err_.str();
  const std::string csv = slurp(dir_ / "sw" / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 51);
  EXPECT_EQ(csv.substr(0, 15), "noise,mean,std\n");
  const std::string snap = slurp(dir_ / "sw" / kSnapshotName);
  EXPECT_NE(snap.find("runs = 2  # command line"), std::string::npos) << snap;
  EXPECT_EQ(parse_config_text(snap).eval.noise_levels.size(), 50u);
}

TEST_F(Cli, VectorFieldOnScenarioBIsConfigError) {
  std::string text = kTinyConfig;
  text = std::regex_replace(text, std::regex("id = \"A\""), "id = \"B\"");
  text = std::regex_replace(text, std::regex("iterations = 2"), "iterations = 0");
  const fs::path cfg = write("b.cfg", text);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "b").string()}), 0) << err_.str();
  const int code = run({"vector-field", "--checkpoint", (dir_ / "b").string(), "--out", (dir_ / "vf.csv").string()});
  EXPECT_NE(code, 0);
  EXPECT_NE(err_.str().find("config error"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "vf.csv"));
}

TEST_F(Cli, MissingCheckpointFails) {
  EXPECT_EQ(run({"evaluate", "--checkpoint", (dir_ / "nope.bin").string()}), 1);
  EXPECT_EQ(run({"evaluate"}), 1);
}

TEST_F(Cli, StopFlagInterruptsTraining) {
  const fs::path cfg = write("a.cfg", kTinyConfig);
  std::atomic<bool> stop{true};
  std::vector<std::string> args{"train", "--config", cfg.string(), "--out", (dir_ / "r").string()};
  EXPECT_EQ(run_subcommand(args, out_, err_, &stop), 130);
  EXPECT_TRUE(fs::exists(dir_ / "r" / "ck_000000.bin"));
}
