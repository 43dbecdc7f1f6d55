#pragma once

#include <atomic>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hetmarl/checkpoint.hpp"
#include "hetmarl/config.hpp"
#include "hetmarl/evaluation.hpp"
#include "hetmarl/training.hpp"

namespace hetmarl {

inline constexpr const char* kSnapshotName = "resolved_config.cfg";

inline std::string usage_text() {
  return "usage: hetmarl <subcommand> [options]\n"
         "\n"
         "subcommands:\n"
         "  train               train a model from --config (resume with --checkpoint)\n"
         "  evaluate            evaluate --checkpoint, writes eval.json\n"
         "  sweep               deployment-noise sweep over --levels a:b:n\n"
         "  vector-field        Scenario A action field over (v1, v2)\n"
         "  rollout             export one episode as JSON lines\n"
         "  inspect-checkpoint  print a checkpoint's manifest\n"
         "\n"
         "options: --config PATH --seed INT --out DIR --checkpoint PATH\n"
         "         --levels a:b:n --runs INT --profile {desk,paper}\n"
         "env:     HETMARL_THREADS caps worker threads\n";
}

namespace cli_detail {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> checkpoints;
  std::string levels;
  std::optional<int> runs;
  std::optional<std::string> profile;
};

inline ExperimentConfig load_config(const Args& a) {
  ConfigOverrides ov;
  ov.seed = a.seed;
  ov.profile = a.profile;
  ExperimentConfig c = a.config.empty() ? parse_config_text("", "<defaults>", ov) : parse_config(a.config, ov);
  if (!a.levels.empty()) {
    c.eval.noise_levels = parse_levels(a.levels);
    c.provenance["eval.noise_levels"] = "command line";
  }
  if (a.runs) {
    if (*a.runs < 0) throw ConfigError("--runs must be >= 0");
    c.eval.runs = *a.runs;
    c.provenance["eval.runs"] = "command line";
  }
  return c;
}

// Evaluation commands take scenario and model from the checkpoint.
inline void adopt_checkpoint(ExperimentConfig& c, const Checkpoint& ck) {
  c.scenario = ck.scenario;
  c.model = ck.model;
  c.train.sharing = ck.model.sharing;
  c.train.typing = ck.typing;
  for (const char* key : {"scenario.id", "model.sharing_mode", "model.typing_mode"}) c.provenance[key] = "checkpoint";
}

// `--out` may name a file (has an extension) or a directory.
inline std::filesystem::path output_file(const std::string& out, const ExperimentConfig& c, const char* name) {
  if (!out.empty() && std::filesystem::path(out).has_extension()) return out;
  return std::filesystem::path(out.empty() ? c.io.output_dir : out) / name;
}

inline std::filesystem::path output_dir(const std::string& out, const ExperimentConfig& c) {
  return out.empty() ? std::filesystem::path(c.io.output_dir) : std::filesystem::path(out);
}

inline void snapshot_next_to(const std::filesystem::path& file, const ExperimentConfig& c) {
  const auto dir = file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");
  write_config_snapshot(dir / kSnapshotName, c);
}

inline const std::string& single_checkpoint(const Args& a) {
  if (a.checkpoints.size() != 1) throw ConfigError("exactly one --checkpoint is required");
  return a.checkpoints.front();
}

inline int cmd_train(const Args& a, std::ostream& out, const std::atomic<bool>* stop) {
  if (a.config.empty()) throw ConfigError("train requires --config");
  if (a.checkpoints.size() > 1) throw ConfigError("train takes at most one --checkpoint");
  ExperimentConfig c = load_config(a);
  const auto dir = output_dir(a.out, c);
  c.io.output_dir = dir.string();
  std::filesystem::create_directories(dir);
  write_config_snapshot(dir / kSnapshotName, c);

  TrainConfig tc = c.train;
  std::optional<Checkpoint> ck;
  if (!a.checkpoints.empty()) {
    ck = load_checkpoint(a.checkpoints.front());
    tc.iterations = std::max<std::int64_t>(0, tc.iterations - ck->iteration);
  }
  Trainer<float> tr(c.scenario, c.model, tc);
  if (ck) tr.restore(*ck);

  TrainOptions opts;
  opts.out_dir = dir;
  opts.stop = stop;
  opts.resume = ck.has_value();
  opts.on_iteration = [&](const TrainMetrics& m) {
    out << "iter " << m.iteration << "  reward " << m.mean_episode_reward << "  success " << m.success_rate
        << "  kl " << m.mean_kl << "\n"
        << std::flush;
  };
  const TrainResult r = train(tr, opts);
  out << "checkpoint " << r.last_checkpoint.string() << "\n";
  if (r.interrupted) {
    out << "interrupted; state saved\n";
    return 130;
  }
  return 0;
}

inline nlohmann::json summary_json(const EvalSummary& s) {
  return {{"n_runs", s.n_runs},
          {"mean_reward", s.mean_reward},
          {"std_reward", s.std_reward},
          {"success_rate", s.success_rate},
          {"mean_length", s.mean_length},
          {"mean_abs_force", s.mean_abs_force},
          {"rewards", s.rewards}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os = detail::open_output(path);
  os << j.dump(2) << "\n";
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline int cmd_evaluate(const Args& a, std::ostream& out) {
  ExperimentConfig c = load_config(a);
  const Checkpoint ck = load_checkpoint(single_checkpoint(a));
  adopt_checkpoint(c, ck);
  const Policy p(ck);
  EvalOptions eo;
  eo.sample_actions = c.eval.sample_actions;
  const EvalSummary s = evaluate(p, c.scenario, c.eval.runs, c.eval.noise, c.seed, eo);
  nlohmann::json j = summary_json(s);
  j["noise"] = c.eval.noise;
  j["seed"] = c.seed;
  const auto file = output_file(a.out, c, "eval.json");
  write_json(file, j);
  snapshot_next_to(file, c);
  out << "runs " << s.n_runs << "  mean " << s.mean_reward << "  std " << s.std_reward << "  success "
      << s.success_rate << "\n"
      << "wrote " << file.string() << "\n";
  return 0;
}

inline int cmd_sweep(const Args& a, std::ostream& out) {
  if (a.checkpoints.empty()) throw ConfigError("sweep requires at least one --checkpoint");
  ExperimentConfig c = load_config(a);
  std::vector<Checkpoint> cks;
  std::vector<Policy> policies;
  for (const auto& path : a.checkpoints) cks.push_back(load_checkpoint(path));
  for (const auto& ck : cks) {
    if (!(ck.scenario == cks.front().scenario)) throw ConfigError("sweep: checkpoints use different scenarios");
    policies.emplace_back(ck);
  }
  adopt_checkpoint(c, cks.front());
  std::vector<const Policy*> ptrs;
  for (const auto& p : policies) ptrs.push_back(&p);
  EvalOptions eo;
  eo.sample_actions = c.eval.sample_actions;
  const auto results = noise_sweep(ptrs, c.scenario, c.eval.noise_levels, c.eval.runs, c.seed, c.eval.anchor, eo);

  const auto dir = output_dir(a.out, c);
  for (std::size_t m = 0; m < results.size(); ++m) {
    const std::string name = results.size() == 1 ? "sweep.csv" : "sweep_" + std::to_string(m) + ".csv";
    write_sweep_csv(dir / name, results[m]);
    out << a.checkpoints[m] << " -> " << (dir / name).string() << "  (anchor " << results[m].anchor << ")\n";
  }
  write_config_snapshot(dir / kSnapshotName, c);
  return 0;
}

inline int cmd_vector_field(const Args& a, std::ostream& out) {
  ExperimentConfig c = load_config(a);
  const Checkpoint ck = load_checkpoint(single_checkpoint(a));
  adopt_checkpoint(c, ck);
  const Policy p(ck);
  const VectorFieldTable t = vector_field(p, c.eval.vf_min, c.eval.vf_max, c.eval.vf_resolution);
  const auto file = output_file(a.out, c, "vector_field.csv");
  write_vector_field_csv(file, t);
  snapshot_next_to(file, c);
  out << "swap asymmetry " << swap_asymmetry(t) << "\nwrote " << file.string() << "\n";
  return 0;
}

inline int cmd_rollout(const Args& a, std::ostream& out) {
  ExperimentConfig c = load_config(a);
  const Checkpoint ck = load_checkpoint(single_checkpoint(a));
  adopt_checkpoint(c, ck);
  const Policy p(ck);
  EvalOptions eo;
  eo.sample_actions = c.eval.sample_actions;
  const RolloutTrace tr = rollout_trace(p, c.scenario, c.seed, c.eval.noise, eo);
  const auto file = output_file(a.out, c, "trace.jsonl");
  write_trace_jsonl(file, tr);
  snapshot_next_to(file, c);
  out << "steps " << tr.steps.size() << "  success " << (tr.success ? "true" : "false") << "\nwrote "
      << file.string() << "\n";
  return 0;
}

inline int cmd_inspect(const Args& a, std::ostream& out) {
  const auto path = resolve_checkpoint_path(single_checkpoint(a));
  const Checkpoint ck = load_checkpoint(path);
  std::size_t per_set = ck.sets.empty() ? 0 : ck.sets.front().size();
  nlohmann::json j = {{"file", path.string()},
                      {"iteration", ck.iteration},
                      {"typing", to_string(ck.typing)},
                      {"scenario", detail::spec_to_json(ck.scenario)},
                      {"model", detail::model_to_json(ck.model)},
                      {"parameter_sets", ck.sets.size()},
                      {"parameters_per_set", per_set},
                      {"kl_coeff", ck.kl_coeff},
                      {"curriculum_on", ck.curriculum_on},
                      {"curriculum_ema", ck.curriculum_ema}};
  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace cli_detail

// args excludes the program name. Returns the process exit status.
inline int run_subcommand(const std::vector<std::string>& args, std::ostream& out = std::cout,
                          std::ostream& err = std::cerr, const std::atomic<bool>* stop = nullptr) {
  static const std::vector<std::string> kCommands{"train", "evaluate", "sweep", "vector-field", "rollout",
                                                  "inspect-checkpoint"};
  if (args.empty() || args[0] == "-h" || args[0] == "--help") {
    (args.empty() ? err : out) << usage_text();
    return args.empty() ? 2 : 0;
  }
  const std::string cmd = args[0];
  if (std::find(kCommands.begin(), kCommands.end(), cmd) == kCommands.end()) {
    err << "unknown subcommand '" << cmd << "'\n" << usage_text();
    return 2;
  }

  cli_detail::Args a;
  CLI::App app("hetmarl " + cmd, "hetmarl " + cmd);
  app.add_option("--config", a.config, "experiment config file");
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", a.out, "output directory (or file for single-output commands)");
  app.add_option("--checkpoint", a.checkpoints, "checkpoint file or run directory")->take_all();
  app.add_option("--levels", a.levels, "noise levels a:b:n");
  int runs = 0;
  auto* runs_opt = app.add_option("--runs", runs, "evaluation runs");
  std::string profile;
  auto* profile_opt = app.add_option("--profile", profile, "training profile")
                          ->check(CLI::IsMember({"desk", "paper"}));

  std::vector<std::string> rest(args.begin() + 1, args.end());
  std::reverse(rest.begin(), rest.end());  // CLI11 consumes from the back
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help() << usage_text();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << usage_text();
    return 2;
  }
  if (*seed_opt) a.seed = seed;
  if (*runs_opt) a.runs = runs;
  if (*profile_opt) a.profile = profile;

  try {
    if (cmd == "train") return cli_detail::cmd_train(a, out, stop);
    if (cmd == "evaluate") return cli_detail::cmd_evaluate(a, out);
    if (cmd == "sweep") return cli_detail::cmd_sweep(a, out);
    if (cmd == "vector-field") return cli_detail::cmd_vector_field(a, out);
    if (cmd == "rollout") return cli_detail::cmd_rollout(a, out);
    return cli_detail::cmd_inspect(a, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace hetmarl
