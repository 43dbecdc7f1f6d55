#pragma once

// Experiment config files: flat [tables] of `key = value` lines, `#`
// comments, values are numbers, true/false, "strings", inf, or [lists].
// Parsing is strict; every error names the file and line.
//
//   seed = 3
//   [scenario]
//   id = "A"
//   masses = [2.0, 0.5]
//   [model]
//   sharing_mode = "hetgppo"
//   [train]
//   profile = "desk"
//   iterations = 200

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "hetmarl/core.hpp"
#include "hetmarl/envs.hpp"
#include "hetmarl/evaluation.hpp"
#include "hetmarl/nn.hpp"
#include "hetmarl/training.hpp"

namespace hetmarl {

struct EvalConfig {
  std::vector<double> noise_levels{0.0, 0.3, 0.6, 1.0};
  int runs = 20;
  double noise = 0.0;
  double vf_min = -1.0;
  double vf_max = 1.0;
  int vf_resolution = 21;
  bool sample_actions = false;
  int anchor = -1;  // -1: best level-0 model
};

struct IoConfig {
  std::string output_dir = "runs/default";
  int checkpoint_every = 10;
};

struct ExperimentConfig {
  ScenarioSpec scenario = ScenarioSpec::defaults(ScenarioId::kA);
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  IoConfig io;
  std::uint64_t seed = 0;
  // "table.key" -> where the value came from.
  std::map<std::string, std::string> provenance;
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> profile;
  std::optional<std::string> output_dir;
};

namespace config_detail {

struct Value {
  enum Kind { kNumber, kBool, kString, kList } kind = kNumber;
  double number = 0.0;
  bool boolean = false;
  std::string text;
  std::vector<Value> list;
};

struct Entry {
  Value value;
  int line = 0;
};

struct Raw {
  std::string source;
  // table -> key -> entry; top-level keys live in table "".
  std::map<std::string, std::map<std::string, Entry>> tables;
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

class ValueParser {
 public:
  ValueParser(const std::string& text, std::function<ConfigError(const std::string&)> err)
      : s_(text), err_(std::move(err)) {}

  Value parse() {
    Value v = value();
    skip_ws();
    if (pos_ != s_.size()) throw err_("unexpected trailing characters in value");
    return v;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  Value value() {
    skip_ws();
    if (pos_ >= s_.size()) throw err_("missing value");
    const char c = s_[pos_];
    Value v;
    if (c == '"') {
      ++pos_;
      v.kind = Value::kString;
      while (pos_ < s_.size() && s_[pos_] != '"') {
        if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
        v.text += s_[pos_++];
      }
      if (pos_ >= s_.size()) throw err_("unterminated string");
      ++pos_;
      return v;
    }
    if (c == '[') {
      ++pos_;
      v.kind = Value::kList;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      while (true) {
        v.list.push_back(value());
        skip_ws();
        if (pos_ >= s_.size()) throw err_("unterminated list");
        if (s_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (s_[pos_] == ']') {
          ++pos_;
          break;
        }
        throw err_("expected ',' or ']' in list");
      }
      return v;
    }
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != ' ' && s_[end] != '\t') ++end;
    const std::string tok = s_.substr(pos_, end - pos_);
    pos_ = end;
    if (tok == "true" || tok == "false") {
      v.kind = Value::kBool;
      v.boolean = tok == "true";
      return v;
    }
    if (tok == "inf" || tok == "+inf") {
      v.number = kInf;
      return v;
    }
    try {
      std::size_t used = 0;
      v.number = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw err_("cannot parse value '" + tok + "' (strings need double quotes)");
    }
    return v;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  std::function<ConfigError(const std::string&)> err_;
};

inline Raw parse_raw(std::istream& in, const std::string& source) {
  Raw raw;
  raw.source = source;
  std::string table;
  std::string line;
  int lineno = 0;
  raw.tables[""];
  while (std::getline(in, line)) {
    ++lineno;
    auto err = [&](const std::string& msg) {
      return ConfigError(source + ":" + std::to_string(lineno) + ": " + msg);
    };
    // Strip comments outside strings.
    bool in_str = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
      if (line[k] == '"') in_str = !in_str;
      if (line[k] == '#' && !in_str) {
        line.resize(k);
        break;
      }
    }
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw err("malformed table header");
      table = trim(t.substr(1, t.size() - 2));
      if (table.empty()) throw err("empty table name");
      raw.tables[table];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw err("expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw err("missing key");
    for (char ch : key)
      if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_')) throw err("invalid key '" + key + "'");
    auto& tab = raw.tables[table];
    if (tab.count(key)) throw err("duplicate key '" + key + "'");
    tab[key] = {ValueParser(trim(t.substr(eq + 1)), err).parse(), lineno};
  }
  return raw;
}

// Typed accessors that know where a value came from.
class Binder {
 public:
  Binder(const Raw& raw, std::map<std::string, std::string>& prov) : raw_(raw), prov_(prov) {}

  ConfigError error(const std::string& table, const std::string& key, const std::string& msg) const {
    const Entry* e = find(table, key);
    const std::string where = raw_.source + (e ? ":" + std::to_string(e->line) : "");
    return ConfigError(where + ": " + (table.empty() ? key : table + "." + key) + ": " + msg);
  }

  const Entry* find(const std::string& table, const std::string& key) const {
    auto t = raw_.tables.find(table);
    if (t == raw_.tables.end()) return nullptr;
    auto k = t->second.find(key);
    return k == t->second.end() ? nullptr : &k->second;
  }

  void mark(const std::string& table, const std::string& key) {
    used_.insert(table + "." + key);
    const Entry* e = find(table, key);
    prov_[table.empty() ? key : table + "." + key] = raw_.source + ":" + std::to_string(e->line);
  }

  bool number(const std::string& table, const std::string& key, double& out) {
    const Entry* e = find(table, key);
    if (!e) return false;
    if (e->value.kind != Value::kNumber) throw error(table, key, "expected a number");
    out = e->value.number;
    mark(table, key);
    return true;
  }

  bool integer(const std::string& table, const std::string& key, int& out) {
    double d = 0;
    if (!number(table, key, d)) return false;
    if (d != std::floor(d) || std::abs(d) > 2e9) throw error(table, key, "expected an integer");
    out = static_cast<int>(d);
    return true;
  }

  bool u64(const std::string& table, const std::string& key, std::uint64_t& out) {
    double d = 0;
    if (!number(table, key, d)) return false;
    if (d != std::floor(d) || d < 0 || d > 9.007199254740992e15) throw error(table, key, "expected a non-negative integer");
    out = static_cast<std::uint64_t>(d);
    return true;
  }

  bool boolean(const std::string& table, const std::string& key, bool& out) {
    const Entry* e = find(table, key);
    if (!e) return false;
    if (e->value.kind != Value::kBool) throw error(table, key, "expected true or false");
    out = e->value.boolean;
    mark(table, key);
    return true;
  }

  bool string(const std::string& table, const std::string& key, std::string& out) {
    const Entry* e = find(table, key);
    if (!e) return false;
    if (e->value.kind != Value::kString) throw error(table, key, "expected a quoted string");
    out = e->value.text;
    mark(table, key);
    return true;
  }

  bool numbers(const std::string& table, const std::string& key, std::vector<double>& out) {
    const Entry* e = find(table, key);
    if (!e) return false;
    if (e->value.kind != Value::kList) throw error(table, key, "expected a list of numbers");
    std::vector<double> v;
    for (const Value& x : e->value.list) {
      if (x.kind != Value::kNumber) throw error(table, key, "expected a list of numbers");
      v.push_back(x.number);
    }
    out = v;
    mark(table, key);
    return true;
  }

  bool integers(const std::string& table, const std::string& key, std::vector<int>& out) {
    std::vector<double> d;
    if (!numbers(table, key, d)) return false;
    out.clear();
    for (double x : d) {
      if (x != std::floor(x)) throw error(table, key, "expected a list of integers");
      out.push_back(static_cast<int>(x));
    }
    return true;
  }

  // Every key that was never consumed is an error.
  void reject_unknown() const {
    static const std::vector<std::string> known_tables{"", "scenario", "physics", "model", "train", "eval", "io"};
    for (const auto& [table, keys] : raw_.tables) {
      if (std::find(known_tables.begin(), known_tables.end(), table) == known_tables.end()) {
        const int line = keys.empty() ? 0 : keys.begin()->second.line;
        throw ConfigError(raw_.source + ":" + std::to_string(line) + ": unknown table [" + table + "]");
      }
      for (const auto& [key, e] : keys) {
        if (!used_.count(table + "." + key))
          throw ConfigError(raw_.source + ":" + std::to_string(e.line) + ": unknown key '" +
                            (table.empty() ? key : table + "." + key) + "'");
      }
    }
  }

 private:
  const Raw& raw_;
  std::map<std::string, std::string>& prov_;
  std::set<std::string> used_;
};

}  // namespace config_detail

inline ExperimentConfig resolve_config(const config_detail::Raw& raw, const ConfigOverrides& ov = {}) {
  ExperimentConfig c;
  config_detail::Binder b(raw, c.provenance);

  b.u64("", "seed", c.seed);

  std::string id = "A";
  if (!b.string("scenario", "id", id)) c.provenance["scenario.id"] = "default";
  try {
    c.scenario = ScenarioSpec::defaults(parse_scenario_id(id));
  } catch (const ConfigError& e) {
    throw b.error("scenario", "id", e.what());
  }
  ScenarioSpec& s = c.scenario;
  b.integer("scenario", "n_agents", s.n_agents);
  b.integer("scenario", "horizon", s.horizon);
  b.number("scenario", "comm_range", s.comm_range);
  for (auto [key, field] : std::initializer_list<std::pair<const char*, double*>>{
           {"workspace_half_width", &s.workspace_half_width},
           {"corridor_length", &s.corridor_length},
           {"corridor_width", &s.corridor_width},
           {"recess_size", &s.recess_size},
           {"goal_radius", &s.goal_radius},
           {"goal_margin", &s.goal_margin},
           {"spawn_jitter", &s.spawn_jitter},
           {"wall_extent", &s.wall_extent},
           {"wall_thickness", &s.wall_thickness},
           {"gap_width_big", &s.gap_width_big},
           {"gap_width_small", &s.gap_width_small},
           {"gap_width", &s.gap_width},
           {"gap_spacing", &s.gap_spacing},
           {"link_length", &s.link_length},
           {"spawn_offset", &s.spawn_offset},
           {"spawn_range", &s.spawn_range},
           {"link_point_mass", &s.link_point_mass},
           {"link_point_mass_offset", &s.link_point_mass_offset},
           {"energy_coeff", &s.energy_coeff},
           {"positional_scale", &s.positional_scale},
           {"final_reward", &s.final_reward},
           {"collision_penalty", &s.collision_penalty},
           {"curriculum_fraction", &s.curriculum_fraction},
           {"shaping_scale", &s.shaping_scale},
           {"goal_tolerance", &s.goal_tolerance},
           {"orientation_tolerance", &s.orientation_tolerance},
           {"max_force", &s.max_force},
           {"max_speed", &s.max_speed}})
    b.number("scenario", key, *field);
  b.numbers("scenario", "masses", s.masses);
  b.numbers("scenario", "radii", s.radii);
  b.number("physics", "dt", s.physics.dt);
  b.number("physics", "linear_friction", s.physics.linear_friction);
  b.number("physics", "drag", s.physics.drag);
  b.number("physics", "collision_stiffness", s.physics.collision_stiffness);
  b.number("physics", "max_acceleration", s.physics.max_acceleration);

  std::string profile = "desk";
  if (ov.profile) {
    profile = *ov.profile;
    c.provenance["train.profile"] = "command line";
  } else if (!b.string("train", "profile", profile)) {
    c.provenance["train.profile"] = "default";
  }
  if (ov.profile) {
    std::string ignored;
    b.string("train", "profile", ignored);
    c.provenance["train.profile"] = "command line";
  }
  try {
    c.train = TrainConfig::for_profile(profile);
  } catch (const ConfigError& e) {
    throw b.error("train", "profile", e.what());
  }
  TrainConfig& t = c.train;
  b.integer("train", "iterations", t.iterations);
  b.integer("train", "batch_size", t.batch_size);
  b.integer("train", "minibatch_size", t.minibatch_size);
  b.integer("train", "sgd_iters", t.sgd_iters);
  b.number("train", "lr", t.lr);
  b.number("train", "clip_epsilon", t.clip_epsilon);
  b.number("train", "gamma", t.gamma);
  b.number("train", "gae_lambda", t.gae_lambda);
  b.number("train", "entropy_coeff", t.entropy_coeff);
  b.number("train", "kl_coeff", t.kl_coeff);
  b.number("train", "kl_target", t.kl_target);
  b.number("train", "value_coeff", t.value_coeff);
  b.number("train", "max_grad_norm", t.max_grad_norm);
  b.integer("train", "n_env_workers", t.n_env_workers);
  b.integer("train", "envs_per_worker", t.envs_per_worker);
  b.integer("train", "episodes_per_iteration", t.episodes_per_iteration);
  b.number("train", "obs_noise_train", t.obs_noise_train);
  b.number("train", "curriculum_ema_alpha", t.curriculum_ema_alpha);

  ModelConfig& m = c.model;
  std::string text;
  if (b.string("model", "sharing_mode", text)) {
    try {
      m.sharing = parse_sharing_mode(text);
    } catch (const ConfigError& e) {
      throw b.error("model", "sharing_mode", e.what());
    }
  }
  TypingMode typing = TypingMode::kNone;
  if (b.string("model", "typing_mode", text)) {
    try {
      typing = parse_typing_mode(text);
    } catch (const ConfigError& e) {
      throw b.error("model", "typing_mode", e.what());
    }
  }
  if (b.string("model", "aggregation", text)) {
    try {
      m.aggregation = parse_aggregation(text);
    } catch (const ConfigError& e) {
      throw b.error("model", "aggregation", e.what());
    }
  }
  b.integers("model", "encoder_widths", m.encoder_widths);
  b.integer("model", "gnn_hidden", m.gnn_hidden);
  b.integer("model", "hidden_width", m.hidden_width);
  b.integer("model", "decoder_hidden", m.decoder_hidden);
  b.number("model", "log_std_init", m.log_std_init);

  EvalConfig& e = c.eval;
  if (const auto* lv = b.find("eval", "noise_levels")) {
    if (lv->value.kind == config_detail::Value::kString) {
      try {
        e.noise_levels = parse_levels(lv->value.text);
      } catch (const ConfigError& err) {
        throw b.error("eval", "noise_levels", err.what());
      }
      b.mark("eval", "noise_levels");
    } else {
      b.numbers("eval", "noise_levels", e.noise_levels);
    }
  }
  b.integer("eval", "runs", e.runs);
  b.number("eval", "noise", e.noise);
  b.number("eval", "vf_min", e.vf_min);
  b.number("eval", "vf_max", e.vf_max);
  b.integer("eval", "vf_resolution", e.vf_resolution);
  b.boolean("eval", "sample_actions", e.sample_actions);
  b.integer("eval", "anchor", e.anchor);

  b.string("io", "output_dir", c.io.output_dir);
  b.integer("io", "checkpoint_every", c.io.checkpoint_every);

  b.reject_unknown();

  if (ov.seed) {
    c.seed = *ov.seed;
    c.provenance["seed"] = "command line";
  }
  if (ov.output_dir) {
    c.io.output_dir = *ov.output_dir;
    c.provenance["io.output_dir"] = "command line";
  }

  // Cross-table wiring.
  t.seed = c.seed;
  t.sharing = m.sharing;
  t.typing = typing;
  t.checkpoint_every = c.io.checkpoint_every;
  c.model = model_config_for(s, typing, m.sharing, m);

  auto wrap = [&](const std::function<void()>& f) {
    try {
      f();
    } catch (const ConfigError& err) {
      throw ConfigError(raw.source + ": " + err.what());
    }
  };
  wrap([&] { s.validate(); });
  wrap([&] { t.validate(); });
  wrap([&] { check_levels(e.noise_levels); });
  if (e.runs < 0 || e.vf_resolution < 1 || e.noise < 0.0)
    throw ConfigError(raw.source + ": eval: runs >= 0, vf_resolution >= 1 and noise >= 0 required");
  if (c.io.checkpoint_every < 0) throw ConfigError(raw.source + ": io.checkpoint_every must be >= 0");
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<string>",
                                          const ConfigOverrides& ov = {}) {
  std::istringstream in(text);
  return resolve_config(config_detail::parse_raw(in, source), ov);
}

inline ExperimentConfig parse_config(const std::filesystem::path& path, const ConfigOverrides& ov = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return resolve_config(config_detail::parse_raw(in, path.string()), ov);
}

// --- snapshot ----------------------------------------------------------------

namespace config_detail {

inline std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + num(v[k]);
  return s + "]";
}

inline std::string list(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + std::to_string(v[k]);
  return s + "]";
}

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace config_detail

// Fully resolved config; parsing it back yields the same experiment. Each
// line notes where its value came from.
inline std::string config_snapshot(const ExperimentConfig& c) {
  using namespace config_detail;
  std::ostringstream os;
  auto line = [&](const std::string& table, const std::string& key, const std::string& value) {
    const std::string full = table.empty() ? key : table + "." + key;
    auto it = c.provenance.find(full);
    std::string from = it != c.provenance.end() ? it->second : "default";
    if (table == "train" && from == "default" && c.train.profile == "paper") from = "paper profile";
    os << key << " = " << value << "  # " << from << "\n";
  };
  const ScenarioSpec& s = c.scenario;
  const TrainConfig& t = c.train;
  const ModelConfig& m = c.model;
  os << "# resolved experiment config\n";
  line("", "seed", std::to_string(c.seed));
  os << "\n[scenario]\n";
  line("scenario", "id", quote(to_string(s.id)));
  line("scenario", "n_agents", std::to_string(s.n_agents));
  line("scenario", "horizon", std::to_string(s.horizon));
  line("scenario", "comm_range", num(s.comm_range));
  for (auto [key, v] : std::initializer_list<std::pair<const char*, double>>{
           {"workspace_half_width", s.workspace_half_width}, {"corridor_length", s.corridor_length},
           {"corridor_width", s.corridor_width}, {"recess_size", s.recess_size},
           {"goal_radius", s.goal_radius}, {"goal_margin", s.goal_margin},
           {"spawn_jitter", s.spawn_jitter}, {"wall_extent", s.wall_extent},
           {"wall_thickness", s.wall_thickness}, {"gap_width_big", s.gap_width_big},
           {"gap_width_small", s.gap_width_small}, {"gap_width", s.gap_width},
           {"gap_spacing", s.gap_spacing}, {"link_length", s.link_length},
           {"spawn_offset", s.spawn_offset}, {"spawn_range", s.spawn_range},
           {"link_point_mass", s.link_point_mass}, {"link_point_mass_offset", s.link_point_mass_offset},
           {"energy_coeff", s.energy_coeff}, {"positional_scale", s.positional_scale},
           {"final_reward", s.final_reward}, {"collision_penalty", s.collision_penalty},
           {"curriculum_fraction", s.curriculum_fraction}, {"shaping_scale", s.shaping_scale},
           {"goal_tolerance", s.goal_tolerance}, {"orientation_tolerance", s.orientation_tolerance},
           {"max_force", s.max_force}, {"max_speed", s.max_speed}})
    line("scenario", key, num(v));
  line("scenario", "masses", list(s.masses));
  line("scenario", "radii", list(s.radii));
  os << "\n[physics]\n";
  line("physics", "dt", num(s.physics.dt));
  line("physics", "linear_friction", num(s.physics.linear_friction));
  line("physics", "drag", num(s.physics.drag));
  line("physics", "collision_stiffness", num(s.physics.collision_stiffness));
  line("physics", "max_acceleration", num(s.physics.max_acceleration));
  os << "\n[model]\n";
  line("model", "sharing_mode", quote(to_string(m.sharing)));
  line("model", "typing_mode", quote(to_string(t.typing)));
  line("model", "aggregation", quote(to_string(m.aggregation)));
  line("model", "encoder_widths", list(m.encoder_widths));
  line("model", "gnn_hidden", std::to_string(m.gnn_hidden));
  line("model", "hidden_width", std::to_string(m.hidden_width));
  line("model", "decoder_hidden", std::to_string(m.decoder_hidden));
  line("model", "log_std_init", num(m.log_std_init));
  os << "\n[train]\n";
  line("train", "profile", quote(t.profile));
  line("train", "iterations", std::to_string(t.iterations));
  line("train", "batch_size", std::to_string(t.batch_size));
  line("train", "minibatch_size", std::to_string(t.minibatch_size));
  line("train", "sgd_iters", std::to_string(t.sgd_iters));
  line("train", "lr", num(t.lr));
  line("train", "clip_epsilon", num(t.clip_epsilon));
  line("train", "gamma", num(t.gamma));
  line("train", "gae_lambda", num(t.gae_lambda));
  line("train", "entropy_coeff", num(t.entropy_coeff));
  line("train", "kl_coeff", num(t.kl_coeff));
  line("train", "kl_target", num(t.kl_target));
  line("train", "value_coeff", num(t.value_coeff));
  line("train", "max_grad_norm", num(t.max_grad_norm));
  line("train", "n_env_workers", std::to_string(t.n_env_workers));
  line("train", "envs_per_worker", std::to_string(t.envs_per_worker));
  line("train", "episodes_per_iteration", std::to_string(t.episodes_per_iteration));
  line("train", "obs_noise_train", num(t.obs_noise_train));
  line("train", "curriculum_ema_alpha", num(t.curriculum_ema_alpha));
  os << "\n[eval]\n";
  line("eval", "noise_levels", list(c.eval.noise_levels));
  line("eval", "runs", std::to_string(c.eval.runs));
  line("eval", "noise", num(c.eval.noise));
  line("eval", "vf_min", num(c.eval.vf_min));
  line("eval", "vf_max", num(c.eval.vf_max));
  line("eval", "vf_resolution", std::to_string(c.eval.vf_resolution));
  line("eval", "sample_actions", c.eval.sample_actions ? "true" : "false");
  line("eval", "anchor", std::to_string(c.eval.anchor));
  os << "\n[io]\n";
  line("io", "output_dir", quote(c.io.output_dir));
  line("io", "checkpoint_every", std::to_string(c.io.checkpoint_every));
  return os.str();
}

inline void write_config_snapshot(const std::filesystem::path& path, const ExperimentConfig& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  os << config_snapshot(c);
  if (!os) throw std::runtime_error("cannot write config snapshot " + path.string());
}

}  // namespace hetmarl
