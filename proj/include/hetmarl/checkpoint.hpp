#pragma once

// Binary checkpoints.
//
//   bytes 0..3   "HMCK"
//   u32          format version
//   u32          manifest length in bytes
//   manifest     JSON: scenario, sharing/typing modes, model config, tensor
//                table, trainer RNG state, iteration, KL coefficient
//   payload      little-endian float32 arrays, one per (set, tensor), in
//                manifest order, each column-major
//
// Parameters are stored as float32; a float model round-trips bit-exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetmarl/core.hpp"
#include "hetmarl/envs.hpp"
#include "hetmarl/nn.hpp"

namespace hetmarl {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'H', 'M', 'C', 'K'};

namespace detail {

inline nlohmann::json spec_to_json(const ScenarioSpec& s) {
  nlohmann::json j;
  j["scenario_id"] = to_string(s.id);
  j["n_agents"] = s.n_agents;
  j["horizon"] = s.horizon;
  j["comm_range"] = std::isfinite(s.comm_range) ? nlohmann::json(s.comm_range) : nlohmann::json("inf");
  j["workspace_half_width"] = s.workspace_half_width;
  j["corridor_length"] = s.corridor_length;
  j["corridor_width"] = s.corridor_width;
  j["recess_size"] = s.recess_size;
  j["goal_radius"] = s.goal_radius;
  j["goal_margin"] = s.goal_margin;
  j["spawn_jitter"] = s.spawn_jitter;
  j["wall_extent"] = s.wall_extent;
  j["wall_thickness"] = s.wall_thickness;
  j["gap_width_big"] = s.gap_width_big;
  j["gap_width_small"] = s.gap_width_small;
  j["gap_width"] = s.gap_width;
  j["gap_spacing"] = s.gap_spacing;
  j["link_length"] = s.link_length;
  j["spawn_offset"] = s.spawn_offset;
  j["spawn_range"] = s.spawn_range;
  j["link_point_mass"] = s.link_point_mass;
  j["link_point_mass_offset"] = s.link_point_mass_offset;
  j["energy_coeff"] = s.energy_coeff;
  j["positional_scale"] = s.positional_scale;
  j["final_reward"] = s.final_reward;
  j["collision_penalty"] = s.collision_penalty;
  j["curriculum_fraction"] = s.curriculum_fraction;
  j["shaping_scale"] = s.shaping_scale;
  j["goal_tolerance"] = s.goal_tolerance;
  j["orientation_tolerance"] = s.orientation_tolerance;
  j["masses"] = s.masses;
  j["radii"] = s.radii;
  j["max_force"] = s.max_force;
  j["max_speed"] = std::isfinite(s.max_speed) ? nlohmann::json(s.max_speed) : nlohmann::json("inf");
  j["physics"] = {{"dt", s.physics.dt},
                  {"linear_friction", s.physics.linear_friction},
                  {"drag", s.physics.drag},
                  {"collision_stiffness", s.physics.collision_stiffness},
                  {"max_acceleration", s.physics.max_acceleration}};
  return j;
}

inline double json_real(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return kInf;
  return j.get<double>();
}

inline ScenarioSpec spec_from_json(const nlohmann::json& j) {
  ScenarioSpec s = ScenarioSpec::defaults(parse_scenario_id(j.at("scenario_id").get<std::string>()));
  s.n_agents = j.at("n_agents");
  s.horizon = j.at("horizon");
  s.comm_range = json_real(j.at("comm_range"));
  s.workspace_half_width = j.at("workspace_half_width");
  s.corridor_length = j.at("corridor_length");
  s.corridor_width = j.at("corridor_width");
  s.recess_size = j.at("recess_size");
  s.goal_radius = j.at("goal_radius");
  s.goal_margin = j.at("goal_margin");
  s.spawn_jitter = j.at("spawn_jitter");
  s.wall_extent = j.at("wall_extent");
  s.wall_thickness = j.at("wall_thickness");
  s.gap_width_big = j.at("gap_width_big");
  s.gap_width_small = j.at("gap_width_small");
  s.gap_width = j.at("gap_width");
  s.gap_spacing = j.at("gap_spacing");
  s.link_length = j.at("link_length");
  s.spawn_offset = j.at("spawn_offset");
  s.spawn_range = j.at("spawn_range");
  s.link_point_mass = j.at("link_point_mass");
  s.link_point_mass_offset = j.at("link_point_mass_offset");
  s.energy_coeff = j.at("energy_coeff");
  s.positional_scale = j.at("positional_scale");
  s.final_reward = j.at("final_reward");
  s.collision_penalty = j.at("collision_penalty");
  s.curriculum_fraction = j.at("curriculum_fraction");
  s.shaping_scale = j.at("shaping_scale");
  s.goal_tolerance = j.at("goal_tolerance");
  s.orientation_tolerance = j.at("orientation_tolerance");
  s.masses = j.at("masses").get<std::vector<double>>();
  s.radii = j.at("radii").get<std::vector<double>>();
  s.max_force = j.at("max_force");
  s.max_speed = json_real(j.at("max_speed"));
  const auto& p = j.at("physics");
  s.physics.dt = p.at("dt");
  s.physics.linear_friction = p.at("linear_friction");
  s.physics.drag = p.at("drag");
  s.physics.collision_stiffness = p.at("collision_stiffness");
  s.physics.max_acceleration = p.at("max_acceleration");
  return s;
}

inline nlohmann::json model_to_json(const ModelConfig& c) {
  return {{"n_agents", c.n_agents},
          {"obs_dim", c.obs.dim},
          {"spatial_dims", c.obs.spatial_dims},
          {"pos_offset", c.obs.pos_offset},
          {"vel_offset", c.obs.vel_offset},
          {"action_dim", c.action_dim},
          {"encoder_widths", c.encoder_widths},
          {"gnn_hidden", c.gnn_hidden},
          {"hidden_width", c.hidden_width},
          {"decoder_hidden", c.decoder_hidden},
          {"aggregation", to_string(c.aggregation)},
          {"sharing_mode", to_string(c.sharing)},
          {"log_std_init", c.log_std_init}};
}

inline ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_agents = j.at("n_agents");
  c.obs.dim = j.at("obs_dim");
  c.obs.spatial_dims = j.at("spatial_dims");
  c.obs.pos_offset = j.at("pos_offset");
  c.obs.vel_offset = j.at("vel_offset");
  c.action_dim = j.at("action_dim");
  c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  c.gnn_hidden = j.at("gnn_hidden");
  c.hidden_width = j.at("hidden_width");
  c.decoder_hidden = j.at("decoder_hidden");
  c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  c.sharing = parse_sharing_mode(j.at("sharing_mode").get<std::string>());
  c.log_std_init = j.at("log_std_init");
  return c;
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>((v >> (8 * k)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("checkpoint: truncated header");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
  return v;
}

}  // namespace detail

// Everything needed to rebuild a policy and resume its trainer.
struct Checkpoint {
  ScenarioSpec scenario;
  TypingMode typing = TypingMode::kNone;
  ModelConfig model;
  std::vector<std::vector<float>> sets;
  std::string rng_state;  // textual std::mt19937_64 state
  std::int64_t iteration = 0;
  double kl_coeff = 0.0;
  bool curriculum_on = false;
  double curriculum_ema = 0.0;

  bool operator==(const Checkpoint&) const = default;
};

inline std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  if (s.empty()) return rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw ConfigError("checkpoint: corrupt RNG state");
  return rng;
}

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  const ParamLayout layout = GnnModel<float>(ck.model).layout();
  if (static_cast<int>(ck.sets.size()) != ck.model.num_sets())
    throw ShapeError("checkpoint: wrong number of parameter sets");
  nlohmann::json m;
  m["format_version"] = kCheckpointVersion;
  m["scenario_id"] = to_string(ck.scenario.id);
  m["scenario"] = detail::spec_to_json(ck.scenario);
  m["sharing_mode"] = to_string(ck.model.sharing);
  m["typing_mode"] = to_string(ck.typing);
  m["model"] = detail::model_to_json(ck.model);
  m["rng_state"] = ck.rng_state;
  m["iteration"] = ck.iteration;
  m["kl_coeff"] = ck.kl_coeff;
  m["curriculum_on"] = ck.curriculum_on;
  m["curriculum_ema"] = ck.curriculum_ema;
  nlohmann::json tensors = nlohmann::json::array();
  for (int s = 0; s < static_cast<int>(ck.sets.size()); ++s) {
    if (ck.sets[s].size() != layout.total()) throw ShapeError("checkpoint: parameter set size");
    for (const TensorInfo& t : layout.tensors()) {
      tensors.push_back({{"set", s}, {"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", t.offset}});
    }
  }
  m["tensors"] = tensors;
  const std::string manifest = m.dump();
  os.write(kCheckpointMagic, 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(manifest.size()));
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& set : ck.sets) {
    for (float v : set) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ConfigError("checkpoint: bad magic");
  const std::uint32_t version = detail::get_u32(is);
  if (version != kCheckpointVersion)
    throw ConfigError("checkpoint: unsupported format version " + std::to_string(version));
  const std::uint32_t len = detail::get_u32(is);
  std::string manifest(len, '\0');
  if (!is.read(manifest.data(), len)) throw ConfigError("checkpoint: truncated manifest");
  Checkpoint ck;
  try {
    const nlohmann::json m = nlohmann::json::parse(manifest);
    ck.scenario = detail::spec_from_json(m.at("scenario"));
    ck.typing = parse_typing_mode(m.at("typing_mode").get<std::string>());
    ck.model = detail::model_from_json(m.at("model"));
    ck.rng_state = m.at("rng_state").get<std::string>();
    ck.iteration = m.at("iteration");
    ck.kl_coeff = m.at("kl_coeff");
    ck.curriculum_on = m.value("curriculum_on", false);
    ck.curriculum_ema = m.value("curriculum_ema", 0.0);
    const ParamLayout layout = GnnModel<float>(ck.model).layout();
    const auto& tensors = m.at("tensors");
    if (tensors.size() != layout.tensors().size() * ck.model.num_sets())
      throw ConfigError("checkpoint: tensor table does not match the model config");
    std::size_t k = 0;
    for (int s = 0; s < ck.model.num_sets(); ++s) {
      for (const TensorInfo& t : layout.tensors()) {
        const auto& e = tensors[k++];
        if (e.at("set") != s || e.at("name") != t.name || e.at("shape")[0] != t.rows ||
            e.at("shape")[1] != t.cols)
          throw ConfigError("checkpoint: tensor '" + t.name + "' does not match the model config");
      }
    }
    ck.sets.assign(ck.model.num_sets(), std::vector<float>(layout.total()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  for (auto& set : ck.sets) {
    for (float& v : set) {
      unsigned char b[4];
      if (!is.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("checkpoint: truncated payload");
      std::uint32_t u = 0;
      for (int q = 0; q < 4; ++q) u |= static_cast<std::uint32_t>(b[q]) << (8 * q);
      v = std::bit_cast<float>(u);
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ConfigError("checkpoint: trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + tmp.string());
    write_checkpoint(os, ck);
    os.flush();
    if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Accepts a checkpoint file or a run directory holding a `latest` pointer.
inline std::filesystem::path resolve_checkpoint_path(const std::filesystem::path& p) {
  if (std::filesystem::is_directory(p)) {
    std::ifstream in(p / "latest");
    std::string name;
    if (!(in >> name)) throw ConfigError("checkpoint: no 'latest' pointer in " + p.string());
    return p / name;
  }
  return p;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::filesystem::path real = resolve_checkpoint_path(path);
  std::ifstream is(real, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open " + real.string());
  return read_checkpoint(is);
}

inline std::string checkpoint_name(std::int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ck_%06lld.bin", static_cast<long long>(iteration));
  return buf;
}

inline void write_latest_pointer(const std::filesystem::path& dir, const std::string& name) {
  std::ofstream os(dir / "latest", std::ios::trunc);
  os << name << "\n";
  if (!os) throw std::runtime_error("checkpoint: cannot write latest pointer in " + dir.string());
}

template <typename T>
std::vector<std::vector<float>> export_params(const GnnModel<T>& m) {
  std::vector<std::vector<float>> out;
  for (const auto& s : m.sets()) out.emplace_back(s.begin(), s.end());
  return out;
}

template <typename T>
void import_params(GnnModel<T>& m, const std::vector<std::vector<float>>& sets) {
  if (static_cast<int>(sets.size()) != m.num_sets()) throw ShapeError("import_params: set count");
  for (int s = 0; s < m.num_sets(); ++s) {
    if (sets[s].size() != m.size_per_set()) throw ShapeError("import_params: set size");
    for (std::size_t k = 0; k < sets[s].size(); ++k) m.params(s)[k] = static_cast<T>(sets[s][k]);
  }
}

}  // namespace hetmarl
