#pragma once

// Framework-free GNN actor-critic.
//
// Every agent i owns (or, in shared mode, aliases) one parameter set with an
// observation encoder, a self MLP psi, a message MLP phi, a policy decoder,
// a value decoder and a state-independent log-std vector:
//
//   z_i = enc_i(o_i without absolute position)
//   e_ij = (p_i - p_j) || (v_i - v_j)
//   h_i = psi_i(z_i) + AGG_{j in N_i} phi_i(z_j || e_ij)
//   mean_i = pol_i(h_i),  value_i = val_i(h_i)
//
// Forward passes record every layer's activations; backward walks that
// record in reverse. Matrices are (features x batch), column-major.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "hetmarl/core.hpp"
#include "hetmarl/envs.hpp"

namespace hetmarl {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowArray = Eigen::Array<T, 1, Eigen::Dynamic>;

enum class SharingMode { kShared, kPerAgent };
enum class Aggregation { kSum, kMean };

inline std::string to_string(SharingMode m) { return m == SharingMode::kShared ? "gppo" : "hetgppo"; }
inline SharingMode parse_sharing_mode(std::string_view s) {
  if (s == "gppo" || s == "shared") return SharingMode::kShared;
  if (s == "hetgppo" || s == "per_agent") return SharingMode::kPerAgent;
  throw ConfigError("unknown sharing_mode '" + std::string(s) + "'");
}
inline std::string to_string(Aggregation a) { return a == Aggregation::kSum ? "sum" : "mean"; }
inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "sum") return Aggregation::kSum;
  if (s == "mean") return Aggregation::kMean;
  throw ConfigError("unknown aggregation '" + std::string(s) + "'");
}

inline constexpr int kEdgeDim = 4;
inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 2.0;

struct ModelConfig {
  int n_agents = 2;
  ObsLayout obs;
  int action_dim = 2;
  std::vector<int> encoder_widths{64, 64};  // last entry is the embedding width
  int gnn_hidden = 64;
  int hidden_width = 64;  // width of h_i
  int decoder_hidden = 64;
  Aggregation aggregation = Aggregation::kSum;
  SharingMode sharing = SharingMode::kPerAgent;
  double log_std_init = 0.0;

  int encoder_input_dim() const { return obs.dim - obs.spatial_dims; }
  int embedding_dim() const { return encoder_widths.back(); }
  int num_sets() const { return sharing == SharingMode::kShared ? 1 : n_agents; }

  void validate() const {
    if (n_agents < 1) throw ConfigError("model: n_agents must be >= 1");
    if (obs.dim <= obs.spatial_dims || obs.spatial_dims < 1 || obs.spatial_dims > 2)
      throw ConfigError("model: invalid observation layout");
    if (action_dim < 1) throw ConfigError("model: action_dim must be >= 1");
    if (encoder_widths.empty()) throw ConfigError("model: encoder needs at least one layer");
    for (int w : encoder_widths)
      if (w < 1) throw ConfigError("model: widths must be >= 1");
    if (gnn_hidden < 1 || hidden_width < 1 || decoder_hidden < 1)
      throw ConfigError("model: widths must be >= 1");
  }
  bool operator==(const ModelConfig& o) const {
    return n_agents == o.n_agents && obs.dim == o.obs.dim &&
           obs.spatial_dims == o.obs.spatial_dims && obs.pos_offset == o.obs.pos_offset &&
           obs.vel_offset == o.obs.vel_offset && action_dim == o.action_dim &&
           encoder_widths == o.encoder_widths && gnn_hidden == o.gnn_hidden &&
           hidden_width == o.hidden_width && decoder_hidden == o.decoder_hidden &&
           aggregation == o.aggregation && sharing == o.sharing &&
           log_std_init == o.log_std_init;
  }
};

struct TensorInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Flat parameter storage. The aligned base pins every tensor's alignment to
// its layout offset, so vectorised reductions sum in the same order no
// matter where the heap put the buffer.
template <typename T>
using ParamVector = std::vector<T, Eigen::aligned_allocator<T>>;

// Named tensors laid out in one flat buffer.
class ParamLayout {
 public:
  int add(std::string name, int rows, int cols) {
    tensors_.push_back({std::move(name), rows, cols, total_});
    total_ += static_cast<std::size_t>(rows) * cols;
    return static_cast<int>(tensors_.size()) - 1;
  }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& operator[](int i) const { return tensors_[i]; }
  std::size_t total() const { return total_; }

 private:
  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

struct MlpDesc {
  std::vector<int> weights;
  std::vector<int> biases;
  bool tanh_output = false;
};

namespace detail {

inline MlpDesc add_mlp(ParamLayout& layout, const std::string& prefix, int in,
                       const std::vector<int>& widths, bool tanh_output) {
  MlpDesc d;
  d.tanh_output = tanh_output;
  int prev = in;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    const std::string p = prefix + ".l" + std::to_string(k);
    d.weights.push_back(layout.add(p + ".weight", widths[k], prev));
    d.biases.push_back(layout.add(p + ".bias", widths[k], 1));
    prev = widths[k];
  }
  return d;
}

}  // namespace detail

template <typename T>
struct MlpTrace {
  // acts[0] is the input; acts[k + 1] is layer k's output after activation.
  std::vector<Matrix<T>> acts;
};

template <typename T>
Matrix<T> mlp_forward(const MlpDesc& d, const ParamLayout& layout, const T* params,
                      const std::type_identity_t<Matrix<T>>& x,
                      std::type_identity_t<MlpTrace<T>>* trace) {
  const int n = static_cast<int>(d.weights.size());
  Matrix<T> cur = x;
  if (trace) {
    trace->acts.clear();
    trace->acts.reserve(n + 1);
    trace->acts.push_back(x);
  }
  for (int k = 0; k < n; ++k) {
    const TensorInfo& wi = layout[d.weights[k]];
    const TensorInfo& bi = layout[d.biases[k]];
    if (cur.rows() != wi.cols) throw ShapeError("mlp: input width mismatch for " + wi.name);
    Eigen::Map<const Matrix<T>> w(params + wi.offset, wi.rows, wi.cols);
    Eigen::Map<const Vector<T>> b(params + bi.offset, bi.rows);
    Matrix<T> y(wi.rows, cur.cols());
    y.noalias() = w * cur;
    y.colwise() += b;
    if (k + 1 < n || d.tanh_output) y = y.array().tanh();
    cur = std::move(y);
    if (trace) trace->acts.push_back(cur);
  }
  return cur;
}

// Accumulates parameter gradients into `grad` and returns dL/dx.
template <typename T>
Matrix<T> mlp_backward(const MlpDesc& d, const ParamLayout& layout, const T* params,
                       const MlpTrace<T>& trace, Matrix<T> dy, T* grad) {
  const int n = static_cast<int>(d.weights.size());
  for (int k = n - 1; k >= 0; --k) {
    const TensorInfo& wi = layout[d.weights[k]];
    const TensorInfo& bi = layout[d.biases[k]];
    const Matrix<T>& out = trace.acts[k + 1];
    const Matrix<T>& in = trace.acts[k];
    if (k + 1 < n || d.tanh_output) dy.array() *= (T(1) - out.array().square());
    Eigen::Map<const Matrix<T>> w(params + wi.offset, wi.rows, wi.cols);
    Eigen::Map<Matrix<T>> gw(grad + wi.offset, wi.rows, wi.cols);
    Eigen::Map<Vector<T>> gb(grad + bi.offset, bi.rows);
    gw.noalias() += dy * in.transpose();
    gb += dy.rowwise().sum();
    Matrix<T> dx(wi.cols, dy.cols());
    dx.noalias() = w.transpose() * dy;
    dy = std::move(dx);
  }
  return dy;
}

// Diagonal Gaussian over actions with a state-independent log-std.
template <typename T>
struct ActionDistribution {
  Vector<T> mean;
  Vector<T> log_std;
};

template <typename T>
std::pair<T, T> log_prob_and_entropy(const ActionDistribution<T>& dist,
                                     const std::type_identity_t<Vector<T>>& action) {
  if (dist.mean.size() != action.size() || dist.log_std.size() != action.size())
    throw ShapeError("log_prob_and_entropy: dimension mismatch");
  const T half_log_2pi = T(0.5 * std::log(2.0 * kPi));
  T lp = 0;
  T ent = 0;
  for (Eigen::Index k = 0; k < action.size(); ++k) {
    const T z = (action[k] - dist.mean[k]) * std::exp(-dist.log_std[k]);
    lp += -T(0.5) * z * z - dist.log_std[k] - half_log_2pi;
    ent += T(0.5) + half_log_2pi + dist.log_std[k];
  }
  return {lp, ent};
}

inline std::array<double, kEdgeDim> edge_features(Vec2 p_i, Vec2 v_i, Vec2 p_j, Vec2 v_j) {
  return {p_i.x - p_j.x, p_i.y - p_j.y, v_i.x - v_j.x, v_i.y - v_j.y};
}

// Input of one forward pass: `batch` team samples, each with one observation
// per agent and an adjacency matrix (adj[b * n * n + i * n + j] != 0 means
// j is in N_i for sample b).
template <typename T>
struct TeamInput {
  int batch = 0;
  std::vector<Matrix<T>> obs;  // per agent, obs_dim x batch
  std::vector<std::uint8_t> adj;
};

template <typename T>
struct TeamOutput {
  std::vector<Matrix<T>> mean;   // per agent, action_dim x batch
  std::vector<Matrix<T>> value;  // per agent, 1 x batch
  std::vector<Vector<T>> log_std;
};

template <typename T>
struct TeamTrace {
  struct Pair {
    int i = 0;
    int j = 0;
    RowArray<T> weight;  // mask / normaliser per sample
    MlpTrace<T> phi;
  };
  std::vector<MlpTrace<T>> enc, psi, pol, val;
  std::vector<Pair> pairs;
  std::vector<Vector<T>> raw_log_std;
};

template <typename T>
struct TeamGrad {
  std::vector<Matrix<T>> mean;
  std::vector<Matrix<T>> value;
  std::vector<Vector<T>> log_std;  // already summed over the batch
};

template <typename T>
class GnnModel {
 public:
  using Scalar = T;

  explicit GnnModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int z = cfg_.embedding_dim();
    enc_ = detail::add_mlp(layout_, "encoder", cfg_.encoder_input_dim(), cfg_.encoder_widths, true);
    psi_ = detail::add_mlp(layout_, "psi", z, {cfg_.gnn_hidden, cfg_.hidden_width}, false);
    phi_ = detail::add_mlp(layout_, "phi", z + kEdgeDim, {cfg_.gnn_hidden, cfg_.hidden_width}, false);
    pol_ = detail::add_mlp(layout_, "policy", cfg_.hidden_width, {cfg_.decoder_hidden, cfg_.action_dim},
                           false);
    val_ = detail::add_mlp(layout_, "value", cfg_.hidden_width, {cfg_.decoder_hidden, 1}, false);
    log_std_ = layout_.add("log_std", cfg_.action_dim, 1);
    sets_.assign(cfg_.num_sets(), ParamVector<T>(layout_.total(), T(0)));
    for (auto& s : sets_) {
      Eigen::Map<Vector<T>>(s.data() + layout_[log_std_].offset, cfg_.action_dim)
          .setConstant(T(cfg_.log_std_init));
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  int num_sets() const { return static_cast<int>(sets_.size()); }
  int set_of(int agent) const { return cfg_.sharing == SharingMode::kShared ? 0 : agent; }
  ParamVector<T>& params(int set) { return sets_[set]; }
  const ParamVector<T>& params(int set) const { return sets_[set]; }
  std::vector<ParamVector<T>>& sets() { return sets_; }
  const std::vector<ParamVector<T>>& sets() const { return sets_; }
  std::size_t size_per_set() const { return layout_.total(); }
  const MlpDesc& encoder() const { return enc_; }
  const MlpDesc& psi() const { return psi_; }
  const MlpDesc& phi() const { return phi_; }
  const MlpDesc& policy_decoder() const { return pol_; }
  const MlpDesc& value_decoder() const { return val_; }
  int log_std_tensor() const { return log_std_; }

  std::vector<ParamVector<T>> zero_grads() const {
    return std::vector<ParamVector<T>>(sets_.size(), ParamVector<T>(layout_.total(), T(0)));
  }

  // Orthogonal init: hidden layers gain sqrt(2), message/self outputs gain 1,
  // policy output gain 0.01, value output gain 1. Biases zero.
  void initialize(std::mt19937_64& rng) {
    for (auto& s : sets_) {
      std::fill(s.begin(), s.end(), T(0));
      init_mlp(enc_, s, rng, std::sqrt(2.0), std::sqrt(2.0));
      init_mlp(psi_, s, rng, std::sqrt(2.0), 1.0);
      init_mlp(phi_, s, rng, std::sqrt(2.0), 1.0);
      init_mlp(pol_, s, rng, std::sqrt(2.0), 0.01);
      init_mlp(val_, s, rng, std::sqrt(2.0), 1.0);
      Eigen::Map<Vector<T>>(s.data() + layout_[log_std_].offset, cfg_.action_dim)
          .setConstant(T(cfg_.log_std_init));
    }
  }

  // Rows of an observation matrix that feed the encoder.
  Matrix<T> encoder_input(const Matrix<T>& obs) const {
    const auto& l = cfg_.obs;
    Matrix<T> x(cfg_.encoder_input_dim(), obs.cols());
    int r = 0;
    for (int k = 0; k < l.dim; ++k) {
      if (k >= l.pos_offset && k < l.pos_offset + l.spatial_dims) continue;
      x.row(r++) = obs.row(k);
    }
    return x;
  }

  // Relative position/velocity of i w.r.t. j for every sample; 1D layouts pad
  // the second component with zero.
  Matrix<T> edge_matrix(const Matrix<T>& obs_i, const Matrix<T>& obs_j) const {
    const auto& l = cfg_.obs;
    Matrix<T> e = Matrix<T>::Zero(kEdgeDim, obs_i.cols());
    for (int d = 0; d < l.spatial_dims; ++d) {
      e.row(d) = obs_i.row(l.pos_offset + d) - obs_j.row(l.pos_offset + d);
      e.row(2 + d) = obs_i.row(l.vel_offset + d) - obs_j.row(l.vel_offset + d);
    }
    return e;
  }

  TeamOutput<T> forward(const TeamInput<T>& in, TeamTrace<T>* trace = nullptr) const {
    const int n = cfg_.n_agents;
    const int B = in.batch;
    if (static_cast<int>(in.obs.size()) != n) throw ShapeError("forward: one observation block per agent");
    for (const auto& o : in.obs)
      if (o.rows() != cfg_.obs.dim || o.cols() != B) throw ShapeError("forward: observation shape");
    if (in.adj.size() != static_cast<std::size_t>(B) * n * n) throw ShapeError("forward: adjacency shape");

    TeamTrace<T> local;
    TeamTrace<T>& tr = trace ? *trace : local;
    tr.enc.assign(n, {});
    tr.psi.assign(n, {});
    tr.pol.assign(n, {});
    tr.val.assign(n, {});
    tr.pairs.clear();
    tr.raw_log_std.assign(n, {});

    std::vector<Matrix<T>> z(n);
    for (int i = 0; i < n; ++i) {
      const T* p = sets_[set_of(i)].data();
      z[i] = mlp_forward(enc_, layout_, p, encoder_input(in.obs[i]), &tr.enc[i]);
    }

    TeamOutput<T> out;
    out.mean.resize(n);
    out.value.resize(n);
    out.log_std.resize(n);
    for (int i = 0; i < n; ++i) {
      const T* p = sets_[set_of(i)].data();
      Matrix<T> h = mlp_forward(psi_, layout_, p, z[i], &tr.psi[i]);

      RowArray<T> count = RowArray<T>::Zero(B);
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        for (int b = 0; b < B; ++b) count[b] += in.adj[(b * n + i) * n + j] ? T(1) : T(0);
      }
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        RowArray<T> weight(B);
        bool any = false;
        for (int b = 0; b < B; ++b) {
          const bool e = in.adj[(b * n + i) * n + j] != 0;
          any = any || e;
          T wgt = e ? T(1) : T(0);
          if (e && cfg_.aggregation == Aggregation::kMean) wgt /= count[b];
          weight[b] = wgt;
        }
        if (!any) continue;
        typename TeamTrace<T>::Pair pr;
        pr.i = i;
        pr.j = j;
        pr.weight = weight;
        Matrix<T> msg_in(z[j].rows() + kEdgeDim, B);
        msg_in.topRows(z[j].rows()) = z[j];
        msg_in.bottomRows(kEdgeDim) = edge_matrix(in.obs[i], in.obs[j]);
        Matrix<T> msg = mlp_forward(phi_, layout_, p, msg_in, &pr.phi);
        h.array() += msg.array().rowwise() * weight;
        tr.pairs.push_back(std::move(pr));
      }

      out.mean[i] = mlp_forward(pol_, layout_, p, h, &tr.pol[i]);
      out.value[i] = mlp_forward(val_, layout_, p, h, &tr.val[i]);
      Vector<T> raw = Eigen::Map<const Vector<T>>(p + layout_[log_std_].offset, cfg_.action_dim);
      tr.raw_log_std[i] = raw;
      out.log_std[i] = raw.cwiseMax(T(kLogStdMin)).cwiseMin(T(kLogStdMax));
      if (!out.mean[i].allFinite() || !out.value[i].allFinite())
        throw NumericError("forward: non-finite policy/value output");
    }
    return out;
  }

  // Reverse pass over a recorded forward. Gradients are added to `grads`
  // (one buffer per parameter set).
  void backward(const TeamTrace<T>& tr, const TeamGrad<T>& g,
                std::vector<ParamVector<T>>& grads) const {
    const int n = cfg_.n_agents;
    if (static_cast<int>(grads.size()) != num_sets()) throw ShapeError("backward: grad set count");
    std::vector<Matrix<T>> dh(n);
    for (int i = 0; i < n; ++i) {
      const int s = set_of(i);
      const T* p = sets_[s].data();
      T* gp = grads[s].data();
      dh[i] = mlp_backward(pol_, layout_, p, tr.pol[i], g.mean[i], gp);
      dh[i] += mlp_backward(val_, layout_, p, tr.val[i], g.value[i], gp);
      const TensorInfo& ls = layout_[log_std_];
      for (int k = 0; k < cfg_.action_dim; ++k) {
        const T raw = tr.raw_log_std[i][k];
        if (raw >= T(kLogStdMin) && raw <= T(kLogStdMax)) gp[ls.offset + k] += g.log_std[i][k];
      }
    }
    std::vector<Matrix<T>> dz(n);
    for (int i = 0; i < n; ++i) {
      const int s = set_of(i);
      dz[i] = mlp_backward(psi_, layout_, sets_[s].data(), tr.psi[i], dh[i], grads[s].data());
    }
    for (const auto& pr : tr.pairs) {
      const int s = set_of(pr.i);
      Matrix<T> dmsg = (dh[pr.i].array().rowwise() * pr.weight).matrix();
      Matrix<T> din = mlp_backward(phi_, layout_, sets_[s].data(), pr.phi, std::move(dmsg),
                                   grads[s].data());
      dz[pr.j] += din.topRows(dz[pr.j].rows());
    }
    for (int i = 0; i < n; ++i) {
      const int s = set_of(i);
      mlp_backward(enc_, layout_, sets_[s].data(), tr.enc[i], dz[i], grads[s].data());
    }
    for (const auto& gs : grads) {
      for (const T& v : gs)
        if (!std::isfinite(static_cast<double>(v))) throw NumericError("backward: non-finite gradient");
    }
  }

  // Unbatched helpers mirroring the kernel's pieces.
  Vector<T> encode(const Vector<T>& nonabsolute_obs, int set = 0) const {
    if (nonabsolute_obs.size() != cfg_.encoder_input_dim()) throw ShapeError("encode: input width");
    Matrix<T> x = nonabsolute_obs;
    return mlp_forward(enc_, layout_, sets_[set].data(), x, nullptr).col(0);
  }

  Vector<T> apply_psi(const Vector<T>& z, int set) const {
    Matrix<T> x = z;
    return mlp_forward(psi_, layout_, sets_[set].data(), x, nullptr).col(0);
  }

  Vector<T> apply_phi(const Vector<T>& z_j, const std::array<double, kEdgeDim>& e, int set) const {
    Matrix<T> x(z_j.size() + kEdgeDim, 1);
    x.topRows(z_j.size()) = z_j;
    for (int k = 0; k < kEdgeDim; ++k) x(z_j.size() + k, 0) = T(e[k]);
    return mlp_forward(phi_, layout_, sets_[set].data(), x, nullptr).col(0);
  }

 private:
  void init_mlp(const MlpDesc& d, ParamVector<T>& s, std::mt19937_64& rng, double hidden_gain,
                double out_gain) {
    for (std::size_t k = 0; k < d.weights.size(); ++k) {
      const TensorInfo& wi = layout_[d.weights[k]];
      const double gain = k + 1 == d.weights.size() ? out_gain : hidden_gain;
      Eigen::MatrixXd q = orthogonal(wi.rows, wi.cols, rng) * gain;
      Eigen::Map<Matrix<T>>(s.data() + wi.offset, wi.rows, wi.cols) = q.cast<T>();
    }
  }

  static Eigen::MatrixXd orthogonal(int rows, int cols, std::mt19937_64& rng) {
    const int big = std::max(rows, cols);
    const int small = std::min(rows, cols);
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd g(big, small);
    for (int c = 0; c < small; ++c)
      for (int r = 0; r < big; ++r) g(r, c) = nd(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
    for (int c = 0; c < small; ++c)
      if (r(c, c) < 0) q.col(c) *= -1.0;
    return rows >= cols ? q : Eigen::MatrixXd(q.transpose());
  }

  ModelConfig cfg_;
  ParamLayout layout_;
  MlpDesc enc_, psi_, phi_, pol_, val_;
  int log_std_ = 0;
  std::vector<ParamVector<T>> sets_;
};

// Per-pair edge features keyed by (i, j).
using EdgeMap = std::map<std::pair<int, int>, std::array<double, kEdgeDim>>;

// One message-passing round on explicit embeddings and edges.
template <typename T>
std::vector<Vector<T>> gnn_layer(const GnnModel<T>& model, const std::vector<Vector<T>>& z,
                                 const EdgeMap& edges, const CommGraph& graph) {
  const int n = static_cast<int>(z.size());
  if (static_cast<int>(graph.neighbors.size()) != n) throw ShapeError("gnn_layer: graph size");
  std::vector<Vector<T>> h(n);
  for (int i = 0; i < n; ++i) {
    const int s = model.set_of(i);
    h[i] = model.apply_psi(z[i], s);
    const auto& nb = graph.neighbors[i];
    for (int j : nb) {
      auto it = edges.find({i, j});
      if (it == edges.end()) throw ShapeError("gnn_layer: missing edge feature for a neighbour");
      Vector<T> m = model.apply_phi(z[j], it->second, s);
      if (model.config().aggregation == Aggregation::kMean) m /= T(nb.size());
      h[i] += m;
    }
  }
  return h;
}

// Builds a one-sample team input from per-agent observations and a graph.
template <typename T>
TeamInput<T> make_team_input(const std::vector<Observation>& obs, const CommGraph& graph) {
  const int n = static_cast<int>(obs.size());
  TeamInput<T> in;
  in.batch = 1;
  in.obs.resize(n);
  for (int i = 0; i < n; ++i) {
    in.obs[i].resize(static_cast<Eigen::Index>(obs[i].size()), 1);
    for (std::size_t k = 0; k < obs[i].size(); ++k) in.obs[i](k, 0) = T(obs[i][k]);
  }
  in.adj.assign(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j : graph.neighbors[i]) in.adj[i * n + j] = 1;
  return in;
}

template <typename T>
std::pair<std::vector<ActionDistribution<T>>, std::vector<T>> policy_value_forward(
    const GnnModel<T>& model, const std::vector<Observation>& obs, const CommGraph& graph) {
  const TeamOutput<T> out = model.forward(make_team_input<T>(obs, graph));
  std::vector<ActionDistribution<T>> dists;
  std::vector<T> values;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    dists.push_back({out.mean[i].col(0), out.log_std[i]});
    values.push_back(out.value[i](0, 0));
  }
  return {dists, values};
}

}  // namespace hetmarl
