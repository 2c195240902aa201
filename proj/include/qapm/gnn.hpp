#pragma once

// Siamese graph neural network over the operator family, and the matching
// head built on its node embeddings.

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qapm/checkpoint.hpp"
#include "qapm/diffcore.hpp"
#include "qapm/match.hpp"
#include "qapm/operators.hpp"

namespace qapm {

enum class InputFeature { degree, two_hop_degree };
enum class BnMode { batch_stats, running_stats, disabled };

inline std::string to_string(InputFeature f) { return f == InputFeature::degree ? "degree" : "two_hop_degree"; }

inline InputFeature parse_input_feature(const std::string& s) {
  if (s == "degree") return InputFeature::degree;
  if (s == "two_hop_degree") return InputFeature::two_hop_degree;
  throw ParameterError("unknown input feature '" + s + "' (expected degree|two_hop_degree)");
}

inline std::string to_string(BnMode m) {
  switch (m) {
    case BnMode::batch_stats:
      return "batch_stats";
    case BnMode::running_stats:
      return "running_stats";
    default:
      return "disabled";
  }
}

inline BnMode parse_bn_mode(const std::string& s) {
  if (s == "batch_stats") return BnMode::batch_stats;
  if (s == "running_stats") return BnMode::running_stats;
  if (s == "disabled") return BnMode::disabled;
  throw ParameterError("unknown batch-norm mode '" + s + "'");
}

struct GnnConfig {
  int layers = 20;
  int feat = 20;
  int J = 2;
  InputFeature input = InputFeature::degree;
  BnMode bn_mode = BnMode::batch_stats;  // normalization used outside training
  double logit_scale = 10.0;             // initial value of the learned similarity scale

  void validate() const {
    if (layers < 1) throw ParameterError("gnn needs at least one layer");
    if (feat < 2 || feat % 2 != 0) throw ParameterError("gnn feature count must be even and >= 2");
    if (J < 0) throw ParameterError("gnn power count J must be >= 0");
    if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) throw ParameterError("gnn logit scale must be positive");
  }

  bool operator==(const GnnConfig&) const = default;
};

inline nlohmann::json to_json(const GnnConfig& c) {
  return {{"layers", c.layers},           {"feat", c.feat},
          {"J", c.J},                     {"input", to_string(c.input)},
          {"bn_mode", to_string(c.bn_mode)}, {"logit_scale", c.logit_scale}};
}

inline GnnConfig gnn_config_from_json(const nlohmann::json& j) {
  GnnConfig c;
  c.layers = j.value("layers", c.layers);
  c.feat = j.value("feat", c.feat);
  c.J = j.value("J", c.J);
  c.input = parse_input_feature(j.value("input", to_string(c.input)));
  c.bn_mode = parse_bn_mode(j.value("bn_mode", to_string(c.bn_mode)));
  c.logit_scale = j.value("logit_scale", c.logit_scale);
  c.validate();
  return c;
}

struct GnnLayer {
  std::vector<ad::Parameter> theta;  // one d_in x d_out matrix per generator
  ad::Parameter gamma;
  ad::Parameter beta;
  ad::RunningStats stats;
};

class GnnModel {
 public:
  GnnModel() = default;

  /// Glorot-uniform weights, unit scale and zero shift.
  static GnnModel init(const GnnConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    GnnModel m;
    m.cfg_ = cfg;
    Rng rng = make_rng(seed);
    const int gens = OperatorFamily::family_size(cfg.J);
    for (int k = 0; k < cfg.layers; ++k) {
      const int d_in = k == 0 ? 1 : cfg.feat;
      const int d_out = cfg.feat;
      const double a = std::sqrt(6.0 / (d_in + d_out));
      std::uniform_real_distribution<double> unif(-a, a);
      GnnLayer layer;
      for (int g = 0; g < gens; ++g) {
        ad::Tensor t(d_in, d_out);
        for (Eigen::Index i = 0; i < t.rows(); ++i) {
          for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = unif(rng);
        }
        layer.theta.push_back({prefix(k) + "theta" + std::to_string(g), std::move(t), {}});
      }
      layer.gamma = {prefix(k) + "bn.gamma", ad::Tensor::Ones(1, d_out), {}};
      layer.beta = {prefix(k) + "bn.beta", ad::Tensor::Zero(1, d_out), {}};
      layer.stats = ad::RunningStats::fresh(d_out);
      m.layers_.push_back(std::move(layer));
    }
    m.log_scale_ = {"log_logit_scale", ad::Tensor::Constant(1, 1, std::log(cfg.logit_scale)), {}};
    return m;
  }

  const GnnConfig& config() const { return cfg_; }
  std::vector<GnnLayer>& layers() { return layers_; }
  const std::vector<GnnLayer>& layers() const { return layers_; }
  /// The similarity scale is learned in log space, so optimizer steps act multiplicatively.
  ad::Parameter& log_scale() { return log_scale_; }
  const ad::Parameter& log_scale() const { return log_scale_; }
  double logit_scale() const { return std::exp(log_scale_.value(0, 0)); }

  /// Trainable parameters in a fixed order.
  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& l : layers_) {
      for (auto& t : l.theta) out.push_back(&t);
      if (cfg_.bn_mode != BnMode::disabled) {
        out.push_back(&l.gamma);
        out.push_back(&l.beta);
      }
    }
    out.push_back(&log_scale_);
    return out;
  }

  void zero_grad() {
    for (ad::Parameter* p : parameters()) p->zero_grad();
  }

  ad::TensorMap tensors() const {
    ad::TensorMap out;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const GnnLayer& l = layers_[k];
      for (const auto& t : l.theta) out[t.name] = t.value;
      out[l.gamma.name] = l.gamma.value;
      out[l.beta.name] = l.beta.value;
      out[prefix(static_cast<int>(k)) + "bn.running_mean"] = l.stats.mean;
      out[prefix(static_cast<int>(k)) + "bn.running_var"] = l.stats.var;
    }
    out[log_scale_.name] = log_scale_.value;
    return out;
  }

  nlohmann::json to_checkpoint() const { return ad::checkpoint_to_json(tensors(), to_json(cfg_)); }

  static GnnModel from_checkpoint(const nlohmann::json& doc) {
    auto [tensors, cfg_json] = ad::checkpoint_from_json(doc);
    GnnModel m = init(gnn_config_from_json(cfg_json), 0);
    auto take = [&tensors](const std::string& name, ad::Tensor& dst) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw ConfigError("checkpoint is missing tensor '" + name + "'");
      if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols()) {
        throw ConfigError("checkpoint tensor '" + name + "' has the wrong shape");
      }
      dst = it->second;
    };
    for (std::size_t k = 0; k < m.layers_.size(); ++k) {
      GnnLayer& l = m.layers_[k];
      for (auto& t : l.theta) take(t.name, t.value);
      take(l.gamma.name, l.gamma.value);
      take(l.beta.name, l.beta.value);
      take(prefix(static_cast<int>(k)) + "bn.running_mean", l.stats.mean);
      take(prefix(static_cast<int>(k)) + "bn.running_var", l.stats.var);
    }
    take(m.log_scale_.name, m.log_scale_.value);
    return m;
  }

  void save(const std::string& path) const { ad::write_json_file(path, to_checkpoint()); }
  static GnnModel load(const std::string& path) { return from_checkpoint(ad::read_json_file(path)); }

 private:
  static std::string prefix(int k) { return "layer" + std::to_string(k) + "."; }

  GnnConfig cfg_;
  std::vector<GnnLayer> layers_;
  ad::Parameter log_scale_;
};

/// Scalar input signal per node (n x 1).
///
/// two_hop_degree counts the nodes at graph distance 1 or 2, i.e. the nonzero
/// off-diagonal entries of A + A².
inline Matrix init_features(const Graph& g, InputFeature kind) {
  if (kind == InputFeature::degree) return g.degrees();
  const Matrix reach = g.adj() + g.adj() * g.adj();
  Matrix out(g.n(), 1);
  for (int i = 0; i < g.n(); ++i) {
    int count = 0;
    for (int j = 0; j < g.n(); ++j) count += (j != i && reach(i, j) != 0.0) ? 1 : 0;
    out(i, 0) = count;
  }
  return out;
}

enum class Phase { train, eval };

struct EncodeOptions {
  Phase phase = Phase::eval;
  bool normalize = true;  // unit ℓ2 rows on the final embedding
};

namespace detail {

inline ad::FamilyBatch build_families(std::span<const Graph> graphs, int J) {
  auto fams = std::make_shared<std::vector<OperatorFamily>>();
  fams->reserve(graphs.size());
  for (const Graph& g : graphs) fams->push_back(OperatorFamily::build(g, J));
  return fams;
}

inline Matrix stacked_features(std::span<const Graph> graphs, InputFeature kind) {
  Eigen::Index rows = 0;
  for (const Graph& g : graphs) rows += g.n();
  Matrix out(rows, 1);
  Eigen::Index off = 0;
  for (const Graph& g : graphs) {
    out.middleRows(off, g.n()) = init_features(g, kind);
    off += g.n();
  }
  return out;
}

}  // namespace detail

/// Runs every layer x ← ρ(BN(Σ_B B·x·θ_B)) on a stack of graphs and returns the
/// stacked embeddings. In the train phase parameters are bound for backward()
/// and batch statistics feed the running averages; in the eval phase weights
/// enter as constants and the model is not modified.
inline ad::Var encode(ad::Tape& tape, GnnModel& model, std::span<const Graph> graphs, const EncodeOptions& opt) {
  const GnnConfig& cfg = model.config();
  if (graphs.empty()) throw ShapeError("encode: no graphs");
  const ad::FamilyBatch fams = detail::build_families(graphs, cfg.J);
  const bool train = opt.phase == Phase::train;
  auto bind = [&](ad::Parameter& p) { return train ? tape.parameter(p) : tape.constant(p.value); };

  ad::Var x = tape.constant(detail::stacked_features(graphs, cfg.input));
  for (std::size_t k = 0; k < model.layers().size(); ++k) {
    GnnLayer& layer = model.layers()[k];
    std::vector<ad::Var> thetas;
    thetas.reserve(layer.theta.size());
    for (auto& t : layer.theta) thetas.push_back(bind(t));
    ad::Var h = ad::graph_conv(fams, x, thetas);
    if (cfg.bn_mode != BnMode::disabled) {
      ad::BatchNormOptions bn;
      ad::RunningStats frozen = layer.stats;
      if (train) {
        bn.mode = ad::NormMode::batch;
        bn.stats = &layer.stats;
      } else if (cfg.bn_mode == BnMode::running_stats) {
        bn.mode = ad::NormMode::running;
        bn.stats = &frozen;
      }
      h = ad::batch_norm(h, bind(layer.gamma), bind(layer.beta), bn);
    }
    if (!h.value().allFinite()) throw NumericError("encode: non-finite activations at layer " + std::to_string(k));
    x = ad::split_rho(h);
  }
  return opt.normalize ? ad::row_normalize(x) : x;
}

/// Embeddings of one graph without touching the model (n x feat).
inline Matrix embed(const GnnModel& model, const Graph& g, bool normalize = true) {
  ad::Tape tape;
  // Eval phase only reads the model.
  GnnModel& m = const_cast<GnnModel&>(model);
  return encode(tape, m, std::span<const Graph>(&g, 1), {Phase::eval, normalize}).value();
}

/// Similarity scores s·E1·E2ᵀ of two embedding matrices.
inline Matrix similarity(const GnnModel& model, const Matrix& e1, const Matrix& e2) {
  return model.logit_scale() * (e1 * e2.transpose());
}

inline Matrix softmax_rows(const Matrix& scores) {
  Matrix out = scores.colwise() - scores.rowwise().maxCoeff();
  out = out.array().exp();
  return out.array().colwise() / out.rowwise().sum().array();
}

inline MatchOutcome match(const GnnModel& model, const Graph& g1, const Graph& g2, Decode decode = Decode::argmax,
                          const std::optional<Permutation>& truth = std::nullopt) {
  if (g1.n() != g2.n()) throw ParameterError("match: graphs differ in size");
  const Matrix scores = similarity(model, embed(model, g1), embed(model, g2));
  MatchOutcome out{softmax_rows(scores), decode_scores(scores, decode), std::nullopt};
  if (truth) out.recovery = recovery_rate(out.assignment, *truth);
  return out;
}

struct BatchLoss {
  ad::Var loss;
  double recovery = 0.0;  // argmax recovery averaged over the batch
};

/// Mean cross-entropy of row_softmax(s·E1_b·E2_bᵀ) against π_b over a batch of
/// equally sized planted instances. G1s and G2s are encoded as two stacks.
inline BatchLoss batch_loss(ad::Tape& tape, GnnModel& model, std::span<const PlantedInstance> batch, Phase phase) {
  if (batch.empty()) throw ShapeError("batch_loss: empty batch");
  const int n = batch.front().g1.n();
  std::vector<Graph> g1s, g2s;
  std::vector<int> targets;
  g1s.reserve(batch.size());
  g2s.reserve(batch.size());
  for (const PlantedInstance& s : batch) {
    if (s.g1.n() != n || s.g2.n() != n || s.pi.size() != n) throw ParameterError("batch_loss: graph sizes differ");
    g1s.push_back(s.g1);
    g2s.push_back(s.g2);
    targets.insert(targets.end(), s.pi.map().begin(), s.pi.map().end());
  }
  const EncodeOptions opt{phase, true};
  const ad::Var e1 = encode(tape, model, g1s, opt);
  const ad::Var e2 = encode(tape, model, g2s, opt);
  const ad::Var s =
      ad::exp(phase == Phase::train ? tape.parameter(model.log_scale()) : tape.constant(model.log_scale().value));
  const ad::Var probs = ad::row_softmax(ad::scale_by(s, ad::block_outer(e1, e2, n)));
  const std::vector<int> guess = argmax_rows(probs.value());
  int hits = 0;
  for (std::size_t i = 0; i < guess.size(); ++i) hits += guess[i] == targets[i] ? 1 : 0;
  return {ad::cross_entropy(probs, targets), static_cast<double>(hits) / static_cast<double>(guess.size())};
}

/// Cross-entropy of a single planted instance, evaluated without training.
inline double loss(const GnnModel& model, const PlantedInstance& sample) {
  ad::Tape tape;
  GnnModel& m = const_cast<GnnModel&>(model);
  return batch_loss(tape, m, std::span<const PlantedInstance>(&sample, 1), Phase::eval).loss.value()(0, 0);
}

}  // namespace qapm
