#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qapm/errors.hpp"
#include "qapm/rng.hpp"

namespace qapm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Edge = std::pair<int, int>;

/// A bijection on {0..n-1}. `(*this)(i)` is the image of i.
class Permutation {
 public:
  Permutation() = default;

  explicit Permutation(std::vector<int> map) : map_(std::move(map)) {
    std::vector<int> sorted = map_;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < static_cast<int>(sorted.size()); ++i) {
      if (sorted[i] != i) throw ParameterError("permutation map is not a bijection");
    }
  }

  static Permutation identity(int n) {
    std::vector<int> m(static_cast<std::size_t>(n));
    std::iota(m.begin(), m.end(), 0);
    return Permutation(std::move(m));
  }

  static Permutation random(int n, Rng& rng) {
    std::vector<int> m(static_cast<std::size_t>(n));
    std::iota(m.begin(), m.end(), 0);
    // Fisher-Yates with an explicit draw so the result does not depend on the
    // standard library's shuffle implementation.
    for (int i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(m[static_cast<std::size_t>(i)], m[static_cast<std::size_t>(pick(rng))]);
    }
    return Permutation(std::move(m));
  }

  int size() const { return static_cast<int>(map_.size()); }
  int operator()(int i) const { return map_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& map() const { return map_; }

  Permutation inverse() const {
    std::vector<int> inv(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) inv[static_cast<std::size_t>(map_[i])] = static_cast<int>(i);
    return Permutation(std::move(inv));
  }

  /// Returns this ∘ first, i.e. i -> (*this)(first(i)).
  Permutation after(const Permutation& first) const {
    if (first.size() != size()) throw ParameterError("permutation sizes differ");
    std::vector<int> m(map_.size());
    for (int i = 0; i < size(); ++i) m[static_cast<std::size_t>(i)] = (*this)(first(i));
    return Permutation(std::move(m));
  }

  /// Assignment matrix with X(i, π(i)) = 1.
  Matrix matrix() const {
    Matrix x = Matrix::Zero(size(), size());
    for (int i = 0; i < size(); ++i) x(i, (*this)(i)) = 1.0;
    return x;
  }

  bool operator==(const Permutation&) const = default;

 private:
  std::vector<int> map_;
};

/// Undirected graph held as a dense symmetric adjacency matrix.
class Graph {
 public:
  Graph() = default;

  explicit Graph(Matrix adj) : adj_(std::move(adj)) {
    if (adj_.rows() != adj_.cols()) throw ShapeError("adjacency must be square");
    if (!adj_.allFinite()) throw NumericError("adjacency has non-finite entries");
    for (Eigen::Index i = 0; i < adj_.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < adj_.cols(); ++j) {
        if (adj_(i, j) != adj_(j, i)) throw ParameterError("adjacency must be symmetric");
      }
    }
  }

  static Graph empty(int n) { return Graph(Matrix::Zero(n, n)); }

  static Graph from_edges(int n, const std::vector<Edge>& edges) {
    Matrix a = Matrix::Zero(n, n);
    for (auto [i, j] : edges) {
      if (i < 0 || j < 0 || i >= n || j >= n) throw ParameterError("edge endpoint out of range");
      if (i == j) throw ParameterError("self-loops are not allowed in simple graphs");
      a(i, j) = 1.0;
      a(j, i) = 1.0;
    }
    return Graph(std::move(a));
  }

  int n() const { return static_cast<int>(adj_.rows()); }
  const Matrix& adj() const { return adj_; }

  /// Unordered pairs (i<j) carrying a nonzero entry.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (int i = 0; i < n(); ++i) {
      for (int j = i + 1; j < n(); ++j) {
        if (adj_(i, j) != 0.0) out.emplace_back(i, j);
      }
    }
    return out;
  }

  std::size_t edge_count() const { return edges().size(); }

  Vector degrees() const { return adj_.rowwise().sum(); }

  bool is_simple() const {
    for (int i = 0; i < n(); ++i) {
      if (adj_(i, i) != 0.0) return false;
      for (int j = 0; j < n(); ++j) {
        if (adj_(i, j) != 0.0 && adj_(i, j) != 1.0) return false;
      }
    }
    return true;
  }

  bool operator==(const Graph& other) const { return adj_.rows() == other.adj_.rows() && adj_ == other.adj_; }

 private:
  Matrix adj_;
};

/// Edge-flip noise: existing edges drop with probability p_e, non-edges appear
/// with probability p_e2 = p_e·p/(1−p) so that the expected density stays p.
struct NoiseSpec {
  double p_e = 0.0;
  double p = 0.5;

  double p_e2() const { return p_e * p / (1.0 - p); }

  void validate() const {
    if (!(p_e >= 0.0 && p_e <= 1.0)) throw ParameterError("p_e must lie in [0,1]");
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("base density p must lie in (0,1)");
    if (p_e2() > 1.0) throw ParameterError("insertion probability p_e*p/(1-p) exceeds 1");
  }
};

inline void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError(std::string(what) + " must lie in [0,1]");
}

inline Graph erdos_renyi(int n, double p, std::uint64_t seed) {
  if (n < 1) throw ParameterError("erdos_renyi needs n >= 1");
  check_probability(p, "edge probability");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (unif(rng) < p) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
      }
    }
  }
  return Graph(std::move(a));
}

namespace detail {

// True when some pair of distinct stubs could still be joined without creating
// a multi-edge; used to detect dead ends of the incremental pairing.
inline bool pairing_can_continue(const std::set<Edge>& edges, const std::map<int, int>& pending) {
  if (pending.empty()) return true;
  for (auto it = pending.begin(); it != pending.end(); ++it) {
    for (auto jt = std::next(it); jt != pending.end(); ++jt) {
      if (!edges.count({it->first, jt->first})) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Uniform-ish random deg-regular simple graph by incremental stub pairing:
/// stubs are shuffled and paired, pairs that would form a loop or a repeated
/// edge are returned to the pool and re-shuffled, and the attempt restarts
/// from scratch on a dead end.
inline Graph random_regular(int n, int deg, std::uint64_t seed, int retry_budget = 1000) {
  if (n < 1 || deg < 0) throw ParameterError("random_regular needs n >= 1 and deg >= 0");
  if (deg >= n) throw ParameterError("random_regular needs deg < n");
  if ((static_cast<long long>(n) * deg) % 2 != 0) throw ParameterError("n*deg must be even");
  Rng rng = make_rng(seed);
  for (int attempt = 0; attempt < retry_budget; ++attempt) {
    std::set<Edge> edges;
    std::vector<int> stubs;
    stubs.reserve(static_cast<std::size_t>(n * deg));
    for (int v = 0; v < n; ++v) {
      for (int k = 0; k < deg; ++k) stubs.push_back(v);
    }
    bool dead_end = false;
    while (!stubs.empty()) {
      for (int i = static_cast<int>(stubs.size()) - 1; i > 0; --i) {
        std::uniform_int_distribution<int> pick(0, i);
        std::swap(stubs[static_cast<std::size_t>(i)], stubs[static_cast<std::size_t>(pick(rng))]);
      }
      std::map<int, int> pending;
      for (std::size_t k = 0; k + 1 < stubs.size(); k += 2) {
        int u = std::min(stubs[k], stubs[k + 1]);
        int v = std::max(stubs[k], stubs[k + 1]);
        if (u != v && !edges.count({u, v})) {
          edges.insert({u, v});
        } else {
          ++pending[u];
          ++pending[v];
        }
      }
      if (!detail::pairing_can_continue(edges, pending)) {
        dead_end = true;
        break;
      }
      stubs.clear();
      for (auto [v, count] : pending) {
        for (int k = 0; k < count; ++k) stubs.push_back(v);
      }
    }
    if (!dead_end) return Graph::from_edges(n, std::vector<Edge>(edges.begin(), edges.end()));
  }
  throw GenerationError("random_regular exhausted its retry budget");
}

/// Relabels nodes: result.adj(π(i), π(j)) == g.adj(i, j).
inline Graph permute(const Graph& g, const Permutation& pi) {
  if (pi.size() != g.n()) throw ParameterError("permutation length does not match graph size");
  Matrix out(g.n(), g.n());
  for (int i = 0; i < g.n(); ++i) {
    for (int j = 0; j < g.n(); ++j) out(pi(i), pi(j)) = g.adj()(i, j);
  }
  return Graph(std::move(out));
}

/// Applies the edge-flip noise model on unordered pairs and mirrors the result.
inline Graph perturb(const Graph& g, const NoiseSpec& spec, std::uint64_t seed) {
  spec.validate();
  const double p_add = spec.p_e2();
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix a = g.adj();
  for (int i = 0; i < g.n(); ++i) {
    for (int j = i + 1; j < g.n(); ++j) {
      const double u = unif(rng);
      const bool present = a(i, j) != 0.0;
      if (present && u < spec.p_e) {
        a(i, j) = a(j, i) = 0.0;
      } else if (!present && u < p_add) {
        a(i, j) = a(j, i) = 1.0;
      }
    }
  }
  return Graph(std::move(a));
}

enum class GraphModel { er, regular };

inline std::string to_string(GraphModel m) { return m == GraphModel::er ? "er" : "regular"; }

inline GraphModel parse_graph_model(const std::string& s) {
  if (s == "er") return GraphModel::er;
  if (s == "regular") return GraphModel::regular;
  throw ParameterError("unknown graph model '" + s + "' (expected er|regular)");
}

struct InstanceConfig {
  GraphModel model = GraphModel::er;
  int n = 50;
  double p = 0.2;  // ER edge density
  int deg = 10;    // regular-graph degree
  double p_e = 0.0;
  bool random_permutation = true;

  /// Edge density used to balance the noise model.
  double density() const { return model == GraphModel::er ? p : static_cast<double>(deg) / (n - 1); }

  bool operator==(const InstanceConfig&) const = default;
};

/// A planted pair: g2 = perturb(permute(g1, pi)).
struct PlantedInstance {
  Graph g1;
  Graph g2;
  Permutation pi;
};

inline PlantedInstance make_instance(const InstanceConfig& cfg, std::uint64_t seed) {
  const Graph g1 = cfg.model == GraphModel::er ? erdos_renyi(cfg.n, cfg.p, derive_seed(seed, 0))
                                               : random_regular(cfg.n, cfg.deg, derive_seed(seed, 0));
  Permutation pi = Permutation::identity(cfg.n);
  if (cfg.random_permutation) {
    Rng rng = make_rng(derive_seed(seed, 1));
    pi = Permutation::random(cfg.n, rng);
  }
  const NoiseSpec noise{cfg.p_e, cfg.density()};
  Graph g2 = perturb(permute(g1, pi), noise, derive_seed(seed, 2));
  return {g1, std::move(g2), std::move(pi)};
}

}  // namespace qapm
