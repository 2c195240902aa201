#pragma once

// Spectral alignment baselines. Both embed the two graphs through their
// adjacency eigenvectors and finish with an exact linear assignment.

#include <Eigen/Eigenvalues>

#include <optional>
#include <string>

#include "qapm/assign.hpp"
#include "qapm/match.hpp"

namespace qapm {

namespace detail {

struct SortedEigen {
  Vector values;   // descending
  Matrix vectors;  // columns match `values`
};

inline SortedEigen eigen_descending(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
  // Eigen returns ascending order.
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

inline void check_pair(const Graph& a, const Graph& b) {
  if (a.n() != b.n()) throw ParameterError("baseline: graphs differ in size");
}

}  // namespace detail

/// Umeyama's method: similarity |U_A|·|U_B|ᵀ of absolute eigenvector entries
/// (eigenvalues sorted descending in both graphs), then a maximum-weight
/// assignment.
inline MatchOutcome umeyama(const Graph& a, const Graph& b, const std::optional<Permutation>& truth = std::nullopt) {
  detail::check_pair(a, b);
  const auto ea = detail::eigen_descending(a.adj());
  const auto eb = detail::eigen_descending(b.adj());
  const Matrix sim = ea.vectors.cwiseAbs() * eb.vectors.cwiseAbs().transpose();
  return outcome_from_permutation(lap_solve(-sim).perm, truth);
}

enum class LowRankScaling { none, eigenvalue };

inline LowRankScaling parse_low_rank_scaling(const std::string& s) {
  if (s == "none") return LowRankScaling::none;
  if (s == "eigenvalue") return LowRankScaling::eigenvalue;
  throw ParameterError("unknown low-rank scaling '" + s + "' (expected none|eigenvalue)");
}

struct LowRankOptions {
  int k = 4;
  LowRankScaling scaling = LowRankScaling::eigenvalue;
  int exhaustive_sign_limit = 10;  // above this rank, signs are fixed greedily

  bool operator==(const LowRankOptions&) const = default;
};

/// Rank-k spectral alignment in the spirit of LowRankAlign.
///
/// The k leading eigenpairs (largest eigenvalues) of each graph define the
/// similarity Σ_t w_t·s_t·u_t·v_tᵀ with w_t = sqrt(|λ_t·μ_t|) under eigenvalue
/// scaling (1 otherwise). The sign s_t ∈ {±1} of each eigenvector pair is
/// ambiguous; every choice is tried (greedily one pair at a time for large k)
/// and the assignment with the largest trace(A X B Xᵀ) is kept.
inline MatchOutcome low_rank_align(const Graph& a, const Graph& b, const LowRankOptions& opt = {},
                                   const std::optional<Permutation>& truth = std::nullopt) {
  detail::check_pair(a, b);
  const int n = a.n();
  if (opt.k < 1 || opt.k > n) throw ParameterError("low_rank_align: rank k must lie in [1, n]");
  const auto ea = detail::eigen_descending(a.adj());
  const auto eb = detail::eigen_descending(b.adj());
  Vector weight(opt.k);
  for (int t = 0; t < opt.k; ++t) {
    weight(t) = opt.scaling == LowRankScaling::eigenvalue ? std::sqrt(std::abs(ea.values(t) * eb.values(t))) : 1.0;
  }

  auto solve_with = [&](const Vector& signs) {
    Matrix sim = Matrix::Zero(n, n);
    for (int t = 0; t < opt.k; ++t) {
      sim.noalias() += (weight(t) * signs(t)) * ea.vectors.col(t) * eb.vectors.col(t).transpose();
    }
    const Permutation p = lap_solve(-sim).perm;
    return std::make_pair(p, qap_objective(a, b, p).trace);
  };

  Vector signs = Vector::Ones(opt.k);
  auto best = solve_with(signs);
  if (opt.k <= opt.exhaustive_sign_limit) {
    const long combos = 1L << opt.k;
    for (long mask = 1; mask < combos; ++mask) {
      Vector s(opt.k);
      for (int t = 0; t < opt.k; ++t) s(t) = (mask >> t) & 1L ? -1.0 : 1.0;
      auto cand = solve_with(s);
      if (cand.second > best.second) best = std::move(cand);
    }
  } else {
    for (int t = 0; t < opt.k; ++t) {
      signs(t) = -signs(t);
      auto cand = solve_with(signs);
      if (cand.second > best.second) {
        best = std::move(cand);
      } else {
        signs(t) = -signs(t);
      }
    }
  }
  return outcome_from_permutation(best.first, truth);
}

}  // namespace qapm
