#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qapm/assign.hpp"

namespace qapm {

enum class Decode { argmax, lap };

inline Decode parse_decode(const std::string& s) {
  if (s == "argmax") return Decode::argmax;
  if (s == "lap") return Decode::lap;
  throw ParameterError("unknown decode rule '" + s + "' (expected argmax|lap)");
}

inline std::string to_string(Decode d) { return d == Decode::argmax ? "argmax" : "lap"; }

/// Result of matching g1 onto g2. `assignment[i]` is the node of g2 matched to
/// node i of g1; under argmax decoding it need not be a bijection.
struct MatchOutcome {
  Matrix soft;  // row-stochastic correspondence
  std::vector<int> assignment;
  std::optional<double> recovery;

  bool is_bijection() const {
    std::vector<char> seen(assignment.size(), 0);
    for (int j : assignment) {
      if (j < 0 || j >= static_cast<int>(assignment.size()) || seen[static_cast<std::size_t>(j)]) return false;
      seen[static_cast<std::size_t>(j)] = 1;
    }
    return true;
  }

  Permutation permutation() const { return Permutation(assignment); }
};

/// Fraction of rows i with assignment[i] == truth(i).
inline double recovery_rate(const std::vector<int>& assignment, const Permutation& truth) {
  if (static_cast<int>(assignment.size()) != truth.size()) throw ShapeError("recovery: size mismatch");
  if (assignment.empty()) return 1.0;
  int hits = 0;
  for (int i = 0; i < truth.size(); ++i) hits += assignment[static_cast<std::size_t>(i)] == truth(i) ? 1 : 0;
  return static_cast<double>(hits) / truth.size();
}

inline std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index j = 0;
    scores.row(i).maxCoeff(&j);
    out[static_cast<std::size_t>(i)] = static_cast<int>(j);
  }
  return out;
}

/// Decodes a similarity matrix (larger = better) into an assignment.
inline std::vector<int> decode_scores(const Matrix& scores, Decode rule) {
  if (rule == Decode::argmax) return argmax_rows(scores);
  return lap_solve(-scores).perm.map();
}

/// Outcome whose soft matrix is the 0/1 matrix of a hard permutation.
inline MatchOutcome outcome_from_permutation(const Permutation& p, const std::optional<Permutation>& truth) {
  MatchOutcome out{p.matrix(), p.map(), std::nullopt};
  if (truth) out.recovery = recovery_rate(out.assignment, *truth);
  return out;
}

}  // namespace qapm
