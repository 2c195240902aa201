#pragma once

#include <string>
#include <vector>

#include "qapm/graph.hpp"

namespace qapm {

enum class OperatorKind { identity, degree, adjacency, power, average };

/// One linear map of the generator family, materialized densely.
struct GraphOperator {
  OperatorKind kind;
  int power = 0;  // j for A_j = min(1, A^(2^j)); 0 otherwise
  Matrix dense;
};

/// Ordered generator family [I, D, A, A_1, .., A_J, U] of a graph.
///
/// The order is part of the checkpoint contract: weight index k of a GNN layer
/// multiplies operator k.
class OperatorFamily {
 public:
  static int family_size(int J) { return 4 + J; }

  static OperatorFamily build(const Graph& g, int J) {
    if (J < 0) throw ParameterError("operator power count J must be >= 0");
    const int n = g.n();
    OperatorFamily fam;
    fam.n_ = n;
    fam.J_ = J;
    fam.degrees_ = g.degrees();
    fam.ops_.push_back({OperatorKind::identity, 0, Matrix::Identity(n, n)});
    fam.ops_.push_back({OperatorKind::degree, 0, Matrix(fam.degrees_.asDiagonal())});
    fam.ops_.push_back({OperatorKind::adjacency, 0, g.adj()});

    // min(1, A^(2^j)). For nonnegative A the support of a product only depends
    // on the supports of its factors, so thresholding after every squaring is
    // exact for binary graphs and keeps entries bounded.
    const bool binary = g.adj().unaryExpr([](double v) { return (v == 0.0 || v == 1.0) ? 0.0 : 1.0; }).sum() == 0.0;
    Matrix thresholded = g.adj();
    Matrix literal = g.adj();
    for (int j = 1; j <= J; ++j) {
      Matrix next;
      if (binary) {
        next = (thresholded * thresholded).cwiseMin(1.0);
        thresholded = next;
      } else {
        literal = literal * literal;
        next = literal.cwiseMin(1.0);
      }
      fam.ops_.push_back({OperatorKind::power, j, std::move(next)});
    }
    fam.ops_.push_back({OperatorKind::average, 0, Matrix::Constant(n, n, 1.0 / n)});
    return fam;
  }

  int n() const { return n_; }
  int J() const { return J_; }
  int size() const { return static_cast<int>(ops_.size()); }
  const GraphOperator& op(int idx) const { return ops_.at(static_cast<std::size_t>(idx)); }
  const std::vector<GraphOperator>& ops() const { return ops_; }

  /// ops[idx] · F, using the structure of I, D and U instead of dense products.
  Matrix apply(int idx, const Matrix& F) const {
    check(idx, F);
    const GraphOperator& o = ops_[static_cast<std::size_t>(idx)];
    switch (o.kind) {
      case OperatorKind::identity:
        return F;
      case OperatorKind::degree:
        return degrees_.asDiagonal() * F;
      case OperatorKind::average:
        return F.colwise().mean().replicate(F.rows(), 1);
      default:
        return o.dense * F;
    }
  }

  /// ops[idx]ᵀ · F. Every operator of the family is symmetric, but the
  /// transpose is spelled out so gradients stay correct for any family.
  Matrix apply_transpose(int idx, const Matrix& F) const {
    check(idx, F);
    const GraphOperator& o = ops_[static_cast<std::size_t>(idx)];
    switch (o.kind) {
      case OperatorKind::identity:
        return F;
      case OperatorKind::degree:
        return degrees_.asDiagonal() * F;
      case OperatorKind::average:
        return F.colwise().mean().replicate(F.rows(), 1);
      default:
        return o.dense.transpose() * F;
    }
  }

 private:
  void check(int idx, const Matrix& F) const {
    if (idx < 0 || idx >= size()) throw ParameterError("operator index out of range");
    if (F.rows() != n_) {
      throw ShapeError("feature matrix has " + std::to_string(F.rows()) + " rows, expected " + std::to_string(n_));
    }
  }

  int n_ = 0;
  int J_ = 0;
  Vector degrees_;
  std::vector<GraphOperator> ops_;
};

}  // namespace qapm
