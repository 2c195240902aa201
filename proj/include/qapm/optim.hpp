#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "qapm/diffcore.hpp"

namespace qapm::ad {

struct AdamaxOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adamax moments, one slot per parameter in registration order.
struct AdamaxState {
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> u;
};

/// Infinity-norm Adam variant:
///   m ← β1·m + (1−β1)·g,  u ← max(β2·u, |g|),  θ ← θ − lr/(1−β1^t) · m/(u+ε).
class Adamax {
 public:
  explicit Adamax(AdamaxOptions opt = {}) : opt_(opt) {}

  const AdamaxOptions& options() const { return opt_; }
  const AdamaxState& state() const { return state_; }

  /// Applies one update from each parameter's `grad`. Throws NumericError and
  /// leaves parameters and state untouched when any gradient is non-finite.
  void step(std::span<Parameter* const> params) {
    for (const Parameter* p : params) {
      if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
        throw ShapeError("adamax: gradient shape differs from parameter '" + p->name + "'");
      }
      if (!p->grad.allFinite()) throw NumericError("adamax: non-finite gradient for '" + p->name + "', step rejected");
    }
    if (state_.m.empty()) {
      for (const Parameter* p : params) {
        state_.m.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
        state_.u.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
      }
    } else if (state_.m.size() != params.size()) {
      throw ShapeError("adamax: parameter list changed between steps");
    }
    ++state_.step;
    const double lr_t = opt_.lr / (1.0 - std::pow(opt_.beta1, static_cast<double>(state_.step)));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter& p = *params[k];
      Tensor& m = state_.m[k];
      Tensor& u = state_.u[k];
      m = opt_.beta1 * m + (1.0 - opt_.beta1) * p.grad;
      u = (opt_.beta2 * u).cwiseMax(p.grad.cwiseAbs());
      p.value.array() -= lr_t * m.array() / (u.array() + opt_.eps);
    }
  }

 private:
  AdamaxOptions opt_;
  AdamaxState state_;
};

}  // namespace qapm::ad
