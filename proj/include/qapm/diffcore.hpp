#pragma once

// Dense reverse-mode differentiation over Eigen matrices, plus the neural
// primitives the matching network is built from.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qapm/errors.hpp"
#include "qapm/operators.hpp"

namespace qapm::ad {

using Tensor = Eigen::MatrixXd;

/// Trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor::Zero(value.rows(), value.cols()); }
};

/// What a node's backward rule sees. `in_grads[k]` is null when input k does
/// not need a gradient; otherwise it is an accumulator of the input's shape.
struct BackwardContext {
  const Tensor& out_value;
  const Tensor& out_grad;
  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor v) { return push(std::move(v), {}, nullptr, nullptr, false); }

  /// Leaf bound to `p`; backward() adds into p.grad.
  Var parameter(Parameter& p) { return push(p.value, {}, nullptr, &p, true); }

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    std::vector<int> ids;
    ids.reserve(inputs.size());
    bool needs = false;
    for (const Var& v : inputs) {
      if (v.tape_ != this) throw ContractError("operands belong to a different tape");
      ids.push_back(v.id_);
      needs = needs || nodes_[static_cast<std::size_t>(v.id_)].requires_grad;
    }
    return push(std::move(value), std::move(ids), needs ? std::move(fn) : nullptr, nullptr, needs);
  }

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Tensor& grad(const Var& v) const { return nodes_.at(static_cast<std::size_t>(v.id_)).grad; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(const Var& v) const { return nodes_.at(static_cast<std::size_t>(v.id_)).requires_grad; }

  /// Node ids in the order the last backward() visited them.
  const std::vector<int>& sweep_order() const { return sweep_; }

  /// Reverse sweep from a scalar node; accumulates into bound parameters.
  void backward(const Var& loss) {
    if (loss.tape_ != this) throw ContractError("loss belongs to a different tape");
    Node& root = nodes_[static_cast<std::size_t>(loss.id_)];
    if (root.value.rows() != 1 || root.value.cols() != 1) throw ContractError("backward needs a scalar (1x1) loss");
    for (Node& n : nodes_) n.grad.resize(0, 0);
    sweep_.clear();
    root.grad = Tensor::Ones(1, 1);
    for (int id = loss.id_; id >= 0; --id) {
      Node& node = nodes_[static_cast<std::size_t>(id)];
      if (!node.requires_grad || node.grad.size() == 0) continue;
      sweep_.push_back(id);
      if (node.param != nullptr) {
        if (node.param->grad.rows() != node.value.rows() || node.param->grad.cols() != node.value.cols()) {
          node.param->zero_grad();
        }
        node.param->grad += node.grad;
        continue;
      }
      if (!node.backward) continue;
      BackwardContext ctx{node.value, node.grad, {}, {}};
      ctx.in_values.reserve(node.inputs.size());
      ctx.in_grads.reserve(node.inputs.size());
      for (int in : node.inputs) {
        Node& src = nodes_[static_cast<std::size_t>(in)];
        ctx.in_values.push_back(&src.value);
        if (src.requires_grad) {
          if (src.grad.size() == 0) src.grad = Tensor::Zero(src.value.rows(), src.value.cols());
          ctx.in_grads.push_back(&src.grad);
        } else {
          ctx.in_grads.push_back(nullptr);
        }
      }
      node.backward(ctx);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Tensor value, std::vector<int> inputs, BackwardFn fn, Parameter* param, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(inputs), std::move(fn), param, requires_grad});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::vector<Node> nodes_;
  std::vector<int> sweep_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

inline void require_finite(const Tensor& t, const char* op) {
  if (!t.allFinite()) throw NumericError(std::string(op) + ": non-finite input");
}

inline void require_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) throw ContractError("operands belong to different tapes");
}

inline std::string shape(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

}  // namespace detail

inline Var matmul(const Var& x, const Var& w) {
  detail::require_same_tape(x, w);
  if (x.cols() != w.rows()) {
    throw ShapeError("matmul: " + detail::shape(x.value()) + " times " + detail::shape(w.value()));
  }
  detail::require_finite(x.value(), "matmul");
  detail::require_finite(w.value(), "matmul");
  Tensor out = x.value() * w.value();
  return x.tape()->record(std::move(out), {x, w}, [](const BackwardContext& c) {
    if (c.in_grads[0]) c.in_grads[0]->noalias() += c.out_grad * c.in_values[1]->transpose();
    if (c.in_grads[1]) c.in_grads[1]->noalias() += c.in_values[0]->transpose() * c.out_grad;
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shapes differ");
  return a.tape()->record(a.value() + b.value(), {a, b}, [](const BackwardContext& c) {
    if (c.in_grads[0]) *c.in_grads[0] += c.out_grad;
    if (c.in_grads[1]) *c.in_grads[1] += c.out_grad;
  });
}

inline Var scale(const Var& a, double factor) {
  return a.tape()->record(a.value() * factor, {a}, [factor](const BackwardContext& c) {
    if (c.in_grads[0]) *c.in_grads[0] += factor * c.out_grad;
  });
}

/// s · x for a 1x1 node s.
inline Var scale_by(const Var& s, const Var& x) {
  detail::require_same_tape(s, x);
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: factor must be 1x1");
  return x.tape()->record(s.value()(0, 0) * x.value(), {s, x}, [](const BackwardContext& c) {
    if (c.in_grads[0]) (*c.in_grads[0])(0, 0) += c.out_grad.cwiseProduct(*c.in_values[1]).sum();
    if (c.in_grads[1]) *c.in_grads[1] += (*c.in_values[0])(0, 0) * c.out_grad;
  });
}

inline Var sum(const Var& a) {
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [](const BackwardContext& c) {
    if (c.in_grads[0]) c.in_grads[0]->array() += c.out_grad(0, 0);
  });
}

/// Σ a∘w for a constant weight tensor w.
inline Var dot(const Var& a, Tensor w) {
  if (a.rows() != w.rows() || a.cols() != w.cols()) throw ShapeError("dot: shapes differ");
  Tensor out(1, 1);
  out(0, 0) = a.value().cwiseProduct(w).sum();
  return a.tape()->record(std::move(out), {a}, [w = std::move(w)](const BackwardContext& c) {
    if (c.in_grads[0]) *c.in_grads[0] += c.out_grad(0, 0) * w;
  });
}

inline Var sum_squares(const Var& a) {
  Tensor out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return a.tape()->record(std::move(out), {a}, [](const BackwardContext& c) {
    if (c.in_grads[0]) *c.in_grads[0] += 2.0 * c.out_grad(0, 0) * *c.in_values[0];
  });
}

/// max(0, z) on the first d/2 columns, identity on the rest.
inline Var split_rho(const Var& z) {
  const Eigen::Index d = z.cols();
  if (d % 2 != 0) throw ShapeError("split_rho: feature count must be even");
  detail::require_finite(z.value(), "split_rho");
  const Eigen::Index half = d / 2;
  Tensor out = z.value();
  out.leftCols(half) = out.leftCols(half).cwiseMax(0.0);
  return z.tape()->record(std::move(out), {z}, [half](const BackwardContext& c) {
    if (!c.in_grads[0]) return;
    const Tensor& in = *c.in_values[0];
    Tensor& g = *c.in_grads[0];
    g.leftCols(half).array() += (in.leftCols(half).array() > 0.0).select(c.out_grad.leftCols(half).array(), 0.0);
    g.rightCols(in.cols() - half) += c.out_grad.rightCols(in.cols() - half);
  });
}

/// Elementwise exponential.
inline Var exp(const Var& x) {
  detail::require_finite(x.value(), "exp");
  Tensor out = x.value().array().exp().matrix();
  if (!out.allFinite()) throw NumericError("exp: overflow");
  return x.tape()->record(std::move(out), {x}, [](const BackwardContext& c) {
    if (c.in_grads[0]) *c.in_grads[0] += c.out_grad.cwiseProduct(c.out_value);
  });
}

/// Per-feature statistics tracked for evaluation-mode normalization.
struct RunningStats {
  Tensor mean;  // 1 x d
  Tensor var;   // 1 x d

  static RunningStats fresh(Eigen::Index d) { return {Tensor::Zero(1, d), Tensor::Ones(1, d)}; }
};

enum class NormMode { batch, running };

struct BatchNormOptions {
  NormMode mode = NormMode::batch;
  double eps = 1e-5;
  double momentum = 0.1;
  RunningStats* stats = nullptr;  // updated in batch mode when non-null
};

/// Spatial batch normalization: each column is normalized over all rows (every
/// node of every graph in the batch), then scaled by gamma and shifted by beta.
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const BatchNormOptions& opt = {}) {
  detail::require_same_tape(x, gamma);
  detail::require_same_tape(x, beta);
  const Eigen::Index rows = x.rows();
  const Eigen::Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ShapeError("batch_norm: gamma/beta must be 1x" + std::to_string(d));
  }
  if (rows == 0) throw ShapeError("batch_norm: empty batch");
  detail::require_finite(x.value(), "batch_norm");

  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd var;
  if (opt.mode == NormMode::batch) {
    mean = x.value().colwise().mean();
    var = (x.value().rowwise() - mean).array().square().colwise().mean();
    if (opt.stats != nullptr) {
      opt.stats->mean = (1.0 - opt.momentum) * opt.stats->mean + opt.momentum * mean;
      opt.stats->var = (1.0 - opt.momentum) * opt.stats->var + opt.momentum * var;
    }
  } else {
    if (opt.stats == nullptr) throw ContractError("batch_norm: running mode needs running statistics");
    mean = opt.stats->mean;
    var = opt.stats->var;
  }
  const Eigen::RowVectorXd inv_std = (var.array() + opt.eps).rsqrt();
  auto xhat = std::make_shared<Tensor>((x.value().rowwise() - mean).array().rowwise() * inv_std.array());
  Tensor out = (xhat->array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  const bool batch_mode = opt.mode == NormMode::batch;
  return x.tape()->record(std::move(out), {x, gamma, beta}, [xhat, inv_std, batch_mode](const BackwardContext& c) {
    const Tensor& dy = c.out_grad;
    if (c.in_grads[1]) *c.in_grads[1] += dy.cwiseProduct(*xhat).colwise().sum();
    if (c.in_grads[2]) *c.in_grads[2] += dy.colwise().sum();
    if (!c.in_grads[0]) return;
    const Eigen::ArrayXXd dxhat = dy.array().rowwise() * c.in_values[1]->row(0).array();
    if (!batch_mode) {
      *c.in_grads[0] += (dxhat.rowwise() * inv_std.array()).matrix();
      return;
    }
    const double count = static_cast<double>(dy.rows());
    const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
    const Eigen::RowVectorXd sum_dx = (dxhat * xhat->array()).colwise().sum();
    Eigen::ArrayXXd dx = (count * dxhat).rowwise() - sum_d.array();
    dx -= xhat->array().rowwise() * sum_dx.array();
    *c.in_grads[0] += (dx.rowwise() * (inv_std.array() / count)).matrix();
  });
}

/// Softmax along each row, with the row max subtracted first.
inline Var row_softmax(const Var& m) {
  detail::require_finite(m.value(), "row_softmax");
  Tensor out = m.value().colwise() - m.value().rowwise().maxCoeff();
  out = out.array().exp();
  out = out.array().colwise() / out.rowwise().sum().array();
  return m.tape()->record(std::move(out), {m}, [](const BackwardContext& c) {
    if (!c.in_grads[0]) return;
    const Tensor& p = c.out_value;
    const Eigen::VectorXd inner = c.out_grad.cwiseProduct(p).rowwise().sum();
    *c.in_grads[0] += p.cwiseProduct(c.out_grad.colwise() - inner);
  });
}

/// −(1/rows)·Σ_i log P(i, target_i) for a row-stochastic P.
inline Var cross_entropy(const Var& p, std::vector<int> targets) {
  const Tensor& v = p.value();
  if (static_cast<Eigen::Index>(targets.size()) != v.rows()) throw ShapeError("cross_entropy: one target per row");
  detail::require_finite(v, "cross_entropy");
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= v.cols()) throw ShapeError("cross_entropy: target index out of range");
    if (std::abs(v.row(i).sum() - 1.0) > 1e-9) throw ParameterError("cross_entropy: rows must sum to 1");
    total -= std::log(v(i, t));
  }
  Tensor out(1, 1);
  out(0, 0) = total / static_cast<double>(v.rows());
  if (!std::isfinite(out(0, 0))) throw NumericError("cross_entropy: target probability underflowed to zero");
  return p.tape()->record(std::move(out), {p}, [targets = std::move(targets)](const BackwardContext& c) {
    if (!c.in_grads[0]) return;
    const Tensor& pv = *c.in_values[0];
    const double scale = c.out_grad(0, 0) / static_cast<double>(pv.rows());
    for (Eigen::Index i = 0; i < pv.rows(); ++i) {
      const int t = targets[static_cast<std::size_t>(i)];
      (*c.in_grads[0])(i, t) -= scale / pv(i, t);
    }
  });
}

/// Unit ℓ2 rows; all-zero rows stay zero.
inline Var row_normalize(const Var& x) {
  const Eigen::VectorXd norms = x.value().rowwise().norm();
  Tensor out = x.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (norms(i) > 0.0) out.row(i) /= norms(i);
  }
  return x.tape()->record(std::move(out), {x}, [norms](const BackwardContext& c) {
    if (!c.in_grads[0]) return;
    const Tensor& y = c.out_value;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      if (norms(i) == 0.0) continue;
      const double proj = y.row(i).dot(c.out_grad.row(i));
      c.in_grads[0]->row(i) += (c.out_grad.row(i) - proj * y.row(i)) / norms(i);
    }
  });
}

using FamilyBatch = std::shared_ptr<const std::vector<OperatorFamily>>;

/// Σ_k B_k · x · θ_k over the generator family, applied block-diagonally to a
/// stack of graphs: rows of x are the nodes of graph 0, then graph 1, ...
inline Var graph_conv(const FamilyBatch& families, const Var& x, const std::vector<Var>& thetas) {
  if (!families || families->empty()) throw ShapeError("graph_conv: no graphs");
  const int gens = families->front().size();
  if (static_cast<int>(thetas.size()) != gens) throw ShapeError("graph_conv: one weight matrix per generator");
  Eigen::Index total = 0;
  for (const auto& f : *families) {
    if (f.size() != gens) throw ShapeError("graph_conv: families differ in size");
    total += f.n();
  }
  if (x.rows() != total) throw ShapeError("graph_conv: feature rows do not match stacked node count");
  detail::require_finite(x.value(), "graph_conv");
  const Eigen::Index d_in = x.cols();
  const Eigen::Index d_out = thetas.front().cols();
  Tensor stacked(gens * d_in, d_out);
  for (int g = 0; g < gens; ++g) {
    const Tensor& th = thetas[static_cast<std::size_t>(g)].value();
    if (th.rows() != d_in || th.cols() != d_out) throw ShapeError("graph_conv: weight shape mismatch");
    stacked.middleRows(g * d_in, d_in) = th;
  }
  auto z = std::make_shared<Tensor>(total, gens * d_in);
  Eigen::Index off = 0;
  for (const auto& f : *families) {
    const Tensor xb = x.value().middleRows(off, f.n());
    for (int g = 0; g < gens; ++g) z->block(off, g * d_in, f.n(), d_in) = f.apply(g, xb);
    off += f.n();
  }
  Tensor out = *z * stacked;
  std::vector<Var> inputs{x};
  inputs.insert(inputs.end(), thetas.begin(), thetas.end());
  return x.tape()->record(std::move(out), inputs, [families, z, stacked, gens, d_in](const BackwardContext& c) {
    for (int g = 0; g < gens; ++g) {
      if (Tensor* gt = c.in_grads[static_cast<std::size_t>(g) + 1]) {
        gt->noalias() += z->middleCols(g * d_in, d_in).transpose() * c.out_grad;
      }
    }
    if (!c.in_grads[0]) return;
    const Tensor dz = c.out_grad * stacked.transpose();
    Eigen::Index off = 0;
    for (const auto& f : *families) {
      for (int g = 0; g < gens; ++g) {
        c.in_grads[0]->middleRows(off, f.n()) += f.apply_transpose(g, dz.block(off, g * d_in, f.n(), d_in));
      }
      off += f.n();
    }
  });
}

/// Stacked per-graph similarity blocks: rows [b·n, (b+1)·n) hold E1_b · E2_bᵀ.
inline Var block_outer(const Var& e1, const Var& e2, int n) {
  detail::require_same_tape(e1, e2);
  if (n <= 0 || e1.rows() % n != 0 || e1.rows() != e2.rows() || e1.cols() != e2.cols()) {
    throw ShapeError("block_outer: embeddings must stack equally sized graphs");
  }
  const Eigen::Index blocks = e1.rows() / n;
  Tensor out(e1.rows(), n);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    out.middleRows(b * n, n).noalias() = e1.value().middleRows(b * n, n) * e2.value().middleRows(b * n, n).transpose();
  }
  return e1.tape()->record(std::move(out), {e1, e2}, [n, blocks](const BackwardContext& c) {
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const auto go = c.out_grad.middleRows(b * n, n);
      if (c.in_grads[0]) c.in_grads[0]->middleRows(b * n, n).noalias() += go * c.in_values[1]->middleRows(b * n, n);
      if (c.in_grads[1]) {
        c.in_grads[1]->middleRows(b * n, n).noalias() += go.transpose() * c.in_values[0]->middleRows(b * n, n);
      }
    }
  });
}

}  // namespace qapm::ad
