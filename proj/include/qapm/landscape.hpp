#pragma once

// Optimization landscape of the polynomial embedding model E_A = P_β(A)·Y:
// Krylov moment matrices, the quotient-of-quadratic-forms loss, its mean-field
// maximizer, semicircle moments, and Monte Carlo concentration experiments.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "qapm/errors.hpp"
#include "qapm/graph.hpp"
#include "qapm/rng.hpp"

namespace qapm::landscape {

/// Q matrices of a (d+1)-term Krylov basis, one entry per random column y_t.
struct MomentMatrices {
  std::vector<Matrix> qab;
  std::vector<Matrix> qaa;
  std::vector<Matrix> qbb;
  bool symmetrized = false;

  int columns() const { return static_cast<int>(qab.size()); }
  int degree() const { return qab.empty() ? -1 : static_cast<int>(qab.front().rows()) - 1; }

  static Matrix total(const std::vector<Matrix>& per_column) {
    Matrix out = Matrix::Zero(per_column.front().rows(), per_column.front().cols());
    for (const Matrix& m : per_column) out += m;
    return out;
  }
};

inline constexpr double kOverflowLimit = 1e150;

namespace detail {

// Columns y, M·y, ..., M^d·y.
inline Matrix krylov_basis(const Matrix& m, const Vector& y, int d) {
  Matrix basis(y.size(), d + 1);
  basis.col(0) = y;
  for (int r = 1; r <= d; ++r) basis.col(r) = m * basis.col(r - 1);
  if (!basis.allFinite() || basis.cwiseAbs().maxCoeff() > kOverflowLimit) {
    throw NumericError("krylov_moments: powers overflow; renormalize the matrices (e.g. scale by n^-1/2)");
  }
  return basis;
}

inline Matrix symmetrize(const Matrix& q) { return 0.5 * (q + q.transpose()); }

}  // namespace detail

/// Q(A,B)_{rs} = ⟨A^r y, B^s y⟩ and the matching Q(A,A), Q(B,B) for one column.
inline MomentMatrices krylov_moments(const Matrix& a, const Matrix& b, const Vector& y, int d, bool symmetrize = true) {
  if (d < 0) throw ParameterError("krylov_moments: degree must be >= 0");
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows() || y.size() != a.rows()) {
    throw ShapeError("krylov_moments: sizes disagree");
  }
  const Matrix ka = detail::krylov_basis(a, y, d);
  const Matrix kb = detail::krylov_basis(b, y, d);
  Matrix qab = ka.transpose() * kb;
  Matrix qaa = ka.transpose() * ka;
  Matrix qbb = kb.transpose() * kb;
  if (symmetrize) {
    qab = detail::symmetrize(qab);
    qaa = detail::symmetrize(qaa);
    qbb = detail::symmetrize(qbb);
  }
  MomentMatrices mm;
  mm.qab.push_back(std::move(qab));
  mm.qaa.push_back(std::move(qaa));
  mm.qbb.push_back(std::move(qbb));
  mm.symmetrized = symmetrize;
  return mm;
}

/// Multi-column version: one set of matrices per column of Y.
inline MomentMatrices krylov_moments(const Matrix& a, const Matrix& b, const Matrix& y, int d, bool symmetrize = true) {
  MomentMatrices mm;
  mm.symmetrized = symmetrize;
  for (Eigen::Index t = 0; t < y.cols(); ++t) {
    MomentMatrices one = krylov_moments(a, b, Vector(y.col(t)), d, symmetrize);
    mm.qab.push_back(std::move(one.qab.front()));
    mm.qaa.push_back(std::move(one.qaa.front()));
    mm.qbb.push_back(std::move(one.qbb.front()));
  }
  return mm;
}

namespace detail {

// Σ_t β_tᵀ Q_t β_t, with a single β column shared across every t.
inline double quad_sum(const std::vector<Matrix>& q, const Matrix& beta) {
  if (beta.cols() != 1 && beta.cols() != static_cast<Eigen::Index>(q.size())) {
    throw ShapeError("beta needs one column per random vector, or a single shared column");
  }
  double s = 0.0;
  for (std::size_t t = 0; t < q.size(); ++t) {
    if (q[t].rows() != beta.rows()) throw ShapeError("beta has the wrong number of coefficients");
    const Vector bt = beta.col(beta.cols() == 1 ? 0 : static_cast<Eigen::Index>(t));
    s += bt.dot(q[t] * bt);
  }
  return s;
}

}  // namespace detail

/// −Σ_t β_tᵀ Q(A,B)_t β_t / Σ_t β_tᵀ (Q(A,A)_t + Q(B,B)_t) β_t.
inline double loss_beta(const MomentMatrices& mm, const Matrix& beta) {
  if (mm.columns() == 0) throw ShapeError("loss_beta: empty moment matrices");
  if (!beta.allFinite()) throw NumericError("loss_beta: non-finite coefficients");
  std::vector<Matrix> qab = mm.qab;
  if (!mm.symmetrized) {
    for (Matrix& q : qab) q = detail::symmetrize(q);
  }
  const double num = detail::quad_sum(qab, beta);
  const double den = detail::quad_sum(mm.qaa, beta) + detail::quad_sum(mm.qbb, beta);
  if (!(den > 0.0)) throw DegenerateInputError("loss_beta: denominator quadratic form is not positive");
  return -num / den;
}

/// Value of −βᵀRβ / βᵀSβ.
inline double quotient_loss(const Matrix& r, const Matrix& s, const Vector& beta) {
  const double den = beta.dot(s * beta);
  if (!(den > 0.0)) throw DegenerateInputError("quotient: denominator quadratic form is not positive");
  return -beta.dot(r * beta) / den;
}

/// ∇_β of −βᵀRβ / βᵀSβ for symmetric R, S:
///   −2·(Rβ·(βᵀSβ) − Sβ·(βᵀRβ)) / (βᵀSβ)².
inline Vector quotient_gradient(const Matrix& r, const Matrix& s, const Vector& beta) {
  const Vector rb = r * beta;
  const Vector sb = s * beta;
  const double den = beta.dot(sb);
  if (!(den > 0.0)) throw DegenerateInputError("quotient gradient: denominator quadratic form is not positive");
  return -2.0 * (rb * den - sb * beta.dot(rb)) / (den * den);
}

struct MeanFieldOptimum {
  Vector beta;  // unit norm
  double value = 0.0;
  bool ridge_applied = false;
};

/// Maximizes βᵀR̄β / βᵀS̄β. With S̄ = CCᵀ, the maximizer is C^{-ᵀ}v for the top
/// eigenvector v of C^{-1} R̄ C^{-ᵀ}, and the maximum is its eigenvalue.
///
/// When S̄ is not positive definite a NotSpdError is thrown, unless
/// `allow_ridge` is set; then 1e-10·trace(S̄) is added to the diagonal and the
/// result is flagged.
inline MeanFieldOptimum meanfield_opt(const Matrix& sbar, const Matrix& rbar, bool allow_ridge = false) {
  if (sbar.rows() != sbar.cols() || rbar.rows() != rbar.cols() || sbar.rows() != rbar.rows() || sbar.rows() == 0) {
    throw ShapeError("meanfield_opt: S and R must be square and of equal size");
  }
  Matrix s = detail::symmetrize(sbar);
  bool ridge = false;
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) {
    const double eps = 1e-10 * s.trace();
    if (!allow_ridge) {
      throw NotSpdError("meanfield_opt: S is not positive definite; add a ridge of 1e-10*trace(S) = " +
                        std::to_string(eps) + " to its diagonal");
    }
    s.diagonal().array() += eps;
    llt.compute(s);
    ridge = true;
    if (llt.info() != Eigen::Success) throw NotSpdError("meanfield_opt: S is not positive definite even with a ridge");
  }
  const Matrix c = llt.matrixL();
  const auto lower = c.triangularView<Eigen::Lower>();
  // M = C^{-1} R C^{-T}
  Matrix m = lower.solve(detail::symmetrize(rbar));
  m = lower.solve(m.transpose().eval()).transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(detail::symmetrize(m));
  if (es.info() != Eigen::Success) throw NumericError("meanfield_opt: eigensolver failed");
  const Eigen::Index top = es.eigenvalues().size() - 1;
  Vector beta = c.transpose().triangularView<Eigen::Upper>().solve(Vector(es.eigenvectors().col(top)));
  beta.normalize();
  return {beta, es.eigenvalues()(top), ridge};
}

/// Moment (σ²/2π)∫_{−2}^{2} λ^m √(4−λ²) dλ of the semicircle law, computed by
/// Gauss–Chebyshev quadrature of the second kind (exact for polynomials).
inline double semicircle_moment(int m, double sigma2 = 1.0) {
  if (m < 0) throw ParameterError("semicircle_moment: power must be >= 0");
  if (m % 2 != 0) return 0.0;
  // λ = 2x maps the integral to (2^{m+2}/2π)·∫_{−1}^{1} x^m √(1−x²) dx.
  const int nodes = m / 2 + 2;
  double acc = 0.0;
  for (int i = 1; i <= nodes; ++i) {
    const double theta = i * std::numbers::pi / (nodes + 1);
    const double w = std::numbers::pi / (nodes + 1) * std::sin(theta) * std::sin(theta);
    acc += w * std::pow(std::cos(theta), m);
  }
  return sigma2 * std::ldexp(acc, m + 2) / (2.0 * std::numbers::pi);
}

/// Experiment-level description of the random matrices.
struct WignerSpec {
  int n = 100;
  double scale_exponent = 0.5;  // A = n^{-scale_exponent}·W
  double noise_level = 0.0;     // entry std of ν is noise_level/√n

  void validate() const {
    if (n < 2) throw ParameterError("wigner: n must be >= 2");
    if (noise_level < 0.0) throw ParameterError("wigner: noise level must be >= 0");
  }
};

/// Symmetric matrix with i.i.d. standard normal entries on and above the
/// diagonal, scaled by n^{-exponent}.
inline Matrix sample_wigner(int n, double exponent, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) w(i, j) = w(j, i) = normal(rng);
  }
  return w * std::pow(static_cast<double>(n), -exponent);
}

/// Symmetric Gaussian perturbation with entry std level/√n (diagonal included).
inline Matrix sample_symmetric_noise(int n, double level, Rng& rng) {
  return sample_wigner(n, 0.5, rng) * level;
}

inline Matrix sample_gaussian(Eigen::Index rows, Eigen::Index cols, double sigma2, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(sigma2));
  Matrix y(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) y(i, j) = normal(rng);
  }
  return y;
}

/// Powers M^0..M^d.
inline std::vector<Matrix> matrix_powers(const Matrix& m, int d) {
  std::vector<Matrix> out;
  out.push_back(Matrix::Identity(m.rows(), m.cols()));
  for (int r = 1; r <= d; ++r) out.push_back(out.back() * m);
  return out;
}

/// E_Y Q(A,B)_{rs} = σ²·trace(A^r B^s), symmetrized; for B = A this is
/// σ²·Σ_i λ_i^{r+s}.
inline Matrix expected_moments(const std::vector<Matrix>& a_pows, const std::vector<Matrix>& b_pows, double sigma2) {
  const int terms = static_cast<int>(a_pows.size());
  Matrix q(terms, terms);
  for (int r = 0; r < terms; ++r) {
    for (int s = 0; s < terms; ++s) {
      // trace(XY) = Σ X∘Yᵀ
      q(r, s) = sigma2 * a_pows[static_cast<std::size_t>(r)].cwiseProduct(b_pows[static_cast<std::size_t>(s)].transpose()).sum();
    }
  }
  return detail::symmetrize(q);
}

/// One row of a sweep report.
struct SweepRow {
  int n = 0;
  int d = 0;
  int k = 0;
  int trial_count = 0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::uint64_t seed = 0;
};

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "n,d,k,trial_count,metric_name,mean,std,seed\n";
  out.precision(17);
  for (const SweepRow& r : rows) {
    out << r.n << ',' << r.d << ',' << r.k << ',' << r.trial_count << ',' << r.metric << ',' << r.mean << ','
        << r.std << ',' << r.seed << '\n';
  }
}

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  const double sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
  return {m, sd};
}

struct ConcentrationConfig {
  WignerSpec spec;
  int d = 3;
  int k = 1;
  double sigma2 = 1.0;
  std::vector<int> sizes{100, 200, 400, 800};
  int trials = 50;
  int probes = 256;  // random unit β per trial
  std::uint64_t seed = 0;
};

/// ε̂ for one sampled A: the largest relative deviation of βᵀQ(A,A)β from
/// βᵀE_Y Q(A,A)β over random unit β.
inline double concentration_trial(const Matrix& a, int d, int k, double sigma2, int probes, Rng& rng) {
  const Matrix y = sample_gaussian(a.rows(), k, sigma2, rng);
  const MomentMatrices mm = krylov_moments(a, a, y, d);
  const auto pows = matrix_powers(a, d);
  const Matrix expected = expected_moments(pows, pows, sigma2);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    Matrix beta(d + 1, k);
    for (Eigen::Index i = 0; i < beta.size(); ++i) beta.data()[i] = normal(rng);
    beta /= beta.norm();
    const double sampled = detail::quad_sum(mm.qaa, beta);
    double mean = 0.0;
    for (int t = 0; t < k; ++t) mean += beta.col(t).dot(expected * beta.col(t));
    worst = std::max(worst, std::abs(sampled - mean) / mean);
  }
  return worst;
}

/// Mean and spread of ε̂ at each size; trial seeds derive from (seed, n, trial).
inline std::vector<SweepRow> concentration_sweep(const ConcentrationConfig& cfg) {
  if (cfg.d < 0 || cfg.k < 1 || cfg.trials < 0 || cfg.probes < 1) throw ParameterError("concentration_sweep: bad config");
  for (std::size_t i = 1; i < cfg.sizes.size(); ++i) {
    if (cfg.sizes[i] <= cfg.sizes[i - 1]) throw ParameterError("concentration_sweep: sizes must be ascending");
  }
  std::vector<SweepRow> rows;
  for (int n : cfg.sizes) {
    WignerSpec spec = cfg.spec;
    spec.n = n;
    spec.validate();
    std::vector<double> eps;
    for (int t = 0; t < cfg.trials; ++t) {
      Rng rng = make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)));
      const Matrix a = sample_wigner(n, spec.scale_exponent, rng);
      eps.push_back(concentration_trial(a, cfg.d, cfg.k, cfg.sigma2, cfg.probes, rng));
    }
    const auto [m, sd] = mean_std(eps);
    rows.push_back({n, cfg.d, cfg.k, cfg.trials, "epsilon_hat", m, sd, cfg.seed});
  }
  return rows;
}

struct GradGapConfig {
  WignerSpec spec;  // spec.n is the matrix size
  int d = 3;
  int k = 1;
  double sigma2 = 1.0;
  Vector beta;  // d+1 coefficients shared by all k columns
  int trials = 20;
  std::uint64_t seed = 0;
};

/// Per-trial quantities of the gradient-distance experiment.
struct GradGapTrial {
  double distance = 0.0;  // ‖∇L̂(β) − ∇g(β)‖
  double term1 = 0.0;     // ½·|(βᵀS̃β)^{-1} − (βᵀSβ)^{-1}|·‖E Q(A,B)β‖
  double term2 = 0.0;     // ½·|L̂(β)|·‖(1+ε)S̃β/βᵀS̃β − Sβ/βᵀSβ‖
  double epsilon = 0.0;   // |βᵀS̃β/βᵀSβ − 1|
  double sampled_loss = 0.0;
  Vector sampled_grad;
};

struct GradGapReport {
  int n = 0;
  std::vector<GradGapTrial> trials;
  Vector meanfield_grad;
  double meanfield_loss = 0.0;
  Matrix rbar;  // E_{A,B,Y} Q(A,B)
  Matrix sbar;  // E_{A,B,Y} (Q(A,A) + Q(B,B))

  double mean_distance() const {
    std::vector<double> xs;
    for (const auto& t : trials) xs.push_back(t.distance);
    return mean_std(xs).first;
  }
};

/// Samples A (Wigner), B = A + ν and Y per trial; compares the gradient of the
/// sampled loss L̂ = −βᵀQ(A,B)β/βᵀS̃β (S̃ = Q(A,A)+Q(B,B)) with that of the
/// mean-field loss g, whose expectations over Y are exact and over (A,B) are
/// averaged across the trials.
inline GradGapReport gradient_gap(const GradGapConfig& cfg) {
  cfg.spec.validate();
  if (cfg.beta.size() != cfg.d + 1) throw ShapeError("gradient_gap: beta needs d+1 coefficients");
  if (cfg.trials < 1) throw ParameterError("gradient_gap: need at least one trial");
  const int n = cfg.spec.n;
  struct Sampled {
    Matrix r_hat, s_tilde, s_expected;
  };
  std::vector<Sampled> samples;
  GradGapReport rep;
  rep.n = n;
  rep.rbar = Matrix::Zero(cfg.d + 1, cfg.d + 1);
  rep.sbar = Matrix::Zero(cfg.d + 1, cfg.d + 1);
  for (int t = 0; t < cfg.trials; ++t) {
    Rng rng = make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)));
    const Matrix a = sample_wigner(n, cfg.spec.scale_exponent, rng);
    Matrix b = a;
    if (cfg.spec.noise_level > 0.0) b += sample_symmetric_noise(n, cfg.spec.noise_level, rng);
    const Matrix y = sample_gaussian(n, cfg.k, cfg.sigma2, rng);
    const MomentMatrices mm = krylov_moments(a, b, y, cfg.d);
    const auto ap = matrix_powers(a, cfg.d);
    const auto bp = matrix_powers(b, cfg.d);
    const double cols = cfg.k;
    const Matrix e_ab = cols * expected_moments(ap, bp, cfg.sigma2);
    const Matrix e_s = cols * (expected_moments(ap, ap, cfg.sigma2) + expected_moments(bp, bp, cfg.sigma2));
    rep.rbar += e_ab / cfg.trials;
    rep.sbar += e_s / cfg.trials;
    samples.push_back({MomentMatrices::total(mm.qab), MomentMatrices::total(mm.qaa) + MomentMatrices::total(mm.qbb), e_s});
  }
  const Vector& beta = cfg.beta;
  rep.meanfield_grad = quotient_gradient(rep.rbar, rep.sbar, beta);
  rep.meanfield_loss = quotient_loss(rep.rbar, rep.sbar, beta);
  const Vector rbar_beta = rep.rbar * beta;
  for (const Sampled& s : samples) {
    GradGapTrial tr;
    tr.sampled_loss = quotient_loss(s.r_hat, s.s_tilde, beta);
    tr.sampled_grad = quotient_gradient(s.r_hat, s.s_tilde, beta);
    tr.distance = (tr.sampled_grad - rep.meanfield_grad).norm();
    const Vector st_beta = s.s_tilde * beta;
    const Vector se_beta = s.s_expected * beta;
    const double q_tilde = beta.dot(st_beta);
    const double q_exp = beta.dot(se_beta);
    tr.epsilon = std::abs(q_tilde / q_exp - 1.0);
    tr.term1 = 0.5 * std::abs(1.0 / q_tilde - 1.0 / q_exp) * rbar_beta.norm();
    tr.term2 = 0.5 * std::abs(tr.sampled_loss) * ((1.0 + tr.epsilon) * st_beta / q_tilde - se_beta / q_exp).norm();
    rep.trials.push_back(std::move(tr));
  }
  return rep;
}

/// Sweep rows (distance, term1, term2, epsilon) for one size.
inline std::vector<SweepRow> gradient_gap_rows(const GradGapConfig& cfg, const GradGapReport& rep) {
  auto collect = [&](auto field) {
    std::vector<double> xs;
    for (const auto& t : rep.trials) xs.push_back(field(t));
    return mean_std(xs);
  };
  std::vector<SweepRow> rows;
  auto push = [&](const char* name, std::pair<double, double> ms) {
    rows.push_back({rep.n, cfg.d, cfg.k, static_cast<int>(rep.trials.size()), name, ms.first, ms.second, cfg.seed});
  };
  push("grad_distance", collect([](const GradGapTrial& t) { return t.distance; }));
  push("bound_term1", collect([](const GradGapTrial& t) { return t.term1; }));
  push("bound_term2", collect([](const GradGapTrial& t) { return t.term2; }));
  push("epsilon", collect([](const GradGapTrial& t) { return t.epsilon; }));
  return rows;
}

/// Spectral moment (1/n)·Σ_i λ_i^m of a symmetric matrix.
inline double spectral_moment(const Matrix& a, int m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("spectral_moment: eigensolver failed");
  return es.eigenvalues().array().pow(m).mean();
}

}  // namespace qapm::landscape
