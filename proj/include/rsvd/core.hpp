#ifndef RSVD_CORE_HPP
#define RSVD_CORE_HPP

// Robust rank-one estimation under the density power divergence with a
// normal error model, and sequential extraction of a robust SVD.
//
// The rank-one model is x_ij = a_i b_j + e_ij. Every fixed-point update
// re-weights cell (i, j) by w_ij = exp(-alpha (x_ij - a_i b_j)^2 / (2 sigma2)),
// so alpha = 0 reduces to ordinary alternating least squares (i.e. power
// iteration) and larger alpha discounts cells with large residuals.

#include "rsvd/classical.hpp"
#include "rsvd/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace rsvd {

template <typename Scalar>
Scalar dpd_weight(Scalar residual, Scalar sigma2, Scalar alpha) {
  if (!(sigma2 > Scalar(0))) throw DomainError("dpd_weight: sigma2 must be positive");
  return std::exp(-alpha * residual * residual / (Scalar(2) * sigma2));
}

/// Mean density power divergence loss over all cells of X for the rank-one
/// fit a b^T with scale sigma2. Undefined at alpha = 0; callers in that
/// regime use least_squares_objective.
template <typename DerivedX, typename DerivedA, typename DerivedB>
typename DerivedX::Scalar mdpde_objective(const Eigen::MatrixBase<DerivedX>& X,
                                          const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b,
                                          typename DerivedX::Scalar sigma2,
                                          typename DerivedX::Scalar alpha) {
  using Scalar = typename DerivedX::Scalar;
  if (!(alpha > Scalar(0))) throw DomainError("mdpde_objective: alpha must be > 0");
  if (!(sigma2 > Scalar(0))) throw DomainError("mdpde_objective: sigma2 must be positive");
  if (a.size() != X.rows() || b.size() != X.cols())
    throw ContractError("mdpde_objective: factor lengths do not match X");
  const Scalar c = alpha / (Scalar(2) * sigma2);
  Scalar wsum(0);
  for (Index j = 0; j < X.cols(); ++j)
    wsum += (-c * (X.col(j) - a * b(j)).array().square()).exp().sum();
  const Scalar np = Scalar(X.rows()) * Scalar(X.cols());
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  const Scalar scale = std::pow(two_pi, -alpha / Scalar(2)) * std::pow(sigma2, -alpha / Scalar(2));
  return scale * (std::pow(Scalar(1) + alpha, Scalar(-0.5)) - (Scalar(1) + alpha) / alpha * wsum / np);
}

template <typename DerivedX, typename DerivedA, typename DerivedB>
typename DerivedX::Scalar least_squares_objective(const Eigen::MatrixBase<DerivedX>& X,
                                                  const Eigen::MatrixBase<DerivedA>& a,
                                                  const Eigen::MatrixBase<DerivedB>& b) {
  return (X - a * b.transpose()).squaredNorm();
}

struct UpdateStatus {
  // Rows (or columns) whose weighted denominator vanished; the previous
  // coefficient was kept for those.
  Index degenerate = 0;
};

namespace detail {

// Column j of the weight matrix for the fit a b^T.
template <typename DerivedX, typename DerivedA, typename Scalar>
auto weight_column(const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedA>& a,
                   Scalar bj, Index j, Scalar c) {
  return (-c * (X.col(j) - a * bj).array().square()).exp();
}

}  // namespace detail

/// Weighted per-row slope a_i = sum_j b_j x_ij w_ij / sum_j b_j^2 w_ij with
/// weights taken from the input (a, b, sigma2). Rows are independent.
template <typename DerivedX, typename DerivedA, typename DerivedB>
Vector<typename DerivedX::Scalar> update_left(const Eigen::MatrixBase<DerivedX>& X,
                                              const Eigen::MatrixBase<DerivedA>& a,
                                              const Eigen::MatrixBase<DerivedB>& b,
                                              typename DerivedX::Scalar sigma2,
                                              typename DerivedX::Scalar alpha,
                                              UpdateStatus* status = nullptr) {
  using Scalar = typename DerivedX::Scalar;
  if (!(sigma2 > Scalar(0))) throw DomainError("update_left: sigma2 must be positive");
  if (a.size() != X.rows() || b.size() != X.cols())
    throw ContractError("update_left: factor lengths do not match X");
  const Index n = X.rows();
  Eigen::Array<Scalar, Eigen::Dynamic, 1> num = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(n);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> den = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(n);
  if (alpha == Scalar(0)) {
    num = (X * b).array();
    den.setConstant(b.squaredNorm());
  } else {
    const Scalar c = alpha / (Scalar(2) * sigma2);
    for (Index j = 0; j < X.cols(); ++j) {
      const Scalar bj = b(j);
      const auto w = detail::weight_column(X, a, bj, j, c).eval();
      num += w * X.col(j).array() * bj;
      den += w * (bj * bj);
    }
  }
  Vector<Scalar> out(n);
  Index degenerate = 0;
  for (Index i = 0; i < n; ++i) {
    if (den(i) > Scalar(0)) {
      out(i) = num(i) / den(i);
    } else {
      out(i) = a(i);
      ++degenerate;
    }
  }
  if (status) status->degenerate = degenerate;
  return out;
}

/// Column counterpart of update_left: b_j = sum_i a_i x_ij w_ij / sum_i a_i^2 w_ij.
template <typename DerivedX, typename DerivedA, typename DerivedB>
Vector<typename DerivedX::Scalar> update_right(const Eigen::MatrixBase<DerivedX>& X,
                                               const Eigen::MatrixBase<DerivedA>& a,
                                               const Eigen::MatrixBase<DerivedB>& b,
                                               typename DerivedX::Scalar sigma2,
                                               typename DerivedX::Scalar alpha,
                                               UpdateStatus* status = nullptr) {
  using Scalar = typename DerivedX::Scalar;
  if (!(sigma2 > Scalar(0))) throw DomainError("update_right: sigma2 must be positive");
  if (a.size() != X.rows() || b.size() != X.cols())
    throw ContractError("update_right: factor lengths do not match X");
  const Index p = X.cols();
  const Scalar c = alpha / (Scalar(2) * sigma2);
  const Scalar a_sq = a.squaredNorm();
  const auto a_arr = a.array();
  Vector<Scalar> out(p);
  Index degenerate = 0;
  for (Index j = 0; j < p; ++j) {
    Scalar num, den;
    if (alpha == Scalar(0)) {
      num = X.col(j).dot(a);
      den = a_sq;
    } else {
      const auto w = detail::weight_column(X, a, b(j), j, c).eval();
      num = (w * X.col(j).array() * a_arr).sum();
      den = (w * a_arr.square()).sum();
    }
    if (den > Scalar(0)) {
      out(j) = num / den;
    } else {
      out(j) = b(j);
      ++degenerate;
    }
  }
  if (status) status->degenerate = degenerate;
  return out;
}

struct Sigma2Status {
  bool floored = false;    // ratio fell below sigma2_floor
  bool breakdown = false;  // weights nearly all vanished; previous value kept
};

/// Scale update: sum w r^2 / (sum w - np * alpha / (1 + alpha)^{3/2}) with
/// weights from (a, b, sigma2_prev). The per-cell correction keeps the
/// estimate unbiased for normal errors.
template <typename DerivedX, typename DerivedA, typename DerivedB>
typename DerivedX::Scalar update_sigma2(const Eigen::MatrixBase<DerivedX>& X,
                                        const Eigen::MatrixBase<DerivedA>& a,
                                        const Eigen::MatrixBase<DerivedB>& b,
                                        typename DerivedX::Scalar sigma2_prev,
                                        typename DerivedX::Scalar alpha,
                                        typename DerivedX::Scalar sigma2_floor,
                                        Sigma2Status* status = nullptr) {
  using Scalar = typename DerivedX::Scalar;
  if (!(sigma2_prev > Scalar(0))) throw DomainError("update_sigma2: sigma2_prev must be positive");
  if (a.size() != X.rows() || b.size() != X.cols())
    throw ContractError("update_sigma2: factor lengths do not match X");
  const Scalar np = Scalar(X.rows()) * Scalar(X.cols());
  const Scalar c = alpha / (Scalar(2) * sigma2_prev);
  Scalar wsum(0);
  Scalar wr2(0);
  for (Index j = 0; j < X.cols(); ++j) {
    const auto r2 = (X.col(j) - a * b(j)).array().square().eval();
    if (alpha == Scalar(0)) {
      wsum += Scalar(X.rows());
      wr2 += r2.sum();
    } else {
      const auto w = (-c * r2).exp().eval();
      wsum += w.sum();
      wr2 += (w * r2).sum();
    }
  }
  const Scalar correction = np * alpha / std::pow(Scalar(1) + alpha, Scalar(1.5));
  const Scalar den = wsum - correction;
  Sigma2Status st;
  Scalar out;
  if (den <= Scalar(1e-8) * np) {
    st.breakdown = true;
    out = sigma2_prev;
  } else {
    out = wr2 / den;
    if (!(out >= sigma2_floor)) {
      out = sigma2_floor;
      st.floored = true;
    }
  }
  if (status) *status = st;
  return out;
}

/// vec minus its projections onto each (orthonormal) basis vector. Throws
/// RankDeficiencyError when nothing of vec survives.
template <typename Scalar>
Vector<Scalar> orthogonalize_against(const Vector<Scalar>& vec, std::span<const Vector<Scalar>> basis) {
  Vector<Scalar> out = vec;
  for (const auto& q : basis) {
    if (q.size() != vec.size()) throw ContractError("orthogonalize_against: length mismatch");
    out -= q.dot(out) * q;
  }
  const Scalar in_norm = vec.norm();
  if (!(out.norm() >= Scalar(1e-12) * in_norm) || !(in_norm > Scalar(0)))
    throw RankDeficiencyError("orthogonalize_against: vector lies in the span of the basis");
  return out;
}

template <typename Scalar>
struct IterationRecord {
  int iteration = 0;
  Scalar lambda{0};
  Scalar sigma2{0};
  // Mean DPD loss for alpha > 0, sum of squared residuals for alpha = 0.
  Scalar objective{0};
  Scalar change{0};
};

template <typename Scalar>
struct RankOneResult {
  SvdTriple<Scalar> triple;
  Scalar sigma2{1};
  std::vector<IterationRecord<Scalar>> trace;
  int iterations = 0;
  bool converged = false;
  Index degenerate_rows = 0;
  bool sigma2_breakdown = false;
};

namespace detail {

// Median of the nonzero squared entries. Sets the scale of the first weight
// pass, where the fit is still zero and the residuals are the data itself.
template <typename Derived>
typename Derived::Scalar median_nonzero_square(const Eigen::MatrixBase<Derived>& X) {
  using Scalar = typename Derived::Scalar;
  std::vector<Scalar> sq;
  sq.reserve(static_cast<std::size_t>(X.size()));
  for (Index j = 0; j < X.cols(); ++j)
    for (Index i = 0; i < X.rows(); ++i) {
      const Scalar s = X(i, j) * X(i, j);
      if (s > Scalar(0)) sq.push_back(s);
    }
  if (sq.empty()) return Scalar(0);
  const std::size_t mid = sq.size() / 2;
  std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid), sq.end());
  Scalar hi = sq[mid];
  if (sq.size() % 2 == 1) return hi;
  const Scalar lo = *std::max_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lo + hi) / Scalar(2);
}

template <typename Scalar>
Scalar objective_at(const Matrix<Scalar>& X, const Vector<Scalar>& a, const Vector<Scalar>& b, Scalar sigma2,
                    Scalar alpha) {
  return alpha > Scalar(0) ? mdpde_objective(X, a, b, sigma2, alpha) : least_squares_objective(X, a, b);
}

}  // namespace detail

/// Iterate of the rank-one fit: lambda u v^T with scale sigma2.
template <typename Scalar>
struct RankOneState {
  Scalar lambda{0};
  Vector<Scalar> u;
  Vector<Scalar> v;
  Scalar sigma2{1};
};

struct StepStatus {
  Index degenerate = 0;
  bool sigma2_breakdown = false;
};

/// One sweep of the fixed point: left regression, orthogonalize, normalize;
/// right regression, orthogonalize, normalize; scale update. Each update
/// uses the most recent values of the other parameters. Returns the
/// convergence measure max(|d lambda| / lambda, ||d u||_inf, ||d v||_inf).
template <typename Scalar>
Scalar dpd_step(const Matrix<Scalar>& X, RankOneState<Scalar>& state, Scalar alpha, Scalar sigma2_floor,
                std::span<const Vector<Scalar>> basis_u = {}, std::span<const Vector<Scalar>> basis_v = {},
                StepStatus* status = nullptr) {
  UpdateStatus st;
  StepStatus step;
  Vector<Scalar> a = update_left(X, (state.lambda * state.u).eval(), state.v, state.sigma2, alpha, &st);
  step.degenerate = st.degenerate;
  if (!basis_u.empty()) a = orthogonalize_against<Scalar>(a, basis_u);
  const Scalar a_norm = a.norm();
  if (!(a_norm > Scalar(0))) throw DegenerateInputError("rank_one_dpd: left factor collapsed to zero");
  Vector<Scalar> u_new = a / a_norm;

  Vector<Scalar> b = update_right(X, u_new, (a_norm * state.v).eval(), state.sigma2, alpha, &st);
  step.degenerate = std::max(step.degenerate, st.degenerate);
  if (!basis_v.empty()) b = orthogonalize_against<Scalar>(b, basis_v);
  const Scalar lambda_new = b.norm();
  if (!(lambda_new > Scalar(0))) throw DegenerateInputError("rank_one_dpd: right factor collapsed to zero");
  Vector<Scalar> v_new = b / lambda_new;

  Sigma2Status sst;
  state.sigma2 = update_sigma2(X, (lambda_new * u_new).eval(), v_new, state.sigma2, alpha, sigma2_floor, &sst);
  step.sigma2_breakdown = sst.breakdown;

  const Scalar change = std::max({std::abs(lambda_new - state.lambda) / lambda_new,
                                  (u_new - state.u).template lpNorm<Eigen::Infinity>(),
                                  (v_new - state.v).template lpNorm<Eigen::Infinity>()});
  state.lambda = lambda_new;
  state.u = std::move(u_new);
  state.v = std::move(v_new);
  if (status) *status = step;
  return change;
}

/// Starting state for the rank-one fit. The direction comes from `init` or
/// from classical power iteration; the amplitude starts at zero, so the
/// first weight pass compares raw magnitudes against a median-based scale.
/// Starting from the full classical fit would let a gross outlier pin the
/// solution.
template <typename Scalar>
RankOneState<Scalar> initial_state(const Matrix<Scalar>& X, const RSvdConfig& config,
                                   const std::optional<SvdTriple<Scalar>>& init = std::nullopt,
                                   std::span<const Vector<Scalar>> basis_u = {},
                                   std::span<const Vector<Scalar>> basis_v = {}) {
  RankOneState<Scalar> state;
  if (init) {
    if (init->u.size() != X.rows() || init->v.size() != X.cols())
      throw ContractError("rank_one_dpd: init triple dimensions do not match X");
    state.u = init->u;
    state.v = init->v;
  } else {
    auto pi = power_iteration(X, 50, 1e-9, basis_u, basis_v);
    state.u = std::move(pi.triple.u);
    state.v = std::move(pi.triple.v);
  }
  if (!basis_u.empty()) state.u = orthogonalize_against<Scalar>(state.u, basis_u).normalized();
  if (!basis_v.empty()) state.v = orthogonalize_against<Scalar>(state.v, basis_v).normalized();
  const Scalar scale0 = detail::median_nonzero_square(X);
  if (!(scale0 > Scalar(0))) throw DegenerateInputError("rank_one_dpd: matrix is identically zero");
  state.sigma2 = std::max(scale0, Scalar(config.sigma2_floor));
  state.lambda = Scalar(0);
  return state;
}

/// Robust leading triple of X by alternating DPD-weighted regressions.
/// `basis_u` / `basis_v` hold previously extracted unit vectors; candidates
/// are orthogonalized against them after every regression step. The trace
/// starts with the initial state (iteration 0).
template <typename Scalar>
RankOneResult<Scalar> rank_one_dpd(const Matrix<Scalar>& X, const RSvdConfig& config,
                                   const std::optional<SvdTriple<Scalar>>& init = std::nullopt,
                                   std::span<const Vector<Scalar>> basis_u = {},
                                   std::span<const Vector<Scalar>> basis_v = {}) {
  if (X.rows() < 1 || X.cols() < 1) throw ContractError("rank_one_dpd: empty matrix");
  if (!X.allFinite()) throw ContractError("rank_one_dpd: matrix has non-finite entries");
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw DomainError("rank_one_dpd: alpha must lie in [0, 1]");
  const Scalar alpha = Scalar(config.alpha);
  const Scalar floor = Scalar(config.sigma2_floor);
  const Scalar tol = Scalar(config.tol);

  RankOneState<Scalar> state = initial_state<Scalar>(X, config, init, basis_u, basis_v);
  RankOneResult<Scalar> out;
  out.trace.push_back({0, state.lambda, state.sigma2,
                       detail::objective_at<Scalar>(X, Vector<Scalar>::Zero(X.rows()), state.v, state.sigma2, alpha),
                       Scalar(0)});

  for (int it = 1; it <= config.max_iter; ++it) {
    StepStatus st;
    const Scalar change = dpd_step<Scalar>(X, state, alpha, floor, basis_u, basis_v, &st);
    out.degenerate_rows = std::max(out.degenerate_rows, st.degenerate);
    out.sigma2_breakdown = out.sigma2_breakdown || st.sigma2_breakdown;
    out.trace.push_back({it, state.lambda, state.sigma2,
                         detail::objective_at<Scalar>(X, (state.lambda * state.u).eval(), state.v, state.sigma2,
                                                      alpha),
                         change});
    out.iterations = it;
    if (change < tol) {
      out.converged = true;
      break;
    }
  }

  out.triple.lambda = state.lambda;
  out.triple.u = std::move(state.u);
  out.triple.v = std::move(state.v);
  apply_sign_convention(out.triple);
  out.sigma2 = state.sigma2;
  return out;
}

/// Robust SVD of rank config.rank by sequential extraction: component k+1
/// is fitted on X minus the first k robust components, with its factors kept
/// orthogonal to the earlier ones. Stops early (model.truncated) if the
/// residual has no direction left.
template <typename Scalar>
RSvdModel<Scalar> rsvd_dpd(const Matrix<Scalar>& X, const RSvdConfig& config) {
  config.validate(X.rows(), X.cols());
  if (X.rows() < 2 || X.cols() < 2) throw ContractError("rsvd_dpd: need at least 2 rows and 2 columns");
  if (!X.allFinite()) throw ContractError("rsvd_dpd: matrix has non-finite entries");
  const Scalar total = X.squaredNorm();
  if (!(total > Scalar(0))) throw DegenerateInputError("rsvd_dpd: matrix is identically zero");

  RSvdModel<Scalar> model;
  model.config = config;
  std::vector<Vector<Scalar>> basis_u;
  std::vector<Vector<Scalar>> basis_v;
  Matrix<Scalar> residual = X;

  for (Index k = 0; k < config.rank; ++k) {
    if (k > 0 && residual.squaredNorm() <= Scalar(1e-24) * total) {
      model.truncated = true;
      break;
    }
    RankOneResult<Scalar> fit;
    try {
      fit = rank_one_dpd<Scalar>(residual, config, std::nullopt, basis_u, basis_v);
    } catch (const RankDeficiencyError&) {
      if (k == 0) throw;
      model.truncated = true;
      break;
    } catch (const DegenerateInputError&) {
      if (k == 0) throw;
      model.truncated = true;
      break;
    }
    residual.noalias() -= fit.triple.lambda * fit.triple.u * fit.triple.v.transpose();
    basis_u.push_back(fit.triple.u);
    basis_v.push_back(fit.triple.v);
    model.component_sigma2.push_back(fit.sigma2);
    model.iterations.push_back(fit.iterations);
    model.converged.push_back(fit.converged);
    model.sigma2 = fit.sigma2;
    model.triples.push_back(std::move(fit.triple));
  }
  return model;
}

}  // namespace rsvd

#endif  // RSVD_CORE_HPP
