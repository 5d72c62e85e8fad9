#ifndef RSVD_CLASSICAL_HPP
#define RSVD_CLASSICAL_HPP

// Classical (non-robust) singular triples by power iteration with
// deflation. Used to seed the robust fit and to choose the background rank.

#include "rsvd/types.hpp"

#include <cmath>
#include <span>

namespace rsvd {

template <typename Scalar>
struct PowerIterationResult {
  SvdTriple<Scalar> triple;
  int iterations = 0;
  bool converged = false;
  bool used_fallback = false;
};

namespace detail {

template <typename Scalar>
void project_out(Vector<Scalar>& x, std::span<const Vector<Scalar>> basis) {
  for (const auto& q : basis) x -= q.dot(x) * q;
}

}  // namespace detail

/// Leading singular triple of X. The start vector is the row of X with the
/// largest norm (lowest index on ties), which keeps runs deterministic and
/// equivariant under row permutations. When `basis_u` / `basis_v` are
/// given, iterates are kept orthogonal to them.
template <typename Derived>
PowerIterationResult<typename Derived::Scalar> power_iteration(
    const Eigen::MatrixBase<Derived>& X, int max_iter = 50, double tol = 1e-9,
    std::span<const Vector<typename Derived::Scalar>> basis_u = {},
    std::span<const Vector<typename Derived::Scalar>> basis_v = {}) {
  using Scalar = typename Derived::Scalar;
  PowerIterationResult<Scalar> out;
  const Index n = X.rows();
  const Index p = X.cols();
  if (n == 0 || p == 0) throw ContractError("power_iteration: empty matrix");

  Index start_row = 0;
  Scalar best = Scalar(-1);
  for (Index i = 0; i < n; ++i) {
    const Scalar s = X.row(i).squaredNorm();
    if (s > best) {
      best = s;
      start_row = i;
    }
  }
  if (!(best > Scalar(0))) throw DegenerateInputError("power_iteration: matrix is identically zero");

  Vector<Scalar> v = X.row(start_row).transpose();
  detail::project_out<Scalar>(v, basis_v);
  if (!(v.norm() > Scalar(0))) {
    // Start row lies in the excluded span; fall back to column sums.
    v = X.transpose() * Vector<Scalar>::Ones(n);
    detail::project_out<Scalar>(v, basis_v);
  }
  Vector<Scalar> u(n);
  Scalar lambda(0);

  auto stalled = [](const Vector<Scalar>& x) { return !(x.norm() > Scalar(0)) || !x.allFinite(); };

  if (!stalled(v)) {
    v.normalize();
    for (int it = 0; it < max_iter; ++it) {
      u.noalias() = X * v;
      detail::project_out<Scalar>(u, basis_u);
      if (stalled(u)) break;
      u.normalize();
      Vector<Scalar> v_next = X.transpose() * u;
      detail::project_out<Scalar>(v_next, basis_v);
      lambda = v_next.norm();
      if (stalled(v_next)) break;
      v_next /= lambda;
      const Scalar change = (v_next - v).template lpNorm<Eigen::Infinity>();
      v = std::move(v_next);
      out.iterations = it + 1;
      if (change < Scalar(tol)) {
        out.converged = true;
        break;
      }
    }
  }

  if (stalled(v) || stalled(u) || !(lambda > Scalar(0))) {
    // Normalized row / column sums.
    u = X * Vector<Scalar>::Ones(p);
    v = X.transpose() * Vector<Scalar>::Ones(n);
    detail::project_out<Scalar>(u, basis_u);
    detail::project_out<Scalar>(v, basis_v);
    if (stalled(u) || stalled(v))
      throw DegenerateInputError("power_iteration: no nonzero direction outside the excluded span");
    u.normalize();
    v.normalize();
    lambda = std::abs(u.dot(X * v));
    out.used_fallback = true;
    out.converged = false;
  } else {
    // Rayleigh quotient against the final pair.
    u.noalias() = X * v;
    detail::project_out<Scalar>(u, basis_u);
    lambda = u.norm();
    if (lambda > Scalar(0)) u /= lambda;
  }

  out.triple.lambda = lambda;
  out.triple.u = std::move(u);
  out.triple.v = std::move(v);
  apply_sign_convention(out.triple);
  return out;
}

/// First `count` classical singular triples by deflated power iteration.
/// Stops early (returning fewer triples) once the residual is numerically
/// zero.
template <typename Derived>
std::vector<SvdTriple<typename Derived::Scalar>> classical_svd(const Eigen::MatrixBase<Derived>& X,
                                                               Index count, int max_iter = 2000,
                                                               double tol = 1e-13) {
  using Scalar = typename Derived::Scalar;
  std::vector<SvdTriple<Scalar>> out;
  std::vector<Vector<Scalar>> us;
  std::vector<Vector<Scalar>> vs;
  Matrix<Scalar> R = X;
  const Scalar total = X.squaredNorm();
  if (!(total > Scalar(0))) throw DegenerateInputError("classical_svd: matrix is identically zero");
  count = std::min<Index>(count, std::min(X.rows(), X.cols()));
  for (Index k = 0; k < count; ++k) {
    if (R.squaredNorm() <= Scalar(1e-28) * total) break;
    auto res = power_iteration(R, max_iter, tol, std::span<const Vector<Scalar>>(us),
                               std::span<const Vector<Scalar>>(vs));
    auto& t = res.triple;
    R.noalias() -= t.lambda * t.u * t.v.transpose();
    us.push_back(t.u);
    vs.push_back(t.v);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace rsvd

#endif  // RSVD_CLASSICAL_HPP
