#ifndef RSVD_TYPES_HPP
#define RSVD_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsvd {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Error hierarchy. Everything the library throws derives from Error so that
// callers (the CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of a function (sigma2 <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Input carries no information to decompose (all-zero matrix).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Candidate vector lies in the span of the already extracted basis.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable file / stream.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition (dimension mismatch, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// One singular value with its unit left/right singular vectors.
template <typename Scalar>
struct SvdTriple {
  Scalar lambda{0};
  Vector<Scalar> u;
  Vector<Scalar> v;
};

/// Flip (u, v) jointly so that the largest-magnitude entry of u is
/// nonnegative. Ties resolve to the lowest index.
template <typename Scalar>
void apply_sign_convention(Vector<Scalar>& u, Vector<Scalar>& v) {
  if (u.size() == 0) return;
  Index best = 0;
  Scalar best_abs = std::abs(u(0));
  for (Index i = 1; i < u.size(); ++i) {
    const Scalar a = std::abs(u(i));
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  if (u(best) < Scalar(0)) {
    u = -u;
    v = -v;
  }
}

template <typename Scalar>
void apply_sign_convention(SvdTriple<Scalar>& t) {
  apply_sign_convention(t.u, t.v);
}

struct RSvdConfig {
  double alpha = 0.5;
  Index rank = 1;
  double tol = 1e-6;
  int max_iter = 100;
  double sigma2_floor = 1e-12;

  // Throws ContractError / DomainError when the configuration cannot be
  // used on an n_rows x n_cols input.
  void validate(Index n_rows, Index n_cols) const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw DomainError("alpha must lie in [0, 1], got " + std::to_string(alpha));
    if (rank < 1) throw ContractError("rank must be positive");
    if (rank > std::min(n_rows, n_cols))
      throw ContractError("rank " + std::to_string(rank) + " exceeds min(n_rows, n_cols) = " +
                          std::to_string(std::min(n_rows, n_cols)));
    if (!(tol > 0.0)) throw DomainError("tol must be positive");
    if (max_iter < 1) throw ContractError("max_iter must be positive");
    if (!(sigma2_floor > 0.0)) throw DomainError("sigma2_floor must be positive");
  }
};

/// Sequentially extracted robust decomposition. Triples are kept in
/// extraction order; robust lambdas need not be sorted.
template <typename Scalar>
struct RSvdModel {
  std::vector<SvdTriple<Scalar>> triples;
  Scalar sigma2{1};
  std::vector<Scalar> component_sigma2;
  std::vector<int> iterations;
  std::vector<bool> converged;
  RSvdConfig config;
  // Set when extraction stopped early because the residual had no
  // direction left outside the span of the extracted vectors.
  bool truncated = false;

  Index rank() const { return static_cast<Index>(triples.size()); }

  bool all_converged() const {
    for (bool c : converged)
      if (!c) return false;
    return true;
  }

  Vector<Scalar> lambdas() const {
    Vector<Scalar> out(rank());
    for (Index k = 0; k < rank(); ++k) out(k) = triples[k].lambda;
    return out;
  }

  Matrix<Scalar> U() const {
    if (triples.empty()) return {};
    Matrix<Scalar> out(triples.front().u.size(), rank());
    for (Index k = 0; k < rank(); ++k) out.col(k) = triples[k].u;
    return out;
  }

  Matrix<Scalar> V() const {
    if (triples.empty()) return {};
    Matrix<Scalar> out(triples.front().v.size(), rank());
    for (Index k = 0; k < rank(); ++k) out.col(k) = triples[k].v;
    return out;
  }

  /// Sum of lambda_k u_k v_k^T over the extracted components.
  Matrix<Scalar> reconstruct() const {
    if (triples.empty()) return {};
    Matrix<Scalar> out = Matrix<Scalar>::Zero(triples.front().u.size(), triples.front().v.size());
    for (const auto& t : triples) out.noalias() += t.lambda * t.u * t.v.transpose();
    return out;
  }
};

using DataMatrix = Matrix<double>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace rsvd

#endif  // RSVD_TYPES_HPP
