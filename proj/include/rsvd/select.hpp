#ifndef RSVD_SELECT_HPP
#define RSVD_SELECT_HPP

// Choice of the background rank (classical explained-variation rule) and of
// the robustness parameter (conditional MSE against the alpha = 1 fit).

#include "rsvd/classical.hpp"
#include "rsvd/core.hpp"
#include "rsvd/parallel.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace rsvd {

struct RankSelection {
  double epsilon = 0.1;
  // Classical singular values, computed only as far as needed to reach the
  // share threshold.
  std::vector<double> classical_lambdas;
  Index chosen_rank = 1;
};

/// Smallest r whose leading classical singular values explain more than a
/// (1 - epsilon) share of ||X||_F^2.
template <typename Scalar>
RankSelection select_rank(const Matrix<Scalar>& X, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("select_rank: epsilon must lie in (0, 1)");
  const Scalar total = X.squaredNorm();
  if (!(total > Scalar(0))) throw DegenerateInputError("select_rank: matrix is identically zero");
  const Index max_rank = std::min(X.rows(), X.cols());

  RankSelection out;
  out.epsilon = epsilon;
  out.chosen_rank = max_rank;

  std::vector<Vector<Scalar>> us;
  std::vector<Vector<Scalar>> vs;
  Matrix<Scalar> residual = X;
  double cumulative = 0.0;
  for (Index k = 0; k < max_rank; ++k) {
    if (residual.squaredNorm() <= Scalar(1e-28) * total) {
      out.chosen_rank = std::max<Index>(k, 1);
      break;
    }
    auto pi = power_iteration(residual, 2000, 1e-13, std::span<const Vector<Scalar>>(us),
                              std::span<const Vector<Scalar>>(vs));
    const auto& t = pi.triple;
    residual.noalias() -= t.lambda * t.u * t.v.transpose();
    us.push_back(t.u);
    vs.push_back(t.v);
    out.classical_lambdas.push_back(static_cast<double>(t.lambda));
    cumulative += static_cast<double>(t.lambda) * static_cast<double>(t.lambda);
    if (cumulative / static_cast<double>(total) > 1.0 - epsilon) {
      out.chosen_rank = k + 1;
      break;
    }
  }
  return out;
}

/// Conditional MSE criterion of an alpha fit against the alpha = 1
/// reference. Each component of the alpha fit is sign-aligned to the
/// reference by the sign of u_k . u_ref_k before differencing.
template <typename Scalar>
double alpha_criterion(const RSvdModel<Scalar>& model_alpha, const RSvdModel<Scalar>& model_ref, Index n, Index p,
                       double alpha) {
  if (model_alpha.rank() != model_ref.rank())
    throw ContractError("alpha_criterion: models have different ranks");
  if (model_alpha.rank() == 0) throw ContractError("alpha_criterion: empty models");
  const double variance = static_cast<double>(n + p) * static_cast<double>(model_alpha.sigma2) *
                          std::pow(1.0 + alpha * alpha / (1.0 + 2.0 * alpha), 1.5);
  double left = 0.0;
  double right = 0.0;
  for (Index k = 0; k < model_ref.rank(); ++k) {
    const auto& t = model_alpha.triples[k];
    const auto& r = model_ref.triples[k];
    if (t.u.size() != r.u.size() || t.v.size() != r.v.size())
      throw ContractError("alpha_criterion: vector lengths differ");
    const Scalar sign = t.u.dot(r.u) < Scalar(0) ? Scalar(-1) : Scalar(1);
    left += static_cast<double>((sign * t.lambda * t.u - r.lambda * r.u).squaredNorm());
    right += static_cast<double>((sign * t.lambda * t.v - r.lambda * r.v).squaredNorm());
  }
  const double r = static_cast<double>(model_ref.rank());
  return variance + left / r + right / r;
}

struct AlphaSelection {
  std::vector<double> grid;
  std::vector<double> scores;
  // True where the fit did not converge (score forced to +inf).
  std::vector<bool> flagged;
  double chosen = 1.0;
  double chosen_score = 0.0;
};

inline std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

/// Fits every grid value (concurrently, merged in grid order) and returns
/// the criterion minimizer; ties go to the smallest alpha.
template <typename Scalar>
AlphaSelection select_alpha(const Matrix<Scalar>& X, Index rank, const std::vector<double>& grid,
                            const RSvdConfig& base = {}, unsigned threads = worker_count()) {
  if (grid.empty()) throw ContractError("select_alpha: empty grid");
  Index ref_index = -1;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw DomainError("select_alpha: grid values must lie in [0, 1]");
    if (grid[i] == 1.0 && ref_index < 0) ref_index = static_cast<Index>(i);
  }
  if (ref_index < 0) throw ContractError("select_alpha: grid must contain 1.0");

  std::vector<RSvdModel<Scalar>> models(grid.size());
  parallel_for(
      grid.size(),
      [&](std::size_t i) {
        RSvdConfig cfg = base;
        cfg.alpha = grid[i];
        cfg.rank = rank;
        models[i] = rsvd_dpd<Scalar>(X, cfg);
      },
      threads);

  const auto& ref = models[static_cast<std::size_t>(ref_index)];
  AlphaSelection out;
  out.grid = grid;
  out.scores.resize(grid.size());
  out.flagged.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& m = models[i];
    if (!m.all_converged() || m.rank() != ref.rank()) {
      out.scores[i] = std::numeric_limits<double>::infinity();
      out.flagged[i] = true;
      continue;
    }
    out.scores[i] = alpha_criterion(m, ref, X.rows(), X.cols(), grid[i]);
  }

  std::size_t best = grid.size();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (best == grid.size() || out.scores[i] < out.scores[best] ||
        (out.scores[i] == out.scores[best] && grid[i] < grid[best]))
      best = i;
  }
  out.chosen = grid[best];
  out.chosen_score = out.scores[best];
  return out;
}

}  // namespace rsvd

#endif  // RSVD_SELECT_HPP
