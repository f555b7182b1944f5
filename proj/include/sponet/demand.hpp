#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sponet/errors.hpp"
#include "sponet/market.hpp"

namespace sponet {

/// Stage-one decision: the provider's uniform price p and the sponsor's
/// per-user sponsorship fractions theta.
///
/// Solvers keep p > 0 and theta inside [0, 1]; the evaluation functions below
/// deliberately accept any finite values so that validators and derivative
/// checks can probe off-box points.
struct Strategy {
  double p = 0.0;
  Eigen::VectorXd theta;
};

/// Demand vector and realised per-user utilities at a strategy.
struct DemandProfile {
  Eigen::VectorXd x;
  Eigen::VectorXd utility;
};

/// Net per-unit payment q_i = p (1 - theta_i) faced by each user.
inline Eigen::VectorXd effective_payment(const Strategy& strat) {
  return strat.p *
         (Eigen::VectorXd::Ones(strat.theta.size()) - strat.theta);
}

namespace detail {

inline void check_strategy_shape(const MarketInstance& inst,
                                 const Strategy& strat) {
  if (strat.theta.size() != inst.n())
    throw InvalidConfig("theta length must equal the number of users");
  if (!strat.theta.allFinite() || !std::isfinite(strat.p))
    throw InvalidConfig("strategy must be finite");
}

inline void check_user_index(const MarketInstance& inst, Eigen::Index i) {
  if (i < 0 || i >= inst.n())
    throw IndexOutOfRange("user index " + std::to_string(i) +
                          " outside [0, " + std::to_string(inst.n()) + ")");
}

}  // namespace detail

/// Utility of user i at the joint demand x:
///   a_i x_i - b_i x_i^2 + x_i sum_j g_ij x_j - c (sum_j x_j)^2
///   - p (1 - theta_i) x_i
inline double user_utility(const MarketInstance& inst, const Strategy& strat,
                           const Eigen::VectorXd& x, Eigen::Index i) {
  detail::check_strategy_shape(inst, strat);
  detail::check_user_index(inst, i);
  if (x.size() != inst.n())
    throw InvalidConfig("x length must equal the number of users");
  const double xi = x[i];
  const double total = x.sum();
  return inst.a[i] * xi - inst.b[i] * xi * xi + xi * inst.g.row(i).dot(x) -
         inst.c * total * total - strat.p * (1.0 - strat.theta[i]) * xi;
}

/// User i's best response to the rivals' demands (entry i of x is ignored):
///   max(0, [a_i - p (1 - theta_i) + sum_{j != i} (g_ij - 2c) x_j]
///          / (2 b_i + 2 c))
inline double best_response_user(const MarketInstance& inst,
                                 const Strategy& strat,
                                 const Eigen::VectorXd& x, Eigen::Index i) {
  detail::check_strategy_shape(inst, strat);
  detail::check_user_index(inst, i);
  if (x.size() != inst.n())
    throw InvalidConfig("x length must equal the number of users");
  // Accumulate over rivals only so the result is exactly independent of
  // the caller's x[i].
  double influence = 0.0;
  double rivals = 0.0;
  for (Eigen::Index j = 0; j < inst.n(); ++j) {
    if (j == i) continue;
    influence += inst.g(i, j) * x[j];
    rivals += x[j];
  }
  const double cross = influence - 2.0 * inst.c * rivals;
  const double numer =
      inst.a[i] - strat.p * (1.0 - strat.theta[i]) + cross;
  return std::max(0.0, numer / (2.0 * (inst.b[i] + inst.c)));
}

/// Interior demand equilibrium x = K (a - q) with q = p (1 - theta).
/// Throws NonPositiveDemand (with the offending user indices) when any
/// component fails to be strictly positive.
inline DemandProfile demand_equilibrium(const MarketInstance& inst,
                                        const EquilibriumMatrices& mats,
                                        const Strategy& strat) {
  detail::check_strategy_shape(inst, strat);
  DemandProfile out;
  out.x = mats.K * (inst.a - effective_payment(strat));
  std::vector<std::ptrdiff_t> bad;
  for (Eigen::Index i = 0; i < out.x.size(); ++i)
    if (!(out.x[i] > 0.0)) bad.push_back(i);
  if (!bad.empty()) throw NonPositiveDemand(bad);
  out.utility.resize(inst.n());
  for (Eigen::Index i = 0; i < inst.n(); ++i)
    out.utility[i] = user_utility(inst, strat, out.x, i);
  return out;
}

/// Result of the clamped best-response iteration.
struct DemandIteration {
  DemandProfile profile;
  long iterations = 0;
  double residual = 0.0;
};

/// Simultaneous clamped best-response sweeps from x0 until the sup-norm step
/// falls below tol.  A cross-check for the closed form on small markets; the
/// clamp keeps every iterate nonnegative.  Throws NoConvergence when the cap
/// is hit or the iterates blow up (strong positive coupling can amplify).
inline DemandIteration iterate_demand(const MarketInstance& inst,
                                      const Strategy& strat,
                                      const Eigen::VectorXd& x0,
                                      double tol = 1e-10,
                                      long max_iter = 100000) {
  detail::check_strategy_shape(inst, strat);
  if (x0.size() != inst.n())
    throw InvalidConfig("x0 length must equal the number of users");
  if ((x0.array() < 0.0).any())
    throw InvalidConfig("x0 must be nonnegative");
  if (!(tol > 0.0)) throw InvalidConfig("tol must be positive");
  if (max_iter < 1) throw InvalidConfig("max_iter must be at least 1");

  const double guard =
      1e12 * (1.0 + x0.lpNorm<Eigen::Infinity>() +
              inst.a.lpNorm<Eigen::Infinity>());
  Eigen::VectorXd x = x0;
  Eigen::VectorXd next(inst.n());
  double res = std::numeric_limits<double>::infinity();
  for (long k = 1; k <= max_iter; ++k) {
    for (Eigen::Index i = 0; i < inst.n(); ++i)
      next[i] = best_response_user(inst, strat, x, i);
    res = (next - x).lpNorm<Eigen::Infinity>();
    x = next;
    if (!std::isfinite(res) || x.lpNorm<Eigen::Infinity>() > guard)
      throw NoConvergence("demand iteration", res, k, true);
    if (res < tol) {
      DemandIteration out;
      out.profile.x = x;
      out.profile.utility.resize(inst.n());
      for (Eigen::Index i = 0; i < inst.n(); ++i)
        out.profile.utility[i] = user_utility(inst, strat, x, i);
      out.iterations = k;
      out.residual = res;
      return out;
    }
  }
  throw NoConvergence("demand iteration", res, max_iter, false);
}

/// Grid search of user i's utility in its own demand, rivals held at x.
/// Test oracle only: deliberately dumb, one utility evaluation per grid
/// point, first maximiser wins.  x_max must exceed the plausible optimum.
inline double brute_force_user_optimum(const MarketInstance& inst,
                                       const Strategy& strat,
                                       const Eigen::VectorXd& x,
                                       Eigen::Index i, double grid_step,
                                       double x_max) {
  detail::check_user_index(inst, i);
  if (!(grid_step > 0.0) || !(x_max > 0.0))
    throw InvalidConfig("grid_step and x_max must be positive");
  Eigen::VectorXd probe = x;
  double best_value = -std::numeric_limits<double>::infinity();
  double best_x = 0.0;
  for (long k = 0;; ++k) {
    const double xi = static_cast<double>(k) * grid_step;
    if (xi > x_max) break;
    probe[i] = xi;
    const double v = user_utility(inst, strat, probe, i);
    if (v > best_value) {
      best_value = v;
      best_x = xi;
    }
  }
  return best_x;
}

}  // namespace sponet
