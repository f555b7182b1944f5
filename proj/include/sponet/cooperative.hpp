#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "sponet/competitive.hpp"
#include "sponet/demand.hpp"
#include "sponet/errors.hpp"
#include "sponet/market.hpp"

namespace sponet {

/// The coalition's objective depends on (p, theta) only through the net
/// payment vector q = p (1 - theta), so the joint problem reduces to an
/// optimisation over q.  These helpers work in that reduced space.

namespace detail {

inline void check_payment_shape(const MarketInstance& inst,
                                const Eigen::VectorXd& q) {
  if (q.size() != inst.n())
    throw InvalidConfig("q length must equal the number of users");
  if (!q.allFinite()) throw InvalidConfig("q must be finite");
}

/// Coalition payoff with demand substituted in, no sign checks:
///   R(q) = gamma (s sum x - t sum x^2) + q' x,   x = K (a - q).
inline double coalition_payoff_smooth(const MarketInstance& inst,
                                      const EquilibriumMatrices& mats,
                                      const Eigen::VectorXd& q) {
  const Eigen::VectorXd x = mats.K * (inst.a - q);
  return inst.gamma * (inst.s * x.sum() - inst.t * x.squaredNorm()) +
         q.dot(x);
}

}  // namespace detail

/// Joint sponsor + provider payoff at net payment q.  Demand entries may sit
/// at zero (users priced out contribute nothing) but strictly negative
/// induced demand means q is outside the model's range.
inline double coalition_payoff(const MarketInstance& inst,
                               const EquilibriumMatrices& mats,
                               const Eigen::VectorXd& q) {
  detail::check_payment_shape(inst, q);
  const Eigen::VectorXd x = mats.K * (inst.a - q);
  std::vector<std::ptrdiff_t> bad;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x[i] < 0.0) bad.push_back(i);
  if (!bad.empty()) throw NonPositiveDemand(bad);
  return inst.gamma * (inst.s * x.sum() - inst.t * x.squaredNorm()) +
         q.dot(x);
}

/// Gradient of the reduced payoff:
///   grad R(q) = K (-gamma s 1 + 2 gamma t x + a - 2 q),  x = K (a - q).
inline Eigen::VectorXd coalition_payoff_gradient(
    const MarketInstance& inst, const EquilibriumMatrices& mats,
    const Eigen::VectorXd& q) {
  detail::check_payment_shape(inst, q);
  const Eigen::VectorXd x = mats.K * (inst.a - q);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(inst.n());
  return mats.K *
         (-inst.gamma * inst.s * ones + 2.0 * inst.gamma * inst.t * x +
          inst.a - 2.0 * q);
}

/// Canonical (p, theta) pair reproducing a nonnegative net payment q:
/// p = max q_i and theta_i = 1 - q_i / p, which puts the least sponsored
/// user at zero sponsorship.  q = 0 admits no positive price with
/// theta in [0, 1] other than full sponsorship, so p = 1, theta = 1 is
/// returned with the degenerate flag set.
struct RecoveredStrategy {
  Strategy strategy;
  bool degenerate = false;
};

inline RecoveredStrategy recover_strategy(const Eigen::VectorXd& q) {
  if (q.size() < 1) throw EmptyInput("q must be nonempty");
  if (!q.allFinite() || (q.array() < 0.0).any())
    throw InvalidConfig("q must be finite and nonnegative");
  RecoveredStrategy out;
  const double p = q.maxCoeff();
  if (p <= 0.0) {
    out.strategy.p = 1.0;
    out.strategy.theta = Eigen::VectorXd::Ones(q.size());
    out.degenerate = true;
    return out;
  }
  out.strategy.p = p;
  out.strategy.theta =
      (Eigen::VectorXd::Ones(q.size()) - q / p).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

enum class CooperativeMethod { closed_form, gradient };

/// Converged cooperative outcome.
struct CooperativeResult {
  Eigen::VectorXd q;
  Strategy strategy;  // canonical recovery from q
  bool degenerate_recovery = false;
  DemandProfile demand;
  double aggregate_payoff = 0.0;
  PayoffPair payoffs;  // split under the recovered strategy
  CooperativeMethod method = CooperativeMethod::closed_form;
  long iterations = 0;
  double residual = 0.0;
};

namespace detail {

/// Projected gradient ascent for R over q >= 0.  R is strictly concave
/// (its Hessian is -2 gamma t K^2 - 2 K), so the fixed step 1/L with a
/// backtracking guard converges to the unique constrained maximiser.
inline void ascend_payment(const MarketInstance& inst,
                           const EquilibriumMatrices& mats,
                           Eigen::VectorXd& q, long& iterations,
                           double& residual, double tol, long max_iter) {
  const Eigen::MatrixXd curv =
      2.0 * inst.gamma * inst.t * (mats.K * mats.K) + 2.0 * mats.K;
  const double lip = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(curv)
                         .eigenvalues()
                         .maxCoeff();
  const double step = lip > 0.0 ? 1.0 / lip : 1.0;
  for (long k = 0; k <= max_iter; ++k) {
    const Eigen::VectorXd grad = coalition_payoff_gradient(inst, mats, q);
    residual = (q - (q + grad).cwiseMax(0.0)).lpNorm<Eigen::Infinity>();
    if (residual < tol) {
      iterations = k;
      return;
    }
    if (k == max_iter) break;
    const double base = coalition_payoff_smooth(inst, mats, q);
    double alpha = step;
    Eigen::VectorXd cand;
    for (int halvings = 0; halvings < 60; ++halvings) {
      cand = (q + alpha * grad).cwiseMax(0.0);
      const double predicted = grad.dot(cand - q);
      if (predicted <= 1e-12 * (1.0 + std::abs(base))) break;
      const double gain = coalition_payoff_smooth(inst, mats, cand) - base;
      if (gain >= 1e-4 * predicted) break;
      alpha *= 0.5;
    }
    q = cand;
  }
  throw NoConvergence("payment ascent", residual, max_iter, false);
}

inline CooperativeResult finish_cooperative(const MarketInstance& inst,
                                            const EquilibriumMatrices& mats,
                                            CooperativeResult&& out) {
  const RecoveredStrategy rec = recover_strategy(out.q);
  out.strategy = rec.strategy;
  out.degenerate_recovery = rec.degenerate;
  out.aggregate_payoff = coalition_payoff(inst, mats, out.q);
  out.demand = demand_equilibrium(inst, mats, out.strategy);
  out.payoffs = PayoffPair{cp_profit(inst, out.strategy, out.demand.x),
                           sp_revenue(out.strategy, out.demand.x)};
  return std::move(out);
}

}  // namespace detail

/// Closed-form cooperative optimum.  The stationarity condition
///   (2 gamma t K + 2 I) q = (2 gamma t K + I) a - gamma s 1
/// yields the unconstrained maximiser; when it has negative entries the
/// constrained optimum lies on the boundary and a projected ascent over
/// q >= 0 replaces it (iterations/residual then report that ascent).
inline CooperativeResult solve_cooperative_closed_form(
    const MarketInstance& inst, const EquilibriumMatrices& mats,
    const SolveOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw InvalidConfig("tol must be positive");
  if (opts.max_iter < 1) throw InvalidConfig("max_iter must be at least 1");
  const Eigen::Index n = inst.n();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd lhs = 2.0 * inst.gamma * inst.t * mats.K +
                              2.0 * Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd rhs =
      2.0 * inst.gamma * inst.t * (mats.K * inst.a) + inst.a -
      inst.gamma * inst.s * ones;
  CooperativeResult out;
  out.method = CooperativeMethod::closed_form;
  out.q = lhs.ldlt().solve(rhs);
  if ((out.q.array() < 0.0).any()) {
    out.q = out.q.cwiseMax(0.0);
    detail::ascend_payment(inst, mats, out.q, out.iterations, out.residual,
                           opts.tol, opts.max_iter);
  } else {
    out.iterations = 0;
    out.residual = coalition_payoff_gradient(inst, mats, out.q)
                       .lpNorm<Eigen::Infinity>();
  }
  return detail::finish_cooperative(inst, mats, std::move(out));
}

/// Gradient-based cooperative solver over the original variables, used to
/// cross-check the reduction.  Projected ascent of R(p (1 - theta)) over
/// theta in [0, 1]^n and p in [p_min, 2 max a_i], by the chain rule
///   grad_theta = -p grad_q R,   dR/dp = (1 - theta)' grad_q R.
/// The maximiser is a manifold (only q is identified), so the result is
/// reported through the canonical recovery from the final q.
inline CooperativeResult solve_cooperative_gradient(
    const MarketInstance& inst, const EquilibriumMatrices& mats,
    const SolveOptions& opts = {},
    const std::optional<Strategy>& init = std::nullopt) {
  if (!(opts.tol > 0.0)) throw InvalidConfig("tol must be positive");
  if (opts.max_iter < 1) throw InvalidConfig("max_iter must be at least 1");
  const Eigen::Index n = inst.n();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const double p_min = 1e-9;
  const double p_max = 2.0 * inst.a.maxCoeff();

  Eigen::VectorXd theta;
  double p = 0.0;
  if (init.has_value()) {
    detail::check_strategy_shape(inst, *init);
    theta = init->theta.cwiseMax(0.0).cwiseMin(1.0);
    p = std::clamp(init->p, p_min, p_max);
  } else {
    theta = 0.5 * ones;
    p = inst.a.mean() / 2.0;
  }

  // Box-wide curvature bound for the payoff in (theta, p).  The Hessian
  // blocks are -p^2 (2 gamma t K^2 + 2 K), a bordering column
  // gamma s K 1 - 2 gamma t K^2 (a - 2q) - K (a - 4q), and a scalar
  // bounded by n times the q-space curvature; steps at or below 1/L are
  // stable everywhere in the box.
  const double lip_q =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
          (2.0 * inst.gamma * inst.t * (mats.K * mats.K) + 2.0 * mats.K)
              .eval())
          .eigenvalues()
          .maxCoeff();
  const double k_norm =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(mats.K)
          .eigenvalues()
          .maxCoeff();
  const double root_n = std::sqrt(static_cast<double>(n));
  const double a_norm = inst.a.norm();
  const double border_bound =
      inst.gamma * inst.s * (mats.K * ones).norm() +
      2.0 * inst.gamma * inst.t * k_norm * k_norm *
          (a_norm + 2.0 * root_n * p_max) +
      k_norm * (a_norm + 4.0 * root_n * p_max);
  const double lip = p_max * p_max * lip_q + 2.0 * border_bound +
                     static_cast<double>(n) * lip_q;
  const double alpha_cap = 1.0 / lip;

  CooperativeResult out;
  out.method = CooperativeMethod::gradient;
  double residual = std::numeric_limits<double>::infinity();
  // Carried across iterations: resetting to 1 near the optimum would pair
  // an unstable step with the cancellation-floor acceptance below and the
  // iterates would cycle instead of settling.
  double alpha_start = 1.0;
  for (long k = 0; k <= opts.max_iter; ++k) {
    const Eigen::VectorXd q = p * (ones - theta);
    const Eigen::VectorXd gq = coalition_payoff_gradient(inst, mats, q);
    const Eigen::VectorXd g_theta = -p * gq;
    const double g_p = (ones - theta).dot(gq);
    const Eigen::VectorXd theta_step1 =
        (theta + g_theta).cwiseMax(0.0).cwiseMin(1.0);
    const double p_step1 = std::clamp(p + g_p, p_min, p_max);
    residual = std::max((theta - theta_step1).lpNorm<Eigen::Infinity>(),
                        std::abs(p - p_step1));
    if (residual < opts.tol) {
      out.q = q;
      out.iterations = k;
      out.residual = residual;
      return detail::finish_cooperative(inst, mats, std::move(out));
    }
    if (k == opts.max_iter) break;
    const double base = detail::coalition_payoff_smooth(inst, mats, q);
    double alpha = alpha_start;
    Eigen::VectorXd theta_cand;
    double p_cand = p;
    for (int halvings = 0; halvings < 60; ++halvings) {
      theta_cand =
          (theta + alpha * g_theta).cwiseMax(0.0).cwiseMin(1.0);
      p_cand = std::clamp(p + alpha * g_p, p_min, p_max);
      const double predicted =
          g_theta.dot(theta_cand - theta) + g_p * (p_cand - p);
      if (predicted <= 1e-12 * (1.0 + std::abs(base))) {
        // Below the cancellation floor the measured gain is noise, so the
        // sufficient-decrease test cannot arbitrate; only steps at or
        // below the curvature cap are safe to take blind.
        if (alpha <= alpha_cap) break;
        alpha *= 0.5;
        continue;
      }
      const double gain =
          detail::coalition_payoff_smooth(
              inst, mats, p_cand * (ones - theta_cand)) -
          base;
      if (gain >= 1e-4 * predicted) break;
      alpha *= 0.5;
    }
    theta = theta_cand;
    p = p_cand;
    alpha_start = std::min(1.0, 2.0 * alpha);
  }
  throw NoConvergence("cooperative gradient solver", residual,
                      opts.max_iter, false);
}

}  // namespace sponet
