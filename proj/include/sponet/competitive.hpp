#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "sponet/demand.hpp"
#include "sponet/errors.hpp"
#include "sponet/market.hpp"

namespace sponet {

/// Stage-one payoffs at a strategy and demand profile.
struct PayoffPair {
  double cp_profit = 0.0;
  double sp_revenue = 0.0;
};

/// Sponsor's profit: gamma (s sum x - t sum x^2) - p theta' x.
inline double cp_profit(const MarketInstance& inst, const Strategy& strat,
                        const Eigen::VectorXd& x) {
  detail::check_strategy_shape(inst, strat);
  if (x.size() != inst.n())
    throw InvalidConfig("x length must equal the number of users");
  return inst.gamma * (inst.s * x.sum() - inst.t * x.squaredNorm()) -
         strat.p * strat.theta.dot(x);
}

/// Provider's revenue: p sum x.
inline double sp_revenue(const Strategy& strat, const Eigen::VectorXd& x) {
  if (x.size() != strat.theta.size())
    throw InvalidConfig("x length must equal theta length");
  return strat.p * x.sum();
}

namespace detail {

/// Sponsor profit as a smooth function of theta with demand substituted in,
/// x = K (a - p (1 - theta)).  Used by the projected ascent; demand signs
/// are not checked here.
inline double cp_profit_smooth(const MarketInstance& inst,
                               const EquilibriumMatrices& mats,
                               double p, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd q =
      p * (Eigen::VectorXd::Ones(theta.size()) - theta);
  const Eigen::VectorXd x = mats.K * (inst.a - q);
  return inst.gamma * (inst.s * x.sum() - inst.t * x.squaredNorm()) -
         p * theta.dot(x);
}

}  // namespace detail

/// Gradient of the sponsor's profit in theta with demand substituted in:
///   gamma s p K 1 - 2 gamma t p K x - p x - p^2 K theta,
/// where x = K (a - p (1 - theta)).
inline Eigen::VectorXd cp_profit_theta_gradient(
    const MarketInstance& inst, const EquilibriumMatrices& mats,
    const Strategy& strat) {
  detail::check_strategy_shape(inst, strat);
  const double p = strat.p;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(inst.n());
  const Eigen::VectorXd x =
      mats.K * (inst.a - p * (ones - strat.theta));
  return inst.gamma * inst.s * p * (mats.K * ones) -
         2.0 * inst.gamma * inst.t * p * (mats.K * x) - p * x -
         p * p * (mats.K * strat.theta);
}

/// Derivative of the provider's revenue in its price at fixed theta:
///   d/dp [ p 1' K (a - p (1 - theta)) ] = 1' K a - 2 p 1' K (1 - theta).
inline double sp_revenue_price_derivative(const MarketInstance& inst,
                                          const EquilibriumMatrices& mats,
                                          const Strategy& strat) {
  detail::check_strategy_shape(inst, strat);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(inst.n());
  const Eigen::VectorXd K1 = mats.K * ones;
  return K1.dot(inst.a) - 2.0 * strat.p * K1.dot(ones - strat.theta);
}

/// Unconstrained stationary point of the sponsor's profit at price p:
///   theta_hat = (1 / 2p) (t gamma K + I)^{-1}
///               [ gamma s 1 + (2 t gamma K + I) (p 1 - a) ].
/// The profit is strictly concave in theta, so this is its global maximiser
/// before the box constraint is applied.  Throws DegeneratePrice when
/// p <= 0 (the division by 2p is meaningless there).
inline Eigen::VectorXd cp_sponsorship_stationary(
    const MarketInstance& inst, const EquilibriumMatrices& mats, double p) {
  if (!(p > 0.0)) throw DegeneratePrice("price must be positive");
  const Eigen::Index n = inst.n();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd lhs =
      inst.t * inst.gamma * mats.K + Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd rhs =
      inst.gamma * inst.s * ones +
      (2.0 * inst.t * inst.gamma * (mats.K * (p * ones - inst.a)) +
       (p * ones - inst.a));
  return (1.0 / (2.0 * p)) * lhs.ldlt().solve(rhs);
}

/// Stationary point clamped into [0, 1]^n.
inline Eigen::VectorXd cp_best_response(const MarketInstance& inst,
                                        const EquilibriumMatrices& mats,
                                        double p) {
  return cp_sponsorship_stationary(inst, mats, p)
      .cwiseMax(0.0)
      .cwiseMin(1.0);
}

/// Result of the box-constrained sponsorship maximisation at fixed price.
struct BoxBestResponse {
  Eigen::VectorXd theta;
  bool projected = false;  // true when the box constraint binds
  long iterations = 0;     // ascent steps taken after clamping
};

/// Box-constrained best response.  When the unconstrained stationary point
/// lies inside [0, 1]^n the clamp is a no-op and it is returned directly.
/// Otherwise clamping alone need not maximise over the box, so a projected
/// gradient ascent polishes the clamped point until the projected-gradient
/// residual || theta - clip(theta + grad) ||_inf drops below tol.
inline BoxBestResponse cp_best_response_box(const MarketInstance& inst,
                                            const EquilibriumMatrices& mats,
                                            double p, double tol = 1e-10,
                                            long max_iter = 10000) {
  if (!(tol > 0.0)) throw InvalidConfig("tol must be positive");
  if (max_iter < 1) throw InvalidConfig("max_iter must be at least 1");
  BoxBestResponse out;
  const Eigen::VectorXd hat = cp_sponsorship_stationary(inst, mats, p);
  out.theta = hat.cwiseMax(0.0).cwiseMin(1.0);
  out.projected = (out.theta - hat).lpNorm<Eigen::Infinity>() > 0.0;
  if (!out.projected) return out;

  // Step length from the curvature bound: the Hessian in theta is
  // -p^2 (2 gamma t K^2 + 2 K), so its spectral norm caps the safe step.
  const Eigen::MatrixXd curv =
      2.0 * inst.gamma * inst.t * (mats.K * mats.K) + 2.0 * mats.K;
  const double lip =
      p * p *
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(curv)
          .eigenvalues()
          .maxCoeff();
  double step = lip > 0.0 ? 1.0 / lip : 1.0;

  Strategy probe{p, out.theta};
  for (long k = 1; k <= max_iter; ++k) {
    const Eigen::VectorXd grad =
        cp_profit_theta_gradient(inst, mats, probe);
    const double kkt = (probe.theta - (probe.theta + grad)
                                          .cwiseMax(0.0)
                                          .cwiseMin(1.0))
                           .lpNorm<Eigen::Infinity>();
    if (kkt < tol) {
      out.theta = probe.theta;
      out.iterations = k - 1;
      return out;
    }
    const double base = detail::cp_profit_smooth(inst, mats, p, probe.theta);
    double alpha = step;
    Eigen::VectorXd cand;
    for (int halvings = 0; halvings < 60; ++halvings) {
      cand = (probe.theta + alpha * grad).cwiseMax(0.0).cwiseMin(1.0);
      const double predicted = grad.dot(cand - probe.theta);
      // Below the cancellation floor of the objective the sufficient
      // increase test is pure noise; the 1/L step is safe to take as is.
      if (predicted <= 1e-12 * (1.0 + std::abs(base))) break;
      const double gain =
          detail::cp_profit_smooth(inst, mats, p, cand) - base;
      if (gain >= 1e-4 * predicted) break;
      alpha *= 0.5;
    }
    probe.theta = cand;
  }
  const Eigen::VectorXd grad = cp_profit_theta_gradient(inst, mats, probe);
  const double kkt =
      (probe.theta -
       (probe.theta + grad).cwiseMax(0.0).cwiseMin(1.0))
          .lpNorm<Eigen::Infinity>();
  throw NoConvergence("sponsorship box ascent", kkt, max_iter, false);
}

/// Provider's revenue-maximising price against a fixed sponsorship:
///   p* = 1' K a / (2 1' K (1 - theta)).
/// The denominator is the negated revenue curvature; when it is not
/// positive the revenue has no interior maximum (full sponsorship makes
/// revenue nondecreasing in p) and AllSponsored is thrown.
inline double sp_best_response(const MarketInstance& inst,
                               const EquilibriumMatrices& mats,
                               const Eigen::VectorXd& theta) {
  if (theta.size() != inst.n())
    throw InvalidConfig("theta length must equal the number of users");
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(inst.n());
  const Eigen::VectorXd K1 = mats.K * ones;
  const double denom = K1.dot(ones - theta);
  if (!(denom > 0.0))
    throw AllSponsored(
        "revenue is nondecreasing in price: 1'K(1-theta) <= 0");
  return K1.dot(inst.a) / (2.0 * denom);
}

/// Stopping controls shared by the stage-one solvers.
struct SolveOptions {
  double tol = 1e-8;
  long max_iter = 10000;
};

/// Converged competitive (leader/follower alternation) outcome.
struct CompetitiveResult {
  Strategy strategy;
  DemandProfile demand;
  PayoffPair payoffs;
  long iterations = 0;
  double residual = 0.0;
  bool projected = false;  // box constraint bound the final sponsorship
  // Concavity certificates: both must be negative at a valid optimum.
  double cp_curvature_max_eig = 0.0;  // max eig of -(2 gamma t K^2 + 2 K)
  double sp_curvature = 0.0;          // worst -2 1'K(1-theta) seen
};

/// Alternating best responses: sponsorship against the current price, then
/// price against the new sponsorship.  Starts from theta = 0 with the
/// provider's response to it unless an initial strategy is supplied.
/// Converges when max(relative price step, sup-norm sponsorship step)
/// drops below opts.tol.
inline CompetitiveResult solve_competitive(
    const MarketInstance& inst, const EquilibriumMatrices& mats,
    const SolveOptions& opts = {},
    const std::optional<Strategy>& init = std::nullopt) {
  if (!(opts.tol > 0.0)) throw InvalidConfig("tol must be positive");
  if (opts.max_iter < 1) throw InvalidConfig("max_iter must be at least 1");

  CompetitiveResult out;
  Eigen::VectorXd theta;
  double p = 0.0;
  if (init.has_value()) {
    detail::check_strategy_shape(inst, *init);
    if (!(init->p > 0.0))
      throw InvalidConfig("initial price must be positive");
    theta = init->theta.cwiseMax(0.0).cwiseMin(1.0);
    p = init->p;
  } else {
    theta = Eigen::VectorXd::Zero(inst.n());
    p = sp_best_response(inst, mats, theta);
  }

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(inst.n());
  const Eigen::VectorXd K1 = mats.K * ones;
  out.cp_curvature_max_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
          (-2.0 * inst.gamma * inst.t * (mats.K * mats.K) - 2.0 * mats.K)
              .eval())
          .eigenvalues()
          .maxCoeff();
  out.sp_curvature = -std::numeric_limits<double>::infinity();

  double residual = std::numeric_limits<double>::infinity();
  for (long k = 1; k <= opts.max_iter; ++k) {
    const BoxBestResponse br =
        cp_best_response_box(inst, mats, p, opts.tol, opts.max_iter);
    const double p_next = sp_best_response(inst, mats, br.theta);
    out.sp_curvature = std::max(
        out.sp_curvature, -2.0 * K1.dot(ones - br.theta));
    residual = std::max(std::abs(p_next - p) / std::max(1.0, std::abs(p)),
                        (br.theta - theta).lpNorm<Eigen::Infinity>());
    theta = br.theta;
    p = p_next;
    if (residual < opts.tol) {
      out.strategy = Strategy{p, theta};
      out.projected = br.projected;
      out.iterations = k;
      out.residual = residual;
      out.demand = demand_equilibrium(inst, mats, out.strategy);
      out.payoffs = PayoffPair{
          cp_profit(inst, out.strategy, out.demand.x),
          sp_revenue(out.strategy, out.demand.x)};
      return out;
    }
  }
  throw NoConvergence("competitive solver", residual, opts.max_iter, false);
}

}  // namespace sponet
