#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "sponet/demand.hpp"
#include "sponet/errors.hpp"
#include "sponet/market.hpp"

namespace sponet {

/// Ex-post checks of the regularity conditions the closed forms lean on,
/// plus curvature certificates for the stage-one objectives.  None of these
/// are enforced by the solvers; they report where a computed point sits
/// relative to the conditions.

/// Diagonal-dominance style bound on the coupling: for every user the
/// rivals' aggregate influence must stay below own concavity,
///   sum_{j != i} (g_ij - 2c) / (2 b_i + 2 c) < 1.
struct Assumption1Report {
  bool holds = false;
  Eigen::VectorXd ratios;
};

inline Assumption1Report check_assumption1(const MarketInstance& inst) {
  Assumption1Report out;
  const Eigen::Index n = inst.n();
  out.ratios.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // g_ii = 0, so the row sum already omits the own term.
    const double coupling =
        inst.g.row(i).sum() - 2.0 * inst.c * static_cast<double>(n - 1);
    out.ratios[i] = coupling / (2.0 * (inst.b[i] + inst.c));
  }
  out.holds = (out.ratios.array() < 1.0).all();
  return out;
}

/// Interior demand: every user consumes a strictly positive amount at the
/// strategy.  Never throws; the violating indices are reported instead.
struct Assumption2Report {
  bool holds = false;
  double min_demand = 0.0;
  Eigen::VectorXd x;
  std::vector<std::ptrdiff_t> violating;
};

inline Assumption2Report check_assumption2(const MarketInstance& inst,
                                           const EquilibriumMatrices& mats,
                                           const Strategy& strat) {
  detail::check_strategy_shape(inst, strat);
  Assumption2Report out;
  out.x = mats.K * (inst.a - effective_payment(strat));
  out.min_demand = out.x.minCoeff();
  for (Eigen::Index i = 0; i < out.x.size(); ++i)
    if (!(out.x[i] > 0.0)) out.violating.push_back(i);
  out.holds = out.violating.empty();
  return out;
}

/// Symmetric PSD square root.  Eigenvalues slightly negative from roundoff
/// are clamped to zero; genuinely negative ones are rejected.
inline Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw InvalidConfig("matrix must be square");
  const double sym_err = (m - m.transpose()).lpNorm<Eigen::Infinity>();
  if (sym_err > 1e-10 * (1.0 + m.lpNorm<Eigen::Infinity>()))
    throw InvalidConfig("matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double scale =
      std::max(1.0, std::max(std::abs(ev.minCoeff()), ev.maxCoeff()));
  if (ev.minCoeff() < -1e-10 * scale)
    throw NotPositiveDefinite("matrix has a negative eigenvalue");
  return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

/// Payment floor: the price each user actually pays must clear
///   max( gamma s,  a_i / 3,  [(sqrt(2 gamma t K) + I)^{-1}
///                             sqrt(gamma t K / 2) a]_i ).
/// The matrix term is evaluated through K's eigendecomposition, mapping
/// each eigenvalue lam to sqrt(gamma t lam / 2) / (1 + sqrt(2 gamma t lam)).
struct Assumption3Report {
  bool holds = false;
  Eigen::VectorXd payment;
  Eigen::VectorXd threshold;
  Eigen::VectorXd matrix_term;
  double margin = 0.0;
};

inline Assumption3Report check_assumption3(const MarketInstance& inst,
                                           const EquilibriumMatrices& mats,
                                           const Strategy& strat) {
  detail::check_strategy_shape(inst, strat);
  Assumption3Report out;
  out.payment = effective_payment(strat);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mats.K);
  const double gt = inst.gamma * inst.t;
  Eigen::VectorXd f = es.eigenvalues();
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double lam = std::max(0.0, f[i]);
    f[i] = std::sqrt(gt * lam / 2.0) / (1.0 + std::sqrt(2.0 * gt * lam));
  }
  out.matrix_term = es.eigenvectors() * f.asDiagonal() *
                    es.eigenvectors().transpose() * inst.a;
  out.threshold = out.matrix_term.cwiseMax(inst.a / 3.0)
                      .cwiseMax(inst.gamma * inst.s);
  out.margin = (out.payment - out.threshold).minCoeff();
  out.holds = out.margin > 0.0;
  return out;
}

/// Signature of a symmetric matrix under a relative eigenvalue threshold.
struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;

  bool operator==(const Inertia& other) const {
    return positive == other.positive && negative == other.negative &&
           zero == other.zero;
  }
};

inline Inertia inertia(const Eigen::MatrixXd& m, double rel_tol = 1e-11) {
  if (m.rows() != m.cols()) throw InvalidConfig("matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m,
                                                    Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double thr =
      rel_tol * std::max(1.0, ev.cwiseAbs().maxCoeff());
  Inertia out;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > thr)
      ++out.positive;
    else if (ev[i] < -thr)
      ++out.negative;
    else
      ++out.zero;
  }
  return out;
}

/// Definiteness verdict: strict up to the same relative threshold used for
/// the inertia counts.
struct MatrixVerdict {
  double min_eig = 0.0;
  double max_eig = 0.0;
  Inertia signature;
  bool positive_definite = false;
  bool negative_definite = false;
};

inline MatrixVerdict assess(const Eigen::MatrixXd& m,
                            double rel_tol = 1e-11) {
  if (m.rows() != m.cols()) throw InvalidConfig("matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m,
                                                    Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = es.eigenvalues();
  MatrixVerdict out;
  out.min_eig = ev.minCoeff();
  out.max_eig = ev.maxCoeff();
  const double thr = rel_tol * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > thr)
      ++out.signature.positive;
    else if (ev[i] < -thr)
      ++out.signature.negative;
    else
      ++out.signature.zero;
  }
  const int n = static_cast<int>(m.rows());
  out.positive_definite = out.signature.positive == n;
  out.negative_definite = out.signature.negative == n;
  return out;
}

namespace detail {

/// Shared pieces of the curvature blocks at a strategy.
struct CurvaturePieces {
  Eigen::VectorXd v;    // 1 - theta
  Eigen::VectorXd u2;   // a - 2q
  Eigen::VectorXd u4;   // a - 4q
  Eigen::MatrixXd K2;   // K^2
  Eigen::VectorXd K1;   // K 1
  Eigen::VectorXd w;    // shared off-diagonal column
};

inline CurvaturePieces curvature_pieces(const MarketInstance& inst,
                                        const EquilibriumMatrices& mats,
                                        const Strategy& strat) {
  check_strategy_shape(inst, strat);
  CurvaturePieces out;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(inst.n());
  out.v = ones - strat.theta;
  const Eigen::VectorXd q = strat.p * out.v;
  out.u2 = inst.a - 2.0 * q;
  out.u4 = inst.a - 4.0 * q;
  out.K2 = mats.K * mats.K;
  out.K1 = mats.K * ones;
  out.w = inst.gamma * inst.s * out.K1 -
          2.0 * inst.gamma * inst.t * (out.K2 * out.u2) -
          mats.K * out.u4;
  return out;
}

inline Eigen::MatrixXd bordered(const Eigen::MatrixXd& top_left,
                                const Eigen::VectorXd& border,
                                double corner) {
  const Eigen::Index n = top_left.rows();
  Eigen::MatrixXd out(n + 1, n + 1);
  out.topLeftCorner(n, n) = top_left;
  out.topRightCorner(n, 1) = border;
  out.bottomLeftCorner(1, n) = border.transpose();
  out(n, n) = corner;
  return out;
}

}  // namespace detail

/// Symmetrised Jacobian of the simultaneous stationarity map at a strategy
/// (sponsorship gradient stacked with the revenue price derivative),
/// together with a three-part split J = -(A + B + C) whose parts isolate
/// the network, own-price, and cross effects.  A computed point is a strict
/// local optimum for both stage-one players when J is negative definite,
/// which the split certifies whenever each part is positive definite.
struct CompetitiveCurvature {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  Eigen::MatrixXd jacobian_sum;  // built directly, not from the parts
};

inline CompetitiveCurvature competitive_curvature(
    const MarketInstance& inst, const EquilibriumMatrices& mats,
    const Strategy& strat) {
  const detail::CurvaturePieces pc =
      detail::curvature_pieces(inst, mats, strat);
  const double p = strat.p;
  const double gt = inst.gamma * inst.t;
  const double kv = pc.K1.dot(pc.v);
  CompetitiveCurvature out;
  out.A = detail::bordered(4.0 * gt * p * p * pc.K2,
                           2.0 * gt * (pc.K2 * pc.u2), 2.0 * kv);
  out.B = detail::bordered(3.0 * p * p * mats.K,
                           -inst.gamma * inst.s * pc.K1, kv);
  out.C = detail::bordered(p * p * mats.K, mats.K * pc.u4, kv);
  out.jacobian_sum = detail::bordered(
      -4.0 * gt * p * p * pc.K2 - 4.0 * p * p * mats.K, pc.w, -4.0 * kv);
  return out;
}

/// Hessian of the coalition payoff in (theta, p) and its split
/// H = -(D + E + F).  The bordered structure matches the competitive case;
/// only the scalar corners and the network part's weights change.
struct CooperativeCurvature {
  Eigen::MatrixXd D;
  Eigen::MatrixXd E;
  Eigen::MatrixXd F;
  Eigen::MatrixXd hessian;  // built directly, not from the parts
};

inline CooperativeCurvature cooperative_curvature(
    const MarketInstance& inst, const EquilibriumMatrices& mats,
    const Strategy& strat) {
  const detail::CurvaturePieces pc =
      detail::curvature_pieces(inst, mats, strat);
  const double p = strat.p;
  const double gt = inst.gamma * inst.t;
  const double vKv = pc.v.dot(mats.K * pc.v);
  const double vK2v = pc.v.dot(pc.K2 * pc.v);
  CooperativeCurvature out;
  out.D = detail::bordered(2.0 * gt * p * p * pc.K2,
                           2.0 * gt * (pc.K2 * pc.u2), 2.0 * gt * vK2v);
  out.E = detail::bordered(p * p * mats.K, mats.K * pc.u4, vKv);
  out.F = detail::bordered(p * p * mats.K,
                           -inst.gamma * inst.s * pc.K1, vKv);
  out.hessian = detail::bordered(
      -2.0 * gt * p * p * pc.K2 - 2.0 * p * p * mats.K, pc.w,
      -2.0 * gt * vK2v - 2.0 * vKv);
  return out;
}

/// Inertia agreement under the explicit Schur congruence
/// P = [[I, -M^{-1} v], [0, 1]]: Sylvester's law says P' Q P and Q share
/// their signature, so disagreement flags a numerical problem (or a
/// singular top-left block).
inline bool sylvester_congruence_agrees(const Eigen::MatrixXd& q,
                                        double rel_tol = 1e-9) {
  if (q.rows() != q.cols() || q.rows() < 2)
    throw InvalidConfig("bordered matrix must be square, at least 2x2");
  const Eigen::Index n = q.rows() - 1;
  const Eigen::MatrixXd m = q.topLeftCorner(n, n);
  const Eigen::VectorXd v = q.topRightCorner(n, 1);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) return false;
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n + 1, n + 1);
  p.topRightCorner(n, 1) = -lu.solve(v);
  const Eigen::MatrixXd transformed = p.transpose() * q * p;
  return inertia(q, rel_tol) == inertia(transformed, rel_tol);
}

struct BlockAssessment {
  MatrixVerdict verdict;
  bool sylvester_agrees = false;
};

namespace detail {

inline BlockAssessment assess_block(const Eigen::MatrixXd& m,
                                    double rel_tol) {
  BlockAssessment out;
  out.verdict = assess(m, rel_tol);
  out.sylvester_agrees = sylvester_congruence_agrees(m);
  return out;
}

}  // namespace detail

/// Full competitive second-order report: verdicts for the three parts and
/// the symmetrised Jacobian, congruence sanity bools, and an exactness bool
/// for the split (direct Jacobian vs minus the sum of parts).
struct CompetitiveDefiniteness {
  CompetitiveCurvature curvature;
  BlockAssessment part_a;
  BlockAssessment part_b;
  BlockAssessment part_c;
  BlockAssessment jacobian;
  bool parts_all_positive_definite = false;
  bool decomposition_consistent = false;
};

inline CompetitiveDefiniteness check_definiteness_competitive(
    const MarketInstance& inst, const EquilibriumMatrices& mats,
    const Strategy& strat, double rel_tol = 1e-11) {
  CompetitiveDefiniteness out;
  out.curvature = competitive_curvature(inst, mats, strat);
  out.part_a = detail::assess_block(out.curvature.A, rel_tol);
  out.part_b = detail::assess_block(out.curvature.B, rel_tol);
  out.part_c = detail::assess_block(out.curvature.C, rel_tol);
  out.jacobian = detail::assess_block(out.curvature.jacobian_sum, rel_tol);
  out.parts_all_positive_definite = out.part_a.verdict.positive_definite &&
                                    out.part_b.verdict.positive_definite &&
                                    out.part_c.verdict.positive_definite;
  const Eigen::MatrixXd sum =
      out.curvature.A + out.curvature.B + out.curvature.C;
  const double err =
      (out.curvature.jacobian_sum + sum).lpNorm<Eigen::Infinity>();
  out.decomposition_consistent =
      err <= 1e-9 * (1.0 + sum.lpNorm<Eigen::Infinity>());
  return out;
}

/// Cooperative counterpart of the report above.
struct CooperativeDefiniteness {
  CooperativeCurvature curvature;
  BlockAssessment part_d;
  BlockAssessment part_e;
  BlockAssessment part_f;
  BlockAssessment hessian;
  bool parts_all_positive_definite = false;
  bool decomposition_consistent = false;
};

inline CooperativeDefiniteness check_definiteness_cooperative(
    const MarketInstance& inst, const EquilibriumMatrices& mats,
    const Strategy& strat, double rel_tol = 1e-11) {
  CooperativeDefiniteness out;
  out.curvature = cooperative_curvature(inst, mats, strat);
  out.part_d = detail::assess_block(out.curvature.D, rel_tol);
  out.part_e = detail::assess_block(out.curvature.E, rel_tol);
  out.part_f = detail::assess_block(out.curvature.F, rel_tol);
  out.hessian = detail::assess_block(out.curvature.hessian, rel_tol);
  out.parts_all_positive_definite = out.part_d.verdict.positive_definite &&
                                    out.part_e.verdict.positive_definite &&
                                    out.part_f.verdict.positive_definite;
  const Eigen::MatrixXd sum =
      out.curvature.D + out.curvature.E + out.curvature.F;
  const double err =
      (out.curvature.hessian + sum).lpNorm<Eigen::Infinity>();
  out.decomposition_consistent =
      err <= 1e-9 * (1.0 + sum.lpNorm<Eigen::Infinity>());
  return out;
}

/// Central finite-difference gradient, exact to roundoff on quadratics.
template <typename F>
Eigen::VectorXd finite_difference_gradient(F&& f, const Eigen::VectorXd& z,
                                           double h = 1e-6) {
  if (!(h > 0.0)) throw InvalidConfig("h must be positive");
  Eigen::VectorXd g(z.size());
  Eigen::VectorXd probe = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    probe[i] = z[i] + h;
    const double fp = f(probe);
    probe[i] = z[i] - h;
    const double fm = f(probe);
    probe[i] = z[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace sponet
