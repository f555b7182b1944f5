#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

#include "sponet/errors.hpp"

namespace sponet {

/// One market of n mobile users facing a service provider (who sets a uniform
/// usage price) and a content provider (who may sponsor a fraction of each
/// user's traffic).
///
/// Per-user data:
///   a_i  standalone appetite (marginal value of the first unit), a_i > 0
///   b_i  self-congestion aversion (quadratic), b_i > 0
///   g_ij symmetric social-influence weight between users i and j, g_ii = 0
/// Shared scalars:
///   c      capacity congestion on total traffic, c >= 0
///   gamma  advertising revenue per unit of content value, gamma > 0
///   s, t   linear / saturation coefficients of content value, s, t > 0
struct MarketInstance {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  Eigen::MatrixXd g;
  double c = 3.0;
  double gamma = 2.0;
  double s = 5.0;
  double t = 5.0;

  Eigen::Index n() const { return a.size(); }

  /// Throws InvalidConfig unless every structural invariant holds.
  void validate() const {
    const Eigen::Index m = a.size();
    if (m < 1) throw InvalidConfig("instance needs at least one user");
    if (b.size() != m || g.rows() != m || g.cols() != m)
      throw InvalidConfig("a, b, g dimensions disagree");
    if (!a.allFinite() || !b.allFinite() || !g.allFinite())
      throw InvalidConfig("instance data must be finite");
    if (!(a.array() > 0.0).all()) throw InvalidConfig("a must be positive");
    if (!(b.array() > 0.0).all()) throw InvalidConfig("b must be positive");
    if (c < 0.0) throw InvalidConfig("c must be nonnegative");
    if (!(gamma > 0.0) || !(s > 0.0) || !(t > 0.0))
      throw InvalidConfig("gamma, s, t must be positive");
    if (g.diagonal().cwiseAbs().maxCoeff() != 0.0)
      throw InvalidConfig("g must have a zero diagonal");
    const double scale = 1.0 + g.cwiseAbs().maxCoeff();
    if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw InvalidConfig("g must be symmetric");
  }
};

/// Matrices of the demand stage.  With Lambda = diag(b_i + c) and G holding
/// g_ij - 2c off the diagonal (zero on it), simultaneous user optimality is
/// the linear system (2 Lambda - G) x = a - q for net payments q, so
/// K = (2 Lambda - G)^{-1} maps net appetite to equilibrium demand.
struct EquilibriumMatrices {
  Eigen::MatrixXd G;
  Eigen::VectorXd lambda;
  Eigen::MatrixXd K;
};

/// Assembles G, Lambda and K for an instance.  K is computed by a Cholesky
/// factorisation solved against the identity, then symmetrised to remove
/// roundoff skew.  Throws SingularSystem or NotPositiveDefinite when
/// 2 Lambda - G is unusable.
inline EquilibriumMatrices build_matrices(const MarketInstance& inst) {
  inst.validate();
  const Eigen::Index m = inst.n();
  EquilibriumMatrices out;
  out.lambda = (inst.b.array() + inst.c).matrix();
  out.G = (inst.g.array() - 2.0 * inst.c).matrix();
  out.G.diagonal().setZero();

  Eigen::MatrixXd system = -out.G;
  system += (2.0 * out.lambda).asDiagonal();

  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
    if (!lu.isInvertible())
      throw SingularSystem("demand-stage system matrix is singular");
    throw NotPositiveDefinite(
        "demand-stage system matrix is not positive definite");
  }
  // LLT can scrape through an exactly singular matrix on roundoff.
  if (!(llt.rcond() > 1e-14))
    throw SingularSystem(
        "demand-stage system matrix is numerically singular");
  out.K = llt.solve(Eigen::MatrixXd::Identity(m, m));
  out.K = (0.5 * (out.K + out.K.transpose())).eval();
  return out;
}

/// Parameters for random instance generation.  Defaults are the simulation
/// baseline used throughout the test-suite: 100 users, appetite and aversion
/// centred at 30, influence centred at 4, c = 3, gamma = 2, s = t = 5.
struct GenerationConfig {
  Eigen::Index n = 100;
  double mu_a = 30.0;
  double mu_b = 30.0;
  double mu_g = 4.0;
  double c = 3.0;
  double gamma = 2.0;
  double s = 5.0;
  double t = 5.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// One private engine per (field, i, j) scalar.  Keying streams by entity
// rather than drawing sequentially gives common random numbers by prefix:
// user i's draws are identical for every population size containing i, and
// shifting a field's mean never reshuffles any other field.
inline std::mt19937_64 field_stream(std::uint64_t seed, std::uint64_t field,
                                    std::uint64_t i, std::uint64_t j) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(field));
  h = splitmix64(h ^ splitmix64(i));
  h = splitmix64(h ^ splitmix64(j));
  return std::mt19937_64(h);
}

// mu plus a unit-variance draw, redrawn (within the scalar's own stream)
// until strictly positive.
inline double positive_draw(std::uint64_t seed, std::uint64_t field,
                            std::uint64_t i, double mu) {
  auto rng = field_stream(seed, field, i, 0);
  std::normal_distribution<double> unit(0.0, 1.0);
  double v = mu + unit(rng);
  while (v <= 0.0) v = mu + unit(rng);
  return v;
}

// mu plus a unit-variance draw, kept even if negative: influence weights may
// legitimately be hostile.
inline double pair_draw(std::uint64_t seed, std::uint64_t field,
                        std::uint64_t i, std::uint64_t j, double mu) {
  auto rng = field_stream(seed, field, i, j);
  std::normal_distribution<double> unit(0.0, 1.0);
  return mu + unit(rng);
}

inline constexpr std::uint64_t kFieldA = 1;
inline constexpr std::uint64_t kFieldB = 2;
inline constexpr std::uint64_t kFieldG = 3;

}  // namespace detail

/// Draws a random instance.  a_i and b_i are unit-variance normals centred at
/// mu_a / mu_b, redrawn until positive; g_ij = g_ji is a unit-variance normal
/// centred at mu_g, drawn once per unordered pair and kept even if negative.
/// Deterministic per seed.
inline MarketInstance generate_instance(const GenerationConfig& cfg) {
  if (cfg.n < 1) throw InvalidConfig("n must be at least 1");
  if (!(cfg.gamma > 0.0) || !(cfg.s > 0.0) || !(cfg.t > 0.0))
    throw InvalidConfig("gamma, s, t must be positive");
  if (cfg.c < 0.0) throw InvalidConfig("c must be nonnegative");

  MarketInstance inst;
  inst.c = cfg.c;
  inst.gamma = cfg.gamma;
  inst.s = cfg.s;
  inst.t = cfg.t;
  inst.a.resize(cfg.n);
  inst.b.resize(cfg.n);
  inst.g = Eigen::MatrixXd::Zero(cfg.n, cfg.n);

  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    const auto ui = static_cast<std::uint64_t>(i);
    inst.a[i] = detail::positive_draw(cfg.seed, detail::kFieldA, ui, cfg.mu_a);
    inst.b[i] = detail::positive_draw(cfg.seed, detail::kFieldB, ui, cfg.mu_b);
  }
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    for (Eigen::Index j = i + 1; j < cfg.n; ++j) {
      const double w =
          detail::pair_draw(cfg.seed, detail::kFieldG,
                            static_cast<std::uint64_t>(i),
                            static_cast<std::uint64_t>(j), cfg.mu_g);
      inst.g(i, j) = w;
      inst.g(j, i) = w;
    }
  }
  inst.validate();
  return inst;
}

}  // namespace sponet
