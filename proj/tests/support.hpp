#pragma once

#include <Eigen/Dense>

#include "sponet/market.hpp"

namespace sponet_test {

/// Instance with identical users: a_i = a, b_i = b, g_ij = g off-diagonal.
inline sponet::MarketInstance uniform_instance(Eigen::Index n, double a,
                                               double b, double g,
                                               double c = 3.0,
                                               double gamma = 2.0,
                                               double s = 5.0,
                                               double t = 5.0) {
  sponet::MarketInstance inst;
  inst.a = Eigen::VectorXd::Constant(n, a);
  inst.b = Eigen::VectorXd::Constant(n, b);
  inst.g = Eigen::MatrixXd::Constant(n, n, g);
  inst.g.diagonal().setZero();
  inst.c = c;
  inst.gamma = gamma;
  inst.s = s;
  inst.t = t;
  return inst;
}

/// The simulation baseline with one knob turned at a time in tests.
inline sponet::GenerationConfig default_config() {
  return sponet::GenerationConfig{};
}

/// Central finite-difference derivative of a scalar function of a scalar.
template <typename F>
double fd_derivative(F&& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Central finite-difference Hessian of a scalar function of a vector.
template <typename F>
Eigen::MatrixXd fd_hessian(F&& f, const Eigen::VectorXd& z,
                           double h = 1e-4) {
  const Eigen::Index n = z.size();
  Eigen::MatrixXd out(n, n);
  Eigen::VectorXd probe = z;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      probe = z;
      probe[i] += h;
      probe[j] += h;
      const double fpp = f(probe);
      probe = z;
      probe[i] += h;
      probe[j] -= h;
      const double fpm = f(probe);
      probe = z;
      probe[i] -= h;
      probe[j] += h;
      const double fmp = f(probe);
      probe = z;
      probe[i] -= h;
      probe[j] -= h;
      const double fmm = f(probe);
      out(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  return (0.5 * (out + out.transpose())).eval();
}

}  // namespace sponet_test
