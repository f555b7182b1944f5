#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sponet {

// Configuration or instance data violates a documented precondition.
struct InvalidConfig : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A user index is outside [0, n).
struct IndexOutOfRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// The demand-stage system matrix could not be inverted.
struct SingularSystem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A matrix that must be symmetric positive definite is not.
struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A demand vector has components outside the positive orthant.  Carries the
// offending user indices so callers can report which users dropped out.
struct NonPositiveDemand : std::runtime_error {
  std::vector<std::ptrdiff_t> indices;

  explicit NonPositiveDemand(std::vector<std::ptrdiff_t> bad)
      : std::runtime_error(describe(bad)), indices(std::move(bad)) {}

 private:
  static std::string describe(const std::vector<std::ptrdiff_t>& bad) {
    std::string msg = "demand is non-positive for user index";
    for (std::ptrdiff_t i : bad) msg += " " + std::to_string(i);
    return msg;
  }
};

// An iterative solver ran out of iterations or detected divergence.
struct NoConvergence : std::runtime_error {
  double residual;
  long iterations;
  bool diverged;

  NoConvergence(const std::string& where, double res, long iters, bool div)
      : std::runtime_error(where + (div ? " diverged" : " did not converge") +
                           " (residual " + std::to_string(res) + " after " +
                           std::to_string(iters) + " iterations)"),
        residual(res),
        iterations(iters),
        diverged(div) {}
};

// A price that must be strictly positive is not.
struct DegeneratePrice : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every user is fully sponsored, so the provider's price drops out of all
// revenues and its stage-one problem has no maximiser.
struct AllSponsored : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An aggregation was asked for on an empty collection.
struct EmptyInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace sponet
