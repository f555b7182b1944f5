#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sponet/competitive.hpp"
#include "sponet/cooperative.hpp"
#include "sponet/errors.hpp"
#include "sponet/market.hpp"
#include "sponet/validate.hpp"

namespace sponet {

enum class SolveMode { competitive, cooperative, both };
enum class SweepParameter { n, mu_g, c };

inline std::string to_string(SolveMode mode) {
  switch (mode) {
    case SolveMode::competitive:
      return "competitive";
    case SolveMode::cooperative:
      return "cooperative";
    case SolveMode::both:
      return "both";
  }
  throw InvalidConfig("unknown mode");
}

inline std::string to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::n:
      return "n";
    case SweepParameter::mu_g:
      return "mu_g";
    case SweepParameter::c:
      return "c";
  }
  throw InvalidConfig("unknown sweep parameter");
}

/// Evenly spaced values over [start, stop]; a single step pins start.
struct SweepSpec {
  SweepParameter parameter = SweepParameter::n;
  double start = 0.0;
  double stop = 0.0;
  long steps = 1;
};

struct ExperimentConfig {
  GenerationConfig generation;
  SolveMode mode = SolveMode::both;
  std::optional<SweepSpec> sweep;
  long replications = 10;
  double tol = 1e-8;
  long max_iter = 10000;
  std::string output_path;  // empty: do not write a file
};

/// One solved (or failed) market in a sweep.  Metric fields are NaN and
/// status names the mapped exception whenever the solve did not finish.
struct SweepRow {
  double sweep_value = 0.0;
  std::uint64_t seed = 0;
  SolveMode mode = SolveMode::competitive;
  double total_demand = 0.0;
  double price = 0.0;
  double mean_sponsorship = 0.0;
  double cp_profit = 0.0;
  double sp_revenue = 0.0;
  double aggregate_payoff = 0.0;
  double sum_user_utility = 0.0;
  long iterations = 0;
  bool a1 = false;
  bool a2 = false;
  bool a3 = false;
  std::string status = "ok";
};

inline const char* csv_header() {
  return "sweep_value,seed,mode,total_demand,price,mean_sponsorship,"
         "cp_profit,sp_revenue,aggregate_payoff,sum_user_utility,"
         "iterations,a1,a2,a3,status";
}

namespace detail {

inline std::string csv_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string format_csv(const std::vector<SweepRow>& rows) {
  std::string out = csv_header();
  out += '\n';
  for (const SweepRow& r : rows) {
    out += detail::csv_double(r.sweep_value);
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += to_string(r.mode);
    out += ',';
    out += detail::csv_double(r.total_demand);
    out += ',';
    out += detail::csv_double(r.price);
    out += ',';
    out += detail::csv_double(r.mean_sponsorship);
    out += ',';
    out += detail::csv_double(r.cp_profit);
    out += ',';
    out += detail::csv_double(r.sp_revenue);
    out += ',';
    out += detail::csv_double(r.aggregate_payoff);
    out += ',';
    out += detail::csv_double(r.sum_user_utility);
    out += ',';
    out += std::to_string(r.iterations);
    out += ',';
    out += r.a1 ? '1' : '0';
    out += ',';
    out += r.a2 ? '1' : '0';
    out += ',';
    out += r.a3 ? '1' : '0';
    out += ',';
    out += r.status;
    out += '\n';
  }
  return out;
}

inline void write_csv(const std::string& path,
                      const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << format_csv(rows);
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace detail {

inline SweepRow failed_row(double sweep_value, std::uint64_t seed,
                           SolveMode mode, const std::string& status,
                           long iterations, bool a1_known, bool a1) {
  SweepRow row;
  row.sweep_value = sweep_value;
  row.seed = seed;
  row.mode = mode;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.total_demand = nan;
  row.price = nan;
  row.mean_sponsorship = nan;
  row.cp_profit = nan;
  row.sp_revenue = nan;
  row.aggregate_payoff = nan;
  row.sum_user_utility = nan;
  row.iterations = iterations;
  row.a1 = a1_known && a1;
  row.a2 = false;
  row.a3 = false;
  row.status = status;
  return row;
}

/// Solve one instance in one mode, mapping the model-domain exceptions to
/// status strings.  Logic or configuration errors are not caught: those
/// mean the caller's request was malformed, not that the market failed.
inline SweepRow solve_row(const MarketInstance& inst,
                          const EquilibriumMatrices& mats, SolveMode mode,
                          double sweep_value, std::uint64_t seed, bool a1,
                          const SolveOptions& opts) {
  SweepRow row;
  row.sweep_value = sweep_value;
  row.seed = seed;
  row.mode = mode;
  row.a1 = a1;
  try {
    Strategy strat;
    if (mode == SolveMode::competitive) {
      const CompetitiveResult res = solve_competitive(inst, mats, opts);
      strat = res.strategy;
      row.total_demand = res.demand.x.sum();
      row.sum_user_utility = res.demand.utility.sum();
      row.cp_profit = res.payoffs.cp_profit;
      row.sp_revenue = res.payoffs.sp_revenue;
      row.aggregate_payoff = res.payoffs.cp_profit + res.payoffs.sp_revenue;
      row.iterations = res.iterations;
    } else {
      const CooperativeResult res =
          solve_cooperative_closed_form(inst, mats, opts);
      strat = res.strategy;
      row.total_demand = res.demand.x.sum();
      row.sum_user_utility = res.demand.utility.sum();
      row.cp_profit = res.payoffs.cp_profit;
      row.sp_revenue = res.payoffs.sp_revenue;
      row.aggregate_payoff = res.aggregate_payoff;
      row.iterations = res.iterations;
    }
    row.price = strat.p;
    row.mean_sponsorship = strat.theta.mean();
    row.a2 = check_assumption2(inst, mats, strat).holds;
    row.a3 = check_assumption3(inst, mats, strat).holds;
    row.status = "ok";
    return row;
  } catch (const NoConvergence& e) {
    return failed_row(sweep_value, seed, mode, "no_convergence",
                      e.iterations, true, a1);
  } catch (const NonPositiveDemand&) {
    return failed_row(sweep_value, seed, mode, "non_positive_demand", 0,
                      true, a1);
  } catch (const AllSponsored&) {
    return failed_row(sweep_value, seed, mode, "all_sponsored", 0, true,
                      a1);
  } catch (const DegeneratePrice&) {
    return failed_row(sweep_value, seed, mode, "degenerate_price", 0, true,
                      a1);
  } catch (const SingularSystem&) {
    return failed_row(sweep_value, seed, mode, "singular_system", 0, true,
                      a1);
  } catch (const NotPositiveDefinite&) {
    return failed_row(sweep_value, seed, mode, "not_positive_definite", 0,
                      true, a1);
  }
}

}  // namespace detail

/// Run the configured sweep serially and deterministically: rows appear in
/// (sweep value, replication, mode) order with seed = base seed +
/// replication index, so equal configurations produce byte-identical CSVs.
/// Writes output_path when nonempty.  Configuration errors throw; market
/// failures become rows with a status.
inline std::vector<SweepRow> run_experiment(const ExperimentConfig& cfg) {
  if (cfg.replications < 1)
    throw InvalidConfig("replications must be at least 1");
  if (!(cfg.tol > 0.0)) throw InvalidConfig("tol must be positive");
  if (cfg.max_iter < 1) throw InvalidConfig("max_iter must be at least 1");

  std::vector<double> values;
  if (cfg.sweep.has_value()) {
    const SweepSpec& sw = *cfg.sweep;
    if (sw.steps < 1) throw InvalidConfig("sweep steps must be at least 1");
    if (!std::isfinite(sw.start) || !std::isfinite(sw.stop))
      throw InvalidConfig("sweep range must be finite");
    for (long k = 0; k < sw.steps; ++k) {
      const double frac =
          sw.steps == 1 ? 0.0
                        : static_cast<double>(k) /
                              static_cast<double>(sw.steps - 1);
      values.push_back(sw.start + frac * (sw.stop - sw.start));
    }
  } else {
    values.push_back(static_cast<double>(cfg.generation.n));
  }

  const SolveOptions opts{cfg.tol, cfg.max_iter};
  std::vector<SweepRow> rows;
  for (double value : values) {
    GenerationConfig gen = cfg.generation;
    double recorded = value;
    if (cfg.sweep.has_value()) {
      switch (cfg.sweep->parameter) {
        case SweepParameter::n: {
          const long n = std::llround(value);
          if (n < 1) throw InvalidConfig("swept n must be at least 1");
          gen.n = n;
          recorded = static_cast<double>(n);
          break;
        }
        case SweepParameter::mu_g:
          gen.mu_g = value;
          break;
        case SweepParameter::c:
          if (value < 0.0) throw InvalidConfig("swept c must be >= 0");
          gen.c = value;
          break;
      }
    }
    for (long rep = 0; rep < cfg.replications; ++rep) {
      gen.seed = cfg.generation.seed + static_cast<std::uint64_t>(rep);
      const MarketInstance inst = generate_instance(gen);
      const bool a1 = check_assumption1(inst).holds;
      std::optional<EquilibriumMatrices> mats;
      std::string build_status;
      try {
        mats = build_matrices(inst);
      } catch (const SingularSystem&) {
        build_status = "singular_system";
      } catch (const NotPositiveDefinite&) {
        build_status = "not_positive_definite";
      }
      const bool want_comp = cfg.mode != SolveMode::cooperative;
      const bool want_coop = cfg.mode != SolveMode::competitive;
      if (want_comp) {
        rows.push_back(
            mats ? detail::solve_row(inst, *mats, SolveMode::competitive,
                                     recorded, gen.seed, a1, opts)
                 : detail::failed_row(recorded, gen.seed,
                                      SolveMode::competitive, build_status,
                                      0, true, a1));
      }
      if (want_coop) {
        rows.push_back(
            mats ? detail::solve_row(inst, *mats, SolveMode::cooperative,
                                     recorded, gen.seed, a1, opts)
                 : detail::failed_row(recorded, gen.seed,
                                      SolveMode::cooperative, build_status,
                                      0, true, a1));
      }
    }
  }
  if (!cfg.output_path.empty()) write_csv(cfg.output_path, rows);
  return rows;
}

/// Per (sweep value, mode) aggregates over the ok rows.
struct SummaryRow {
  double sweep_value = 0.0;
  SolveMode mode = SolveMode::competitive;
  long rows_total = 0;
  long rows_ok = 0;
  double mean_total_demand = 0.0, sd_total_demand = 0.0;
  double mean_price = 0.0, sd_price = 0.0;
  double mean_mean_sponsorship = 0.0, sd_mean_sponsorship = 0.0;
  double mean_cp_profit = 0.0, sd_cp_profit = 0.0;
  double mean_sp_revenue = 0.0, sd_sp_revenue = 0.0;
  double mean_aggregate_payoff = 0.0, sd_aggregate_payoff = 0.0;
  double mean_sum_user_utility = 0.0, sd_sum_user_utility = 0.0;
  double mean_iterations = 0.0, sd_iterations = 0.0;
};

namespace detail {

inline void mean_sd(const std::vector<double>& xs, double& mean,
                    double& sd) {
  if (xs.empty()) {
    mean = std::numeric_limits<double>::quiet_NaN();
    sd = 0.0;
    return;
  }
  double sum = 0.0;
  for (double x : xs) sum += x;
  mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) {
    sd = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

/// Group rows by (sweep value, mode) in first-appearance order and report
/// sample means and standard deviations of the metrics over ok rows.
inline std::vector<SummaryRow> summarize(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw EmptyInput("no rows to summarize");
  std::vector<std::pair<double, SolveMode>> keys;
  std::vector<std::vector<const SweepRow*>> groups;
  for (const SweepRow& r : rows) {
    const std::pair<double, SolveMode> key{r.sweep_value, r.mode};
    std::size_t g = 0;
    for (; g < keys.size(); ++g)
      if (keys[g] == key) break;
    if (g == keys.size()) {
      keys.push_back(key);
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }
  std::vector<SummaryRow> out;
  for (std::size_t g = 0; g < keys.size(); ++g) {
    SummaryRow s;
    s.sweep_value = keys[g].first;
    s.mode = keys[g].second;
    s.rows_total = static_cast<long>(groups[g].size());
    std::vector<double> demand, price, sponsorship, cp, sp, agg, util,
        iters;
    for (const SweepRow* r : groups[g]) {
      if (r->status != "ok") continue;
      demand.push_back(r->total_demand);
      price.push_back(r->price);
      sponsorship.push_back(r->mean_sponsorship);
      cp.push_back(r->cp_profit);
      sp.push_back(r->sp_revenue);
      agg.push_back(r->aggregate_payoff);
      util.push_back(r->sum_user_utility);
      iters.push_back(static_cast<double>(r->iterations));
    }
    s.rows_ok = static_cast<long>(demand.size());
    detail::mean_sd(demand, s.mean_total_demand, s.sd_total_demand);
    detail::mean_sd(price, s.mean_price, s.sd_price);
    detail::mean_sd(sponsorship, s.mean_mean_sponsorship,
                    s.sd_mean_sponsorship);
    detail::mean_sd(cp, s.mean_cp_profit, s.sd_cp_profit);
    detail::mean_sd(sp, s.mean_sp_revenue, s.sd_sp_revenue);
    detail::mean_sd(agg, s.mean_aggregate_payoff, s.sd_aggregate_payoff);
    detail::mean_sd(util, s.mean_sum_user_utility, s.sd_sum_user_utility);
    detail::mean_sd(iters, s.mean_iterations, s.sd_iterations);
    out.push_back(s);
  }
  return out;
}

}  // namespace sponet
