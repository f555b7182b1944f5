// Command line front end: generate random markets, solve the competitive
// and/or cooperative stage-one problem across an optional parameter sweep,
// and emit one CSV row per (market, mode).

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sponet/sponet.hpp"

namespace {

sponet::SolveMode parse_mode(const std::string& mode) {
  if (mode == "competitive") return sponet::SolveMode::competitive;
  if (mode == "cooperative") return sponet::SolveMode::cooperative;
  if (mode == "both") return sponet::SolveMode::both;
  throw sponet::InvalidConfig(
      "mode must be competitive, cooperative, or both (got '" + mode +
      "')");
}

sponet::SweepSpec parse_sweep(const std::string& spec) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : spec) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 4)
    throw sponet::InvalidConfig(
        "sweep must look like parameter:start:stop:steps (got '" + spec +
        "')");
  sponet::SweepSpec out;
  if (parts[0] == "n")
    out.parameter = sponet::SweepParameter::n;
  else if (parts[0] == "mu_g")
    out.parameter = sponet::SweepParameter::mu_g;
  else if (parts[0] == "c")
    out.parameter = sponet::SweepParameter::c;
  else
    throw sponet::InvalidConfig("sweep parameter must be n, mu_g, or c");
  try {
    std::size_t used = 0;
    out.start = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument(parts[1]);
    out.stop = std::stod(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument(parts[2]);
    out.steps = std::stol(parts[3], &used);
    if (used != parts[3].size()) throw std::invalid_argument(parts[3]);
  } catch (const std::logic_error&) {
    throw sponet::InvalidConfig("sweep values must be numeric (got '" +
                                spec + "')");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Sponsored-data market solver: equilibria of a price-setting "
      "provider, a sponsoring content provider, and demand-coupled users"};
  app.set_config("--config", "",
                 "Read options from a key=value file (same names as the "
                 "long flags, without the leading dashes)");

  sponet::ExperimentConfig cfg;
  std::string mode = "both";
  std::string sweep;

  app.add_option("--n", cfg.generation.n, "Number of users")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--mu-a", cfg.generation.mu_a,
                 "Mean of the users' base utility coefficient")
      ->capture_default_str();
  app.add_option("--mu-b", cfg.generation.mu_b,
                 "Mean of the users' own congestion coefficient")
      ->capture_default_str();
  app.add_option("--mu-g", cfg.generation.mu_g,
                 "Mean of the pairwise network benefit")
      ->capture_default_str();
  app.add_option("--c", cfg.generation.c, "Shared congestion coefficient")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  app.add_option("--gamma", cfg.generation.gamma,
                 "Sponsor's revenue conversion rate")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--s", cfg.generation.s,
                 "Sponsor's linear revenue coefficient")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--t", cfg.generation.t,
                 "Sponsor's saturation coefficient")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", cfg.generation.seed, "Base RNG seed")
      ->capture_default_str();
  app.add_option("--mode", mode, "competitive, cooperative, or both")
      ->capture_default_str();
  app.add_option("--sweep", sweep,
                 "Sweep one parameter: parameter:start:stop:steps with "
                 "parameter in {n, mu_g, c}, e.g. n:10:100:10");
  app.add_option("--replications", cfg.replications,
                 "Random markets per sweep value (seeds base..base+r-1)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--tol", cfg.tol, "Solver convergence tolerance")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--max-iter", cfg.max_iter, "Solver iteration cap")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--out", cfg.output_path,
                 "Write the CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Uniform exit codes: 0 for --help, 2 for any usage error.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    cfg.mode = parse_mode(mode);
    if (!sweep.empty()) cfg.sweep = parse_sweep(sweep);
    const std::vector<sponet::SweepRow> rows = sponet::run_experiment(cfg);
    if (cfg.output_path.empty())
      std::fputs(sponet::format_csv(rows).c_str(), stdout);
    return 0;
  } catch (const sponet::InvalidConfig& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
