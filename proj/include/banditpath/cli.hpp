#pragma once

// Command-line front end: simulate, rate, trajectory, toy, sweep-c.
// Exit codes: 0 success, 2 configuration, 3 I/O, 4 solver failure on more
// than half of the requested grid.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "banditpath/instanton.hpp"
#include "banditpath/io.hpp"
#include "banditpath/mc_sim.hpp"
#include "banditpath/saddle_equations.hpp"
#include "banditpath/toy_exact.hpp"

namespace banditpath::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitSolver = 4;

inline constexpr const char* kThreadsEnv = "BANDITPATH_THREADS";

struct Overrides {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> trials;
  std::optional<double> r_min, r_max, r_step;
  std::optional<double> c, gamma, beta;
};

inline void add_common_options(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config, "JSON experiment config (or a previous metadata.json)");
  cmd.add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd.add_option("--seed", o.seed, "Master seed");
  cmd.add_option("--threads", o.threads, "Worker threads (overrides BANDITPATH_THREADS)");
  cmd.add_option("--trials", o.trials, "Monte Carlo episodes");
  cmd.add_option("--r-min", o.r_min, "Regret grid start");
  cmd.add_option("--r-max", o.r_max, "Regret grid end");
  cmd.add_option("--r-step", o.r_step, "Regret grid step");
  cmd.add_option("--c", o.c, "Exploration parameter");
  cmd.add_option("--gamma", o.gamma, "Noise scale gamma (variance factor)");
  cmd.add_option("--beta", o.beta, "Inverse temperature");
}

/// Config file, then environment, then flags.
inline ExperimentConfig resolve_config(const std::string& command, const Overrides& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);

  if (const char* env = std::getenv(kThreadsEnv); env && *env) {
    try {
      cfg.threads = static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
      throw ConfigError(std::string(kThreadsEnv) + " is not a non-negative integer");
    }
  }
  if (o.threads) cfg.threads = *o.threads;
  if (o.seed) {
    cfg.simulate.master_seed = *o.seed;
    cfg.rate.seed = *o.seed;
  }
  if (o.trials) {
    if (command == "trajectory")
      cfg.trajectory.trials = *o.trials;
    else
      cfg.simulate.trials = *o.trials;
  }
  if (o.r_min) cfg.rate.r_min = *o.r_min;
  if (o.r_max) cfg.rate.r_max = *o.r_max;
  if (o.r_step) cfg.rate.r_step = *o.r_step;
  if (command == "toy") {
    if (o.gamma) cfg.toy.gamma = *o.gamma;
    if (o.beta) cfg.toy.beta = *o.beta;
  } else {
    if (o.gamma) cfg.spec.gamma = *o.gamma;
    if (o.beta) cfg.spec.beta = *o.beta;
  }
  if (o.c) {
    cfg.spec.c = *o.c;
    if (command == "sweep-c") cfg.sweep.c_values = {*o.c};
  }
  return cfg;
}

inline BanditSpec build_spec(const ExperimentConfig& cfg) {
  try {
    return cfg.spec.build();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline void require_solver_gamma(const BanditSpec& spec) {
  if (!(spec.gamma > 0.0)) throw ConfigError("theory commands need gamma > 0");
  if (spec.arms() < 2) throw ConfigError("theory commands need at least two arms");
}

inline RateOptions rate_options(const ExperimentConfig& cfg) {
  if (cfg.rate.multistarts < 0) throw ConfigError("rate.multistarts must be non-negative");
  RateOptions options;
  options.multistarts = cfg.rate.multistarts;
  options.seed = cfg.rate.seed;
  options.variant = cfg.rate.variant;
  return options;
}

inline void write_metadata(OutputSet& outputs, const std::string& command, const ExperimentConfig& cfg,
                           double wall_time, const nlohmann::json& results) {
  nlohmann::json meta{{"command", command},
                      {"config", config_to_json(cfg)},
                      {"seed", command == "rate" || command == "trajectory" ? cfg.rate.seed : cfg.simulate.master_seed},
                      {"threads", resolve_threads(cfg.threads)},
                      {"wall_time_s", wall_time},
                      {"results", results}};
  outputs["metadata.json"] << meta.dump(2) << '\n';
}

inline nlohmann::json histogram_summary(const RegretHistogram& hist) {
  return {{"trials", hist.trials()}, {"underflow", hist.underflow()}, {"overflow", hist.overflow()}, {"bins", hist.counts().size()}};
}

inline int cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const BanditSpec spec = build_spec(cfg);
  if (cfg.simulate.trials < 1) throw ConfigError("simulate.trials must be at least 1");
  if (!(cfg.simulate.bin_width > 0.0)) throw ConfigError("simulate.bin_width must be positive");
  EnsembleOptions options;
  options.trials = cfg.simulate.trials;
  options.master_seed = cfg.simulate.master_seed;
  options.bin_width = cfg.simulate.bin_width;
  options.origin = cfg.simulate.origin;
  options.threads = cfg.threads;
  std::vector<std::string> files{"histogram.csv", "metadata.json"};
  for (std::size_t i = 0; i < cfg.simulate.windows.size(); ++i) {
    const auto [lo, hi] = cfg.simulate.windows[i];
    if (!(lo < hi)) throw ConfigError("simulate.windows must satisfy lo < hi");
    options.windows.push_back({lo, hi});
    files.push_back("trajectory_sim_" + std::to_string(i) + ".csv");
  }
  OutputSet outputs(dir, files);

  const auto start = std::chrono::steady_clock::now();
  const EnsembleResult result = run_ensemble(spec, options);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_histogram_csv(outputs["histogram.csv"], result.histogram, spec.gamma);
  nlohmann::json matched = nlohmann::json::array();
  for (std::size_t i = 0; i < result.conditioned.size(); ++i) {
    write_trajectory_sim_csv(outputs[files[i + 2]], result.conditioned[i]);
    matched.push_back(result.conditioned[i].matched());
  }
  write_metadata(outputs, "simulate", cfg, wall, {{"histogram", histogram_summary(result.histogram)}, {"window_matches", matched}});
  outputs.close();
  log << "simulate: " << result.histogram.trials() << " episodes in " << wall << " s\n";
  return kExitOk;
}

inline int cmd_rate(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const BanditSpec spec = build_spec(cfg);
  require_solver_gamma(spec);
  if (!(cfg.rate.r_step > 0.0) || !(cfg.rate.r_max >= cfg.rate.r_min))
    throw ConfigError("rate grid needs r_step > 0 and r_max >= r_min");
  const RateOptions options = rate_options(cfg);
  OutputSet outputs(dir, {"rate_curve.csv", "metadata.json"});

  const auto start = std::chrono::steady_clock::now();
  const RateCurve curve = rate_curve(spec, cfg.rate.grid(), options);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_rate_curve_csv(outputs["rate_curve.csv"], curve);
  std::vector<double> r, rate;
  for (const auto& p : curve.points)
    if (p.converged) {
      r.push_back(p.r);
      rate.push_back(p.rate);
    }
  const auto kinks = detect_kinks(r, rate);
  write_metadata(outputs, "rate", cfg, wall,
                 {{"r_mpv", curve.r_mpv},
                  {"grid_points", curve.points.size()},
                  {"failures", curve.failures()},
                  {"kinks", kinks}});
  outputs.close();
  log << "rate: " << curve.points.size() << " points, " << curve.failures() << " failures, r_mpv " << curve.r_mpv << '\n';
  return 2 * curve.failures() > curve.points.size() ? kExitSolver : kExitOk;
}

inline int cmd_trajectory(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const BanditSpec spec = build_spec(cfg);
  require_solver_gamma(spec);
  const auto [lo, hi] = cfg.trajectory.r_window;
  if (!(lo < hi)) throw ConfigError("trajectory.r_window must satisfy lo < hi");
  if (cfg.trajectory.trials < 1) throw ConfigError("trajectory.trials must be at least 1");
  const RateOptions rate = rate_options(cfg);
  OutputSet outputs(dir, {"trajectory_theory.csv", "trajectory_sim.csv", "metadata.json"});

  const auto start = std::chrono::steady_clock::now();
  const double midpoint = 0.5 * (lo + hi);
  SolveStrategy strategy;
  strategy.multistarts = rate.multistarts;
  strategy.seed = rate.seed;
  strategy.variant = rate.variant;
  const auto solutions = solve_saddle(spec, midpoint, strategy);
  std::optional<SaddleField> theory;
  if (!solutions.empty()) theory = solutions.front();

  EnsembleOptions options;
  options.trials = cfg.trajectory.trials;
  options.master_seed = cfg.simulate.master_seed;
  options.bin_width = cfg.simulate.bin_width;
  options.origin = cfg.simulate.origin;
  options.threads = cfg.threads;
  options.windows = {{lo, hi}};
  const EnsembleResult sim = run_ensemble(spec, options);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_trajectory_theory_csv(outputs["trajectory_theory.csv"], theory);
  write_trajectory_sim_csv(outputs["trajectory_sim.csv"], sim.conditioned.front());
  nlohmann::json results{{"r_theory", midpoint},
                         {"n_solutions", solutions.size()},
                         {"matched", sim.conditioned.front().matched()},
                         {"histogram", histogram_summary(sim.histogram)}};
  if (theory) {
    results["rate"] = spec.gamma * theory->action;
    results["residual"] = theory->residual;
  }
  write_metadata(outputs, "trajectory", cfg, wall, results);
  outputs.close();
  log << "trajectory: " << solutions.size() << " saddle solutions, " << sim.conditioned.front().matched()
      << " matched episodes\n";
  return theory ? kExitOk : kExitSolver;
}

inline int cmd_toy(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  ToySpec toy;
  try {
    toy = cfg.toy.build();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.toy.grid_points < 3) throw ConfigError("toy.grid_points must be at least 3");
  OutputSet outputs(dir, {"branches.csv", "metadata.json"});

  const auto start = std::chrono::steady_clock::now();
  double r_c = 0.0;
  try {
    r_c = critical_regret(toy, cfg.toy.bracket);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::vector<std::pair<double, BranchSearch>> searches;
  nlohmann::json counts = nlohmann::json::array();
  bool near_boundary = false;
  for (double r : cfg.toy.r_values) {
    searches.emplace_back(r, find_branches(r, toy, std::nullopt, cfg.toy.grid_points));
    counts.push_back(searches.back().second.branches.size());
    near_boundary = near_boundary || searches.back().second.near_boundary;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_branches_csv(outputs["branches.csv"], searches);
  if (near_boundary) log << "toy: warning: a root lies within one grid cell of the search interval edge\n";
  write_metadata(outputs, "toy", cfg, wall,
                 {{"r_c", r_c}, {"r_mpv", toy_most_probable_regret(toy)}, {"branch_counts", counts}, {"near_boundary", near_boundary}});
  outputs.close();
  log << "toy: r_c = " << format_number(r_c) << '\n';
  return kExitOk;
}

inline int cmd_sweep_c(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  if (cfg.sweep.c_values.empty()) throw ConfigError("sweep.c_values must not be empty");
  std::vector<std::pair<double, double>> rows;
  for (double c : cfg.sweep.c_values) {
    ExperimentConfig local = cfg;
    local.spec.c = c;
    const BanditSpec spec = build_spec(local);
    if (spec.arms() < 2) throw ConfigError("sweep-c needs at least two arms");
    rows.emplace_back(c, 0.0);
  }
  OutputSet outputs(dir, {"rmpv_vs_c.csv", "metadata.json"});
  const auto start = std::chrono::steady_clock::now();
  for (auto& [c, r] : rows) {
    ExperimentConfig local = cfg;
    local.spec.c = c;
    r = most_probable_regret(build_spec(local));
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_rmpv_csv(outputs["rmpv_vs_c.csv"], rows);
  write_metadata(outputs, "sweep-c", cfg, wall, {{"rows", rows.size()}});
  outputs.close();
  log << "sweep-c: " << rows.size() << " rows\n";
  return kExitOk;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Softmax-UCB bandit regret: Monte Carlo and large-deviation theory"};
  app.require_subcommand(1);
  Overrides o;
  std::vector<std::pair<std::string, CLI::App*>> commands;
  for (const char* name : {"simulate", "rate", "trajectory", "toy", "sweep-c"}) {
    CLI::App* cmd = app.add_subcommand(name);
    add_common_options(*cmd, o);
    commands.emplace_back(name, cmd);
  }
  commands[0].second->description("Monte Carlo regret histogram and empirical action");
  commands[1].second->description("Rate function I(r) on a regret grid");
  commands[2].second->description("Dominant trajectory (theory) and conditioned averages (simulation)");
  commands[3].second->description("Two-arm, one-step system: branches and critical regret");
  commands[4].second->description("Most probable regret as a function of c");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, log, err) == 0 ? kExitOk : kExitConfig;
  }

  std::string command;
  for (const auto& [name, cmd] : commands)
    if (cmd->parsed()) command = name;

  try {
    const ExperimentConfig cfg = resolve_config(command, o);
    const std::filesystem::path dir(o.out);
    if (command == "simulate") return cmd_simulate(cfg, dir, log);
    if (command == "rate") return cmd_rate(cfg, dir, log);
    if (command == "trajectory") return cmd_trajectory(cfg, dir, log);
    if (command == "toy") return cmd_toy(cfg, dir, log);
    return cmd_sweep_c(cfg, dir, log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace banditpath::cli
