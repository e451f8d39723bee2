#pragma once

// Experiment configuration (JSON, fail-closed) and CSV emission with
// round-trip number formatting.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "banditpath/bandit_core.hpp"
#include "banditpath/instanton.hpp"
#include "banditpath/mc_sim.hpp"
#include "banditpath/saddle_equations.hpp"
#include "banditpath/toy_exact.hpp"

namespace banditpath {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpecConfig {
  std::vector<double> mu{1.0, 2.0, 3.0};
  std::vector<double> sigma_tilde{1.0, 1.0, 1.0};
  double gamma = 0.04;
  double beta = 10.0;
  double c = 0.4;
  int horizon = 20;

  BanditSpec build() const { return BanditSpec(mu, sigma_tilde, gamma, beta, c, horizon); }
};

struct SimulateConfig {
  std::uint64_t trials = 1000000;
  std::uint64_t master_seed = 0;
  double bin_width = 0.5;
  double origin = 0.0;
  std::vector<std::pair<double, double>> windows;
};

struct RateConfig {
  double r_min = -15.0;
  double r_max = 45.0;
  double r_step = 1.0;
  int multistarts = 8;
  std::uint64_t seed = 0;
  Variant variant = Variant::simplified;

  std::vector<double> grid() const {
    std::vector<double> out;
    const auto steps = static_cast<long long>(std::floor((r_max - r_min) / r_step + 1e-9));
    for (long long i = 0; i <= steps; ++i) out.push_back(r_min + static_cast<double>(i) * r_step);
    return out;
  }
};

struct TrajectoryConfig {
  std::pair<double, double> r_window{6.0, 6.5};
  std::uint64_t trials = 1000000;
};

struct ToyConfig {
  std::vector<double> mu{1.0, 2.0};
  double gamma = 0.16;
  double beta = 10.0;
  std::vector<double> r_values{1.0, 3.0};
  std::pair<double, double> bracket{1.0, 3.0};
  int grid_points = 10000;

  ToySpec build() const {
    if (mu.size() != 2) throw ConfigError("toy.mu must have exactly two entries");
    return ToySpec(mu[0], mu[1], gamma, beta);
  }
};

struct SweepConfig {
  std::vector<double> c_values;

  SweepConfig() {
    for (int i = 0; i <= 20; ++i) c_values.push_back(0.05 * i);
  }
};

struct ExperimentConfig {
  SpecConfig spec;
  SimulateConfig simulate;
  RateConfig rate;
  TrajectoryConfig trajectory;
  ToyConfig toy;
  SweepConfig sweep;
  unsigned threads = 0;  // 0: environment or hardware
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_pair(const json& j, const char* key, std::pair<double, double>& out, const std::string& where) {
  if (!j.contains(key)) return;
  std::vector<double> v;
  read(j, key, v, where);
  if (v.size() != 2) throw ConfigError(where + "." + key + " must have two entries");
  out = {v[0], v[1]};
}

inline json pair_json(const std::pair<double, double>& p) { return json::array({p.first, p.second}); }

}  // namespace detail

/// Parses a config document. A metadata.json written by a previous run is
/// accepted too; its embedded "config" object is used.
inline ExperimentConfig config_from_json(const nlohmann::json& doc) {
  using detail::read;
  const nlohmann::json& j = (doc.is_object() && doc.contains("config") && doc.contains("command")) ? doc.at("config") : doc;
  detail::reject_unknown(j, {"spec", "simulate", "rate", "trajectory", "toy", "sweep", "threads"}, "config");
  ExperimentConfig cfg;
  read(j, "threads", cfg.threads, "config");

  if (j.contains("spec")) {
    const auto& s = j.at("spec");
    detail::reject_unknown(s, {"mu", "sigma_tilde", "gamma", "beta", "c", "horizon"}, "spec");
    read(s, "mu", cfg.spec.mu, "spec");
    read(s, "sigma_tilde", cfg.spec.sigma_tilde, "spec");
    read(s, "gamma", cfg.spec.gamma, "spec");
    read(s, "beta", cfg.spec.beta, "spec");
    read(s, "c", cfg.spec.c, "spec");
    read(s, "horizon", cfg.spec.horizon, "spec");
  }
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    detail::reject_unknown(s, {"trials", "master_seed", "bin_width", "origin", "windows"}, "simulate");
    read(s, "trials", cfg.simulate.trials, "simulate");
    read(s, "master_seed", cfg.simulate.master_seed, "simulate");
    read(s, "bin_width", cfg.simulate.bin_width, "simulate");
    read(s, "origin", cfg.simulate.origin, "simulate");
    if (s.contains("windows")) {
      std::vector<std::vector<double>> w;
      read(s, "windows", w, "simulate");
      cfg.simulate.windows.clear();
      for (const auto& pair : w) {
        if (pair.size() != 2) throw ConfigError("simulate.windows entries must have two values");
        cfg.simulate.windows.emplace_back(pair[0], pair[1]);
      }
    }
  }
  if (j.contains("rate")) {
    const auto& s = j.at("rate");
    detail::reject_unknown(s, {"r_min", "r_max", "r_step", "multistarts", "seed", "variant"}, "rate");
    read(s, "r_min", cfg.rate.r_min, "rate");
    read(s, "r_max", cfg.rate.r_max, "rate");
    read(s, "r_step", cfg.rate.r_step, "rate");
    read(s, "multistarts", cfg.rate.multistarts, "rate");
    read(s, "seed", cfg.rate.seed, "rate");
    if (s.contains("variant")) {
      std::string name;
      read(s, "variant", name, "rate");
      try {
        cfg.rate.variant = parse_variant(name);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("rate.variant: ") + e.what());
      }
    }
  }
  if (j.contains("trajectory")) {
    const auto& s = j.at("trajectory");
    detail::reject_unknown(s, {"r_window", "trials"}, "trajectory");
    detail::read_pair(s, "r_window", cfg.trajectory.r_window, "trajectory");
    read(s, "trials", cfg.trajectory.trials, "trajectory");
  }
  if (j.contains("toy")) {
    const auto& s = j.at("toy");
    detail::reject_unknown(s, {"mu", "gamma", "beta", "r_values", "bracket", "grid_points"}, "toy");
    read(s, "mu", cfg.toy.mu, "toy");
    read(s, "gamma", cfg.toy.gamma, "toy");
    read(s, "beta", cfg.toy.beta, "toy");
    read(s, "r_values", cfg.toy.r_values, "toy");
    detail::read_pair(s, "bracket", cfg.toy.bracket, "toy");
    read(s, "grid_points", cfg.toy.grid_points, "toy");
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    detail::reject_unknown(s, {"c_values"}, "sweep");
    read(s, "c_values", cfg.sweep.c_values, "sweep");
  }
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  using nlohmann::json;
  json windows = json::array();
  for (const auto& w : cfg.simulate.windows) windows.push_back(detail::pair_json(w));
  return json{
      {"threads", cfg.threads},
      {"spec",
       {{"mu", cfg.spec.mu},
        {"sigma_tilde", cfg.spec.sigma_tilde},
        {"gamma", cfg.spec.gamma},
        {"beta", cfg.spec.beta},
        {"c", cfg.spec.c},
        {"horizon", cfg.spec.horizon}}},
      {"simulate",
       {{"trials", cfg.simulate.trials},
        {"master_seed", cfg.simulate.master_seed},
        {"bin_width", cfg.simulate.bin_width},
        {"origin", cfg.simulate.origin},
        {"windows", windows}}},
      {"rate",
       {{"r_min", cfg.rate.r_min},
        {"r_max", cfg.rate.r_max},
        {"r_step", cfg.rate.r_step},
        {"multistarts", cfg.rate.multistarts},
        {"seed", cfg.rate.seed},
        {"variant", to_string(cfg.rate.variant)}}},
      {"trajectory", {{"r_window", detail::pair_json(cfg.trajectory.r_window)}, {"trials", cfg.trajectory.trials}}},
      {"toy",
       {{"mu", cfg.toy.mu},
        {"gamma", cfg.toy.gamma},
        {"beta", cfg.toy.beta},
        {"r_values", cfg.toy.r_values},
        {"bracket", detail::pair_json(cfg.toy.bracket)},
        {"grid_points", cfg.toy.grid_points}}},
      {"sweep", {{"c_values", cfg.sweep.c_values}}},
  };
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest decimal that parses back to the same double. Missing values
/// print as an empty field.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::uint64_t x) { return std::to_string(x); }
inline std::string format_number(int x) { return std::to_string(x); }

namespace csv {

inline constexpr const char* histogram_header = "r,count,phi_sim,gamma_phi_sim";
inline constexpr const char* trajectory_sim_header = "t,arm,n_mean,n_std,muhat_mean,muhat_std,matched";
inline constexpr const char* rate_curve_header = "r,action,rate,ir_hat,n_solutions,residual,converged";
inline constexpr const char* trajectory_theory_header = "t,arm,n,muhat,is_hat,in_hat";
inline constexpr const char* branches_header = "r,branch_id,delta_s0,ir_hat,action";
inline constexpr const char* rmpv_header = "c,r_mpv";

}  // namespace csv

inline void write_histogram_csv(std::ostream& out, const RegretHistogram& hist, double gamma) {
  out << csv::histogram_header << '\n';
  if (hist.binned() == 0) return;
  for (const auto& p : empirical_action(hist))
    out << format_number(p.r) << ',' << p.count << ',' << format_number(p.phi) << ',' << format_number(gamma * p.phi)
        << '\n';
}

/// Arms are numbered from 1. Unmatched windows keep the (t, arm) rows with
/// empty statistics.
inline void write_trajectory_sim_csv(std::ostream& out, const ConditionedStats& stats) {
  out << csv::trajectory_sim_header << '\n';
  for (int t = 0; t <= stats.horizon(); ++t)
    for (int k = 0; k < stats.arms(); ++k) {
      out << t << ',' << k + 1 << ',';
      if (stats.empty()) {
        out << ",,,,0\n";
        continue;
      }
      out << format_number(stats.n_mean(k, t)) << ',' << format_number(stats.n_std(k, t)) << ','
          << format_number(stats.muhat_mean(k, t)) << ',' << format_number(stats.muhat_std(k, t)) << ','
          << stats.matched() << '\n';
    }
}

inline void write_rate_curve_csv(std::ostream& out, const RateCurve& curve) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  out << csv::rate_curve_header << '\n';
  for (const auto& p : curve.points) {
    out << format_number(p.r) << ',' << format_number(p.action) << ',' << format_number(p.rate) << ','
        << format_number(p.minimal ? p.minimal->ir_hat : nan) << ',' << p.n_solutions << ','
        << format_number(p.minimal ? p.minimal->residual : nan) << ',' << (p.converged ? 1 : 0) << '\n';
  }
}

inline void write_trajectory_theory_csv(std::ostream& out, const std::optional<SaddleField>& y) {
  out << csv::trajectory_theory_header << '\n';
  if (!y) return;
  for (int t = 0; t <= y->horizon(); ++t)
    for (int k = 0; k < y->arms(); ++k)
      out << t << ',' << k + 1 << ',' << format_number(y->n(k, t)) << ',' << format_number(y->s(k, t) / y->n(k, t))
          << ',' << format_number(y->is_hat(k, t)) << ',' << format_number(y->in_hat(k, t)) << '\n';
}

inline void write_branches_csv(std::ostream& out, const std::vector<std::pair<double, BranchSearch>>& searches) {
  out << csv::branches_header << '\n';
  for (const auto& [r, search] : searches)
    for (const auto& b : search.branches)
      out << format_number(r) << ',' << b.branch_id << ',' << format_number(b.delta_s0) << ','
          << format_number(b.ir_hat) << ',' << format_number(b.action) << '\n';
}

inline void write_rmpv_csv(std::ostream& out, const std::vector<std::pair<double, double>>& rows) {
  out << csv::rmpv_header << '\n';
  for (const auto& [c, r] : rows) out << format_number(c) << ',' << format_number(r) << '\n';
}

/// Output files opened (and truncated) up front, so an unwritable
/// destination fails before any computation.
class OutputSet {
 public:
  OutputSet(const std::filesystem::path& dir, const std::vector<std::string>& names) : dir_(dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    for (const auto& name : names) {
      auto& stream = streams_.emplace_back(std::make_unique<std::ofstream>(dir / name, std::ios::binary | std::ios::trunc));
      if (!*stream) throw IoError("cannot open " + (dir / name).string() + " for writing");
      names_.push_back(name);
    }
  }

  std::ofstream& operator[](const std::string& name) {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return *streams_[i];
    throw std::logic_error("OutputSet: no file named " + name);
  }

  void close() {
    for (std::size_t i = 0; i < streams_.size(); ++i) {
      streams_[i]->flush();
      if (!*streams_[i]) throw IoError("write failed for " + (dir_ / names_[i]).string());
      streams_[i]->close();
    }
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<std::ofstream>> streams_;
};

}  // namespace banditpath
