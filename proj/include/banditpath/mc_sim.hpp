#pragma once

// Monte Carlo engine for the softmax-UCB bandit. Episodes are never stored:
// the ensemble streams each one into a regret histogram and, optionally,
// per-window running moments of the pull counts and empirical means.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "banditpath/bandit_core.hpp"
#include "banditpath/philox.hpp"

namespace banditpath {

/// One realized episode. Column t of n and s holds the state after step t;
/// column 0 is the warm-up.
struct Trajectory {
  std::vector<int> actions;        // a^1..a^T (0-based arm index)
  std::vector<double> rewards;     // x^t_{a^t}, t = 1..T
  Eigen::VectorXd warmup_rewards;  // x_k^0
  Eigen::MatrixXd n;               // K x (T+1)
  Eigen::MatrixXd s;               // K x (T+1)
  double regret = 0.0;
  double total_reward = 0.0;
};

namespace detail {

/// Reusable buffers for the hot loop; n and s are column-major K x (T+1).
struct EpisodeWorkspace {
  explicit EpisodeWorkspace(const BanditSpec& spec)
      : arms(spec.arms()),
        horizon(spec.horizon),
        n(static_cast<std::size_t>(arms) * (horizon + 1)),
        s(n.size()),
        logits(arms),
        probs(arms),
        noise_scale(arms),
        bonus(horizon + 1) {
    for (int k = 0; k < arms; ++k) noise_scale[k] = std::sqrt(spec.variance(k));
    // log(K + t) is only defined for K + t >= 2; a single-arm spec never
    // consults it because the only arm is always pulled.
    for (int t = 0; t <= horizon; ++t)
      bonus[t] = arms + t >= 2 ? spec.c * std::sqrt(std::log(static_cast<double>(arms + t))) : 0.0;
  }

  double& n_at(int k, int t) { return n[static_cast<std::size_t>(t) * arms + k]; }
  double& s_at(int k, int t) { return s[static_cast<std::size_t>(t) * arms + k]; }

  int arms;
  int horizon;
  std::vector<double> n;
  std::vector<double> s;
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<double> noise_scale;
  std::vector<double> bonus;
};

/// Runs one episode into the workspace and returns its regret. Draw order:
/// K warm-up normals, then per step one uniform (action) and one normal
/// (reward). The optional sinks receive the chosen arm and reward per step.
inline double simulate_episode(const BanditSpec& spec, EpisodeStream& stream, EpisodeWorkspace& ws,
                               std::vector<int>* actions = nullptr, std::vector<double>* rewards = nullptr) {
  const int K = ws.arms;
  const int T = ws.horizon;
  for (int k = 0; k < K; ++k) {
    ws.n_at(k, 0) = 1.0;
    ws.s_at(k, 0) = spec.mu[k] + ws.noise_scale[k] * stream.normal();
  }
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) {
      const double nk = ws.n_at(k, t);
      ws.logits[k] = spec.beta * (ws.s_at(k, t) / nk + ws.bonus[t] / std::sqrt(nk));
    }
    softmax_into(ws.logits, ws.probs);
    const double u = stream.uniform();
    // Rounding can leave the cumulative sum a hair below u; fall back to the
    // last arm that actually carries probability.
    int chosen = K - 1;
    while (chosen > 0 && ws.probs[chosen] == 0.0) --chosen;
    double cumulative = 0.0;
    for (int k = 0; k < K; ++k) {
      cumulative += ws.probs[k];
      if (u <= cumulative) {
        chosen = k;
        break;
      }
    }
    const double x = spec.mu[chosen] + ws.noise_scale[chosen] * stream.normal();
    for (int k = 0; k < K; ++k) {
      ws.n_at(k, t + 1) = ws.n_at(k, t) + (k == chosen ? 1.0 : 0.0);
      ws.s_at(k, t + 1) = ws.s_at(k, t) + (k == chosen ? x : 0.0);
    }
    if (actions) actions->push_back(chosen);
    if (rewards) rewards->push_back(x);
  }
  double total = 0.0;
  for (int k = 0; k < K; ++k) total += ws.s_at(k, T);
  return spec.total_pulls() * spec.mu_star - total;
}

}  // namespace detail

inline Trajectory run_episode(const BanditSpec& spec, EpisodeStream& stream) {
  detail::EpisodeWorkspace ws(spec);
  Trajectory out;
  out.actions.reserve(spec.horizon);
  out.rewards.reserve(spec.horizon);
  out.regret = detail::simulate_episode(spec, stream, ws, &out.actions, &out.rewards);
  const int K = spec.arms();
  const int T = spec.horizon;
  out.n.resize(K, T + 1);
  out.s.resize(K, T + 1);
  out.warmup_rewards.resize(K);
  for (int t = 0; t <= T; ++t)
    for (int k = 0; k < K; ++k) {
      out.n(k, t) = ws.n_at(k, t);
      out.s(k, t) = ws.s_at(k, t);
    }
  for (int k = 0; k < K; ++k) out.warmup_rewards[k] = out.s(k, 0);
  out.total_reward = out.s.col(T).sum();
  return out;
}

inline Trajectory run_episode(const BanditSpec& spec, std::uint64_t master_seed, std::uint64_t episode) {
  EpisodeStream stream(master_seed, episode);
  return run_episode(spec, stream);
}

/// Fixed-width regret histogram. Bin i covers [origin + i w, origin + (i+1) w).
class RegretHistogram {
 public:
  explicit RegretHistogram(double bin_width = 0.5, double origin = 0.0,
                           double lower = -std::numeric_limits<double>::infinity(),
                           double upper = std::numeric_limits<double>::infinity())
      : bin_width_(bin_width), origin_(origin), lower_(lower), upper_(upper) {
    if (!(bin_width > 0.0) || !std::isfinite(bin_width))
      throw std::invalid_argument("RegretHistogram: bin width must be positive");
    if (!(lower < upper)) throw std::invalid_argument("RegretHistogram: empty range");
  }

  void add(double r) {
    ++trials_;
    if (std::isnan(r) || r >= upper_) {
      ++overflow_;
    } else if (r < lower_) {
      ++underflow_;
    } else {
      ++counts_[bin_of(r)];
    }
  }

  void merge(const RegretHistogram& other) {
    if (other.bin_width_ != bin_width_ || other.origin_ != origin_ || other.lower_ != lower_ ||
        other.upper_ != upper_)
      throw std::invalid_argument("RegretHistogram: cannot merge histograms with different geometry");
    for (const auto& [bin, count] : other.counts_) counts_[bin] += count;
    trials_ += other.trials_;
    underflow_ += other.underflow_;
    overflow_ += other.overflow_;
  }

  std::int64_t bin_of(double r) const {
    return static_cast<std::int64_t>(std::floor((r - origin_) / bin_width_));
  }
  double bin_left(std::int64_t bin) const { return origin_ + static_cast<double>(bin) * bin_width_; }
  double bin_center(std::int64_t bin) const { return bin_left(bin) + 0.5 * bin_width_; }

  double bin_width() const { return bin_width_; }
  double origin() const { return origin_; }
  std::uint64_t trials() const { return trials_; }
  std::uint64_t underflow() const { return underflow_; }
  std::uint64_t overflow() const { return overflow_; }
  const std::map<std::int64_t, std::uint64_t>& counts() const { return counts_; }

  std::uint64_t binned() const {
    std::uint64_t total = 0;
    for (const auto& [bin, count] : counts_) total += count;
    return total;
  }

  friend bool operator==(const RegretHistogram&, const RegretHistogram&) = default;

 private:
  double bin_width_;
  double origin_;
  double lower_;
  double upper_;
  std::map<std::int64_t, std::uint64_t> counts_;
  std::uint64_t trials_ = 0;
  std::uint64_t underflow_ = 0;
  std::uint64_t overflow_ = 0;
};

/// Streaming mean / variance (Welford, with Chan's pairwise merge).
struct RunningMoments {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const RunningMoments& other) {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count);
    const double nb = static_cast<double>(other.count);
    const double delta = other.mean - mean;
    const double total = na + nb;
    mean += delta * nb / total;
    m2 += other.m2 + delta * delta * na * nb / total;
    count += other.count;
  }

  /// Sample standard deviation; 0 with fewer than two samples.
  double stddev() const { return count > 1 ? std::sqrt(std::max(0.0, m2 / static_cast<double>(count - 1))) : 0.0; }
};

struct RegretWindow {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double r) const { return r >= lo && r < hi; }
};

/// Per-(arm, t) moments of n_k^t and s_k^t / n_k^t over episodes whose
/// regret landed in the window.
class ConditionedStats {
 public:
  ConditionedStats() = default;
  ConditionedStats(RegretWindow window, int arms, int horizon)
      : window_(window),
        arms_(arms),
        horizon_(horizon),
        pulls_(static_cast<std::size_t>(arms) * (horizon + 1)),
        means_(pulls_.size()) {}

  void add(detail::EpisodeWorkspace& ws) {
    ++matched_;
    for (int t = 0; t <= horizon_; ++t)
      for (int k = 0; k < arms_; ++k) {
        const double n = ws.n_at(k, t);
        pulls_[index(k, t)].add(n);
        means_[index(k, t)].add(ws.s_at(k, t) / n);
      }
  }

  void add(const Trajectory& traj) {
    ++matched_;
    for (int t = 0; t <= horizon_; ++t)
      for (int k = 0; k < arms_; ++k) {
        pulls_[index(k, t)].add(traj.n(k, t));
        means_[index(k, t)].add(traj.s(k, t) / traj.n(k, t));
      }
  }

  void merge(const ConditionedStats& other) {
    if (other.arms_ != arms_ || other.horizon_ != horizon_)
      throw std::invalid_argument("ConditionedStats: shape mismatch");
    matched_ += other.matched_;
    for (std::size_t i = 0; i < pulls_.size(); ++i) {
      pulls_[i].merge(other.pulls_[i]);
      means_[i].merge(other.means_[i]);
    }
  }

  const RegretWindow& window() const { return window_; }
  int arms() const { return arms_; }
  int horizon() const { return horizon_; }
  std::uint64_t matched() const { return matched_; }
  bool empty() const { return matched_ == 0; }

  double n_mean(int k, int t) const { return pulls_[index(k, t)].mean; }
  double n_std(int k, int t) const { return pulls_[index(k, t)].stddev(); }
  double muhat_mean(int k, int t) const { return means_[index(k, t)].mean; }
  double muhat_std(int k, int t) const { return means_[index(k, t)].stddev(); }

 private:
  std::size_t index(int k, int t) const { return static_cast<std::size_t>(t) * arms_ + k; }

  RegretWindow window_{};
  int arms_ = 0;
  int horizon_ = 0;
  std::uint64_t matched_ = 0;
  std::vector<RunningMoments> pulls_;
  std::vector<RunningMoments> means_;
};

struct EnsembleOptions {
  std::uint64_t trials = 1;
  std::uint64_t master_seed = 0;
  double bin_width = 0.5;
  double origin = 0.0;
  std::vector<RegretWindow> windows;
  unsigned threads = 0;  // 0: hardware concurrency
  // Part of the reproducibility contract: floating-point reductions are
  // grouped by chunk, never by worker.
  std::uint64_t chunk_size = 1u << 14;
};

struct EnsembleResult {
  RegretHistogram histogram;
  std::vector<ConditionedStats> conditioned;
};

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

inline EnsembleResult run_ensemble(const BanditSpec& spec, const EnsembleOptions& options) {
  if (options.trials < 1) throw std::invalid_argument("run_ensemble: trials must be >= 1");
  if (options.chunk_size < 1) throw std::invalid_argument("run_ensemble: chunk size must be >= 1");
  for (const auto& w : options.windows)
    if (!(w.lo < w.hi)) throw std::invalid_argument("run_ensemble: empty regret window");

  const std::uint64_t chunks = (options.trials + options.chunk_size - 1) / options.chunk_size;
  struct ChunkResult {
    RegretHistogram histogram;
    std::vector<ConditionedStats> conditioned;
  };
  auto make_empty = [&] {
    ChunkResult res{RegretHistogram(options.bin_width, options.origin), {}};
    for (const auto& w : options.windows) res.conditioned.emplace_back(w, spec.arms(), spec.horizon);
    return res;
  };

  std::vector<ChunkResult> partials(chunks, make_empty());
  std::atomic<std::uint64_t> next_chunk{0};

  auto worker = [&] {
    detail::EpisodeWorkspace ws(spec);
    for (;;) {
      const std::uint64_t chunk = next_chunk.fetch_add(1);
      if (chunk >= chunks) return;
      ChunkResult& res = partials[chunk];
      const std::uint64_t begin = chunk * options.chunk_size;
      const std::uint64_t end = std::min(options.trials, begin + options.chunk_size);
      for (std::uint64_t episode = begin; episode < end; ++episode) {
        EpisodeStream stream(options.master_seed, episode);
        const double r = detail::simulate_episode(spec, stream, ws);
        res.histogram.add(r);
        for (auto& stats : res.conditioned)
          if (stats.window().contains(r)) stats.add(ws);
      }
    }
  };

  const unsigned threads =
      static_cast<unsigned>(std::min<std::uint64_t>(resolve_threads(options.threads), chunks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  EnsembleResult out{RegretHistogram(options.bin_width, options.origin), {}};
  for (const auto& w : options.windows) out.conditioned.emplace_back(w, spec.arms(), spec.horizon);
  for (const auto& part : partials) {
    out.histogram.merge(part.histogram);
    for (std::size_t i = 0; i < out.conditioned.size(); ++i) out.conditioned[i].merge(part.conditioned[i]);
  }
  return out;
}

inline ConditionedStats conditioned_trajectory_stats(const BanditSpec& spec, std::uint64_t trials,
                                                     std::uint64_t master_seed, RegretWindow window,
                                                     unsigned threads = 0) {
  EnsembleOptions options;
  options.trials = trials;
  options.master_seed = master_seed;
  options.windows = {window};
  options.threads = threads;
  return run_ensemble(spec, options).conditioned.front();
}

struct ActionPoint {
  double r;             // bin center
  std::uint64_t count;  // episodes in the bin
  double phi;           // -log P(r) shifted to minimum zero
};

/// Phi_sim(r) = -log P(r) - min_r[-log P(r)] over the non-empty bins.
inline std::vector<ActionPoint> empirical_action(const RegretHistogram& hist) {
  if (hist.trials() < 1) throw std::invalid_argument("empirical_action: histogram has no trials");
  std::vector<ActionPoint> curve;
  std::uint64_t peak = 0;
  for (const auto& [bin, count] : hist.counts()) {
    if (count == 0) continue;
    curve.push_back({hist.bin_center(bin), count, 0.0});
    peak = std::max(peak, count);
  }
  if (curve.empty()) throw std::runtime_error("empirical_action: every bin is empty");
  // Densities share the factor 1 / (trials * width), which the shift removes.
  const double log_peak = std::log(static_cast<double>(peak));
  for (auto& point : curve) point.phi = log_peak - std::log(static_cast<double>(point.count));
  return curve;
}

}  // namespace banditpath
