#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cymix/chain.hpp"
#include "cymix/coupling.hpp"
#include "cymix/lumped.hpp"
#include "cymix/rng.hpp"

// Monte Carlo measurement harness. Replications are embarrassingly parallel;
// each replication uses a stream derived from (master seed, replication
// index) and results are stored by index, so outputs are bit-identical for
// any thread count.

namespace cymix::mc {

struct ExperimentConfig {
  std::vector<int> n_list{100};
  double p = 0.5;
  int reps = 500;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: all available cores

  double horizon_n = 30.0;     // horizon multiplier in units of n
  double horizon_nlogn = 0.0;  // horizon multiplier in units of n ln n

  // Thresholds; r-style values are in units of 1/sqrt(n), rho is absolute.
  double r0 = 2.0;
  double r = 10.0;
  double rho = 0.25;
  double eps = 0.1;
  long distance = 8;  // start l1 count distance for the sync experiment
  int retry_cap = 100000;

  coupling::OverallSchedule schedule{};
  coupling::OverallThresholds overall_thresholds{};

  std::vector<double> r_grid{3.0, 4.0, 6.0, 8.0};  // excursion thresholds
  int time_samples = 65;
  std::string start = "mono";  // mono | stationary

  void validate() const {
    if (n_list.empty()) throw std::invalid_argument("ExperimentConfig: empty n list");
    for (int n : n_list)
      if (n < 3) throw std::invalid_argument("ExperimentConfig: n must be >= 3");
    if (!(p > 0 && p < 1)) throw std::invalid_argument("ExperimentConfig: p must be in (0,1)");
    if (reps < 1) throw std::invalid_argument("ExperimentConfig: reps must be >= 1");
    if (horizon_n < 0 || horizon_nlogn < 0 || horizon_n + horizon_nlogn <= 0)
      throw std::invalid_argument("ExperimentConfig: horizon must be positive");
    if (!(r0 > 0 && r > 0 && rho > 0 && eps > 0))
      throw std::invalid_argument("ExperimentConfig: thresholds must be positive");
    if (start != "mono" && start != "stationary")
      throw std::invalid_argument("ExperimentConfig: start must be mono or stationary");
  }

  long horizon(int n) const {
    return std::llround(horizon_n * n + horizon_nlogn * n * std::log(static_cast<double>(n)));
  }
};

/// Runs body(rep) for rep = 0..reps-1 on up to `threads` threads.
template <class Body>
void run_replications(int reps, int threads, Body&& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, reps));
  if (threads == 1) {
    for (int r = 0; r < reps; ++r) body(r);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= reps) return;
        try {
          body(r);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Mean / variance / standard error over replications (fixed order).
struct SummaryStat {
  double mean = 0.0;
  double variance = 0.0;
  double se = 0.0;
  long count = 0;

  static SummaryStat of(const std::vector<double>& xs) {
    SummaryStat s;
    s.count = static_cast<long>(xs.size());
    if (s.count == 0) return s;
    double acc = 0.0;
    for (double x : xs) acc += x;
    s.mean = acc / static_cast<double>(s.count);
    if (s.count > 1) {
      double sq = 0.0;
      for (double x : xs) sq += (x - s.mean) * (x - s.mean);
      s.variance = sq / static_cast<double>(s.count - 1);
      s.se = std::sqrt(s.variance / static_cast<double>(s.count));
    }
    return s;
  }
};

/// Success frequency with a normal-approximation confidence interval
/// (reported alongside the replication count).
struct Frequency {
  long successes = 0;
  long total = 0;

  double freq() const { return total > 0 ? static_cast<double>(successes) / total : 0.0; }
  double se() const {
    if (total == 0) return 0.0;
    const double f = freq();
    return std::sqrt(f * (1.0 - f) / static_cast<double>(total));
  }
  double ci_low() const { return std::max(0.0, freq() - 1.96 * se()); }
  double ci_high() const { return std::min(1.0, freq() + 1.96 * se()); }
};

namespace detail {

inline std::vector<long> sample_times(long horizon, int samples) {
  std::vector<long> times;
  samples = std::max(2, samples);
  for (int i = 0; i < samples; ++i)
    times.push_back(std::llround(static_cast<double>(horizon) * i / (samples - 1)));
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

inline CountVector balanced_counts(int n) {
  const std::int64_t a = n / 3;
  const std::int64_t b = (n + 1) / 3;
  return CountVector(n, a, b, n - a - b);
}

inline CountVector stationary_sample_counts(int n, Rng& rng) {
  CountVector cv;
  cv.n = n;
  for (int v = 0; v < n; ++v) ++cv.c[rng.next_below(3)];
  return cv;
}

/// Stationary sample conditioned on ||S_hat||_inf < limit (rejection).
inline CountVector conditioned_stationary_counts(int n, double limit, int retry_cap, Rng& rng) {
  for (int attempt = 0; attempt < retry_cap; ++attempt) {
    CountVector cv = stationary_sample_counts(n, rng);
    if (cv.centered_norms().linf < limit) return cv;
  }
  throw std::runtime_error("conditioned start: retry cap exhausted");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-chain experiments.
// ---------------------------------------------------------------------------

struct L2Trajectory {
  int n = 0;
  std::vector<long> times;
  std::vector<double> mc_mean;      // Monte Carlo mean of ||S_hat_t||_2^2
  std::vector<double> mc_se;
  std::vector<double> closed_form;  // exact expectation (p = 1/2)
};

/// Monte Carlo mean of ||S_hat_t||_2^2 against the closed form.
inline L2Trajectory measure_l2_trajectory(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.p != 0.5)
    throw std::invalid_argument("measure_l2_trajectory: closed form requires p = 1/2");
  const int n = cfg.n_list.front();
  const ChainParams params(n, cfg.p);
  const long horizon = cfg.horizon(n);
  L2Trajectory out;
  out.n = n;
  out.times = detail::sample_times(horizon, cfg.time_samples);
  const std::size_t nt = out.times.size();
  std::vector<std::vector<double>> values(nt, std::vector<double>(static_cast<std::size_t>(cfg.reps)));
  run_replications(cfg.reps, cfg.threads, [&](int rep) {
    Rng rng = replication_stream(cfg.seed, static_cast<std::uint64_t>(rep));
    CountVector cv = cfg.start == "mono" ? CountVector(n, n, 0, 0)
                                         : detail::stationary_sample_counts(n, rng);
    long t = 0;
    for (std::size_t i = 0; i < nt; ++i) {
      for (; t < out.times[i]; ++t) step_counts_in_place(cv, params, rng);
      values[i][static_cast<std::size_t>(rep)] = cv.centered_norms().l2sq;
    }
  });
  CountVector start_mono(n, n, 0, 0);
  for (std::size_t i = 0; i < nt; ++i) {
    const auto stat = SummaryStat::of(values[i]);
    out.mc_mean.push_back(stat.mean);
    out.mc_se.push_back(stat.se);
    out.closed_form.push_back(cfg.start == "mono"
                                  ? exact::closed_form_l2(start_mono, params, out.times[i])
                                  : 2.0 / (3.0 * n));
  }
  return out;
}

struct VarianceScaling {
  std::vector<int> n_list;
  std::vector<double> sup_n_var;  // sup over sampled t of n * Var(S_t)
  std::vector<double> se;         // normal-approximation SE of the sup entry
  std::vector<long> argmax_t;
};

/// sup_t n * Var(S_t), variance summed over the three components.
inline VarianceScaling measure_variance_scaling(const ExperimentConfig& cfg) {
  cfg.validate();
  VarianceScaling out;
  for (int n : cfg.n_list) {
    const ChainParams params(n, cfg.p);
    const long horizon = cfg.horizon(n);
    const auto times = detail::sample_times(horizon, cfg.time_samples);
    const std::size_t nt = times.size();
    std::vector<std::vector<std::array<double, 3>>> props(
        nt, std::vector<std::array<double, 3>>(static_cast<std::size_t>(cfg.reps)));
    run_replications(cfg.reps, cfg.threads, [&](int rep) {
      Rng rng = replication_stream(cfg.seed, static_cast<std::uint64_t>(rep));
      CountVector cv = cfg.start == "mono" ? CountVector(n, n, 0, 0)
                                           : detail::stationary_sample_counts(n, rng);
      long t = 0;
      for (std::size_t i = 0; i < nt; ++i) {
        for (; t < times[i]; ++t) step_counts_in_place(cv, params, rng);
        props[i][static_cast<std::size_t>(rep)] = cv.proportions();
      }
    });
    double best = 0.0, best_se = 0.0;
    long best_t = 0;
    for (std::size_t i = 0; i < nt; ++i) {
      double var_sum = 0.0;
      for (int k = 0; k < 3; ++k) {
        std::vector<double> comp(static_cast<std::size_t>(cfg.reps));
        for (int rep = 0; rep < cfg.reps; ++rep) comp[static_cast<std::size_t>(rep)] = props[i][static_cast<std::size_t>(rep)][static_cast<std::size_t>(k)];
        var_sum += SummaryStat::of(comp).variance;
      }
      const double scaled = n * var_sum;
      if (scaled >= best) {
        best = scaled;
        best_t = times[i];
        best_se = scaled * std::sqrt(2.0 / std::max(1, cfg.reps - 1));
      }
    }
    out.n_list.push_back(n);
    out.sup_n_var.push_back(best);
    out.se.push_back(best_se);
    out.argmax_t.push_back(best_t);
  }
  return out;
}

struct ExcursionExit {
  int n = 0;
  long horizon = 0;
  std::vector<double> r_grid;
  std::vector<Frequency> exit_freq;  // P(exit of S_n^{rho+} with rho = r/sqrt(n) by the horizon)
};

/// Frequency of any exit of S_n^{rho+} within gamma*n steps, for a grid of
/// r = rho * sqrt(n). One trajectory serves the whole grid, so the estimates
/// are monotone in r by construction.
inline ExcursionExit measure_excursion_exit(const ExperimentConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_list.front();
  const ChainParams params(n, cfg.p);
  ExcursionExit out;
  out.n = n;
  out.horizon = cfg.horizon(n);
  out.r_grid = cfg.r_grid;
  const double limit0 = cfg.r0 / std::sqrt(static_cast<double>(n));
  std::vector<double> peak(static_cast<std::size_t>(cfg.reps));
  run_replications(cfg.reps, cfg.threads, [&](int rep) {
    Rng rng = replication_stream(cfg.seed, static_cast<std::uint64_t>(rep));
    CountVector cv = detail::balanced_counts(n);
    if (!(cv.centered_norms().linf < limit0))
      throw std::runtime_error("measure_excursion_exit: start violates the r0 ball");
    const auto plus_max = [](const CountVector& c) {
      double m = -1.0;
      for (int k = 0; k < 3; ++k) m = std::max(m, c.proportion(k) - 1.0 / 3.0);
      return m;
    };
    double mx = plus_max(cv);
    for (long t = 0; t < out.horizon; ++t) {
      step_counts_in_place(cv, params, rng);
      mx = std::max(mx, plus_max(cv));
    }
    peak[static_cast<std::size_t>(rep)] = mx;
  });
  for (double r : cfg.r_grid) {
    Frequency f;
    f.total = cfg.reps;
    const double rho = r / std::sqrt(static_cast<double>(n));
    for (double mx : peak)
      if (mx >= rho) ++f.successes;
    out.exit_freq.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coupled-chain experiments.
// ---------------------------------------------------------------------------

struct T1Result {
  int n = 0;
  long horizon = 0;
  Frequency success;  // T1 < horizon and no T2(r) exit up to T1
  SummaryStat t1_stat;            // over uncensored runs
  long censored = 0;
  std::vector<long> t1;           // per replication, -1 when censored
  std::vector<long> t2;           // per replication, -1 when no exit observed
  std::vector<int> success_flag;  // per replication
};

/// Semi-coordinatewise coupling from two conditioned stationary starts:
/// frequency of {T1 < gamma*n with no r-ball exit before T1}.
inline T1Result measure_T1(const ExperimentConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_list.front();
  const ChainParams params(n, cfg.p);
  T1Result out;
  out.n = n;
  out.horizon = cfg.horizon(n);
  out.t1.assign(static_cast<std::size_t>(cfg.reps), -1);
  out.t2.assign(static_cast<std::size_t>(cfg.reps), -1);
  out.success_flag.assign(static_cast<std::size_t>(cfg.reps), 0);
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double start_limit = cfg.r0 / sqrt_n;
  const double exit_limit = cfg.r / sqrt_n;
  run_replications(cfg.reps, cfg.threads, [&](int rep) {
    Rng rng = replication_stream(cfg.seed, static_cast<std::uint64_t>(rep));
    coupling::CountPair pair(
        detail::conditioned_stationary_counts(n, start_limit, cfg.retry_cap, rng),
        detail::conditioned_stationary_counts(n, start_limit, cfg.retry_cap, rng));
    const auto l2max = [](const coupling::CountPair& pr) {
      return std::max(std::sqrt(pr.a.centered_norms().l2sq), std::sqrt(pr.b.centered_norms().l2sq));
    };
    long t1 = -1, t2 = -1;
    for (long t = 0; t <= out.horizon; ++t) {
      if (t2 < 0 && l2max(pair) >= exit_limit) t2 = t;
      if (pair.l1_count_distance() < 10) {
        t1 = t;
        break;
      }
      if (t == out.horizon) break;
      coupling::semi_coordinatewise_step(pair, rng);
    }
    out.t1[static_cast<std::size_t>(rep)] = t1;
    out.t2[static_cast<std::size_t>(rep)] = t2;
    out.success_flag[static_cast<std::size_t>(rep)] = (t1 >= 0 && t1 < out.horizon && t2 < 0) ? 1 : 0;
  });
  out.success.total = cfg.reps;
  std::vector<double> uncensored;
  for (int rep = 0; rep < cfg.reps; ++rep) {
    if (out.success_flag[static_cast<std::size_t>(rep)]) ++out.success.successes;
    if (out.t1[static_cast<std::size_t>(rep)] >= 0)
      uncensored.push_back(static_cast<double>(out.t1[static_cast<std::size_t>(rep)]));
    else
      ++out.censored;
  }
  out.t1_stat = SummaryStat::of(uncensored);
  return out;
}

struct SyncCoalescence {
  int n = 0;
  long horizon = 0;
  Frequency success;  // counts equal at the horizon
  SummaryStat coalesce_stat;
  long censored = 0;
  std::vector<long> coalesce_t;   // per replication, -1 when censored
  std::vector<int> success_flag;
};

/// Semi-synchronized coupling from starts at l1 distance `distance`/n:
/// frequency of count coalescence by the horizon. Coalescence is absorbing,
/// so runs stop early once the counts agree.
inline SyncCoalescence measure_sync_coalescence(const ExperimentConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_list.front();
  if (cfg.distance < 0 || cfg.distance % 2 != 0)
    throw std::invalid_argument("measure_sync_coalescence: distance must be even and >= 0");
  SyncCoalescence out;
  out.n = n;
  out.horizon = cfg.horizon(n);
  out.coalesce_t.assign(static_cast<std::size_t>(cfg.reps), -1);
  out.success_flag.assign(static_cast<std::size_t>(cfg.reps), 0);
  const CountVector base = detail::balanced_counts(n);
  const std::int64_t shift = cfg.distance / 2;
  if (base.c[1] < shift)
    throw std::invalid_argument("measure_sync_coalescence: distance too large for n");
  const CountVector moved(n, base.c[0] + shift, base.c[1] - shift, base.c[2]);
  run_replications(cfg.reps, cfg.threads, [&](int rep) {
    Rng rng = replication_stream(cfg.seed, static_cast<std::uint64_t>(rep));
    coupling::CountPair pair(base, moved);
    long hit = pair.l1_count_distance() == 0 ? 0 : -1;
    for (long t = 0; t < out.horizon && hit < 0; ++t) {
      coupling::semi_sync_step(pair, rng);
      if (pair.l1_count_distance() == 0) hit = t + 1;
    }
    out.coalesce_t[static_cast<std::size_t>(rep)] = hit;
    out.success_flag[static_cast<std::size_t>(rep)] = hit >= 0 ? 1 : 0;
  });
  out.success.total = cfg.reps;
  std::vector<double> uncensored;
  for (int rep = 0; rep < cfg.reps; ++rep) {
    if (out.success_flag[static_cast<std::size_t>(rep)]) ++out.success.successes;
    if (out.coalesce_t[static_cast<std::size_t>(rep)] >= 0)
      uncensored.push_back(static_cast<double>(out.coalesce_t[static_cast<std::size_t>(rep)]));
    else
      ++out.censored;
  }
  out.coalesce_stat = SummaryStat::of(uncensored);
  return out;
}

struct BasketCoalescence {
  int n = 0;
  long horizon = 0;
  Frequency success;        // tau2 <= horizon
  Frequency tau_star_exit;  // exit of the rho ball within the horizon
  SummaryStat tau2_stat;
  long censored = 0;
  std::vector<long> tau1;      // per replication, -1 when censored
  std::vector<long> tau2;
  std::vector<long> tau_star;  // -1 when no exit observed
  std::vector<int> success_flag;
};

/// Basketwise coupling from equal-count starts one cross-basket swap apart:
/// distribution of the full basket coalescence time tau2, plus the
/// rho-ball exit time tau_star reported separately.
inline BasketCoalescence measure_basket_coalescence(const ExperimentConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_list.front();
  if (n < 9) throw std::invalid_argument("measure_basket_coalescence: n must be >= 9");
  if (cfg.p != 0.5)
    throw std::invalid_argument("measure_basket_coalescence: couplings require p = 1/2");
  const BasketPartition part = BasketPartition::equal_thirds(n);
  BasketCoalescence out;
  out.n = n;
  out.horizon = cfg.horizon(n);
  out.tau1.assign(static_cast<std::size_t>(cfg.reps), -1);
  out.tau2.assign(static_cast<std::size_t>(cfg.reps), -1);
  out.tau_star.assign(static_cast<std::size_t>(cfg.reps), -1);
  out.success_flag.assign(static_cast<std::size_t>(cfg.reps), 0);

  // Round-robin colors inside each basket, then one cross-basket swap of two
  // vertices with different colors.
  std::vector<Color> colors(static_cast<std::size_t>(n));
  {
    std::array<int, 3> seen{0, 0, 0};
    for (int v = 0; v < n; ++v) {
      const int m = part.assignment[static_cast<std::size_t>(v)];
      colors[static_cast<std::size_t>(v)] = static_cast<Color>(seen[static_cast<std::size_t>(m)] % 3);
      ++seen[static_cast<std::size_t>(m)];
    }
  }
  const Configuration base{std::move(colors)};
  Configuration swapped = base;
  {
    int va = -1, vb = -1;
    for (int v = 0; v < n && va < 0; ++v)
      if (part.assignment[static_cast<std::size_t>(v)] == 0 && base.color(v) == 0) va = v;
    for (int v = 0; v < n && vb < 0; ++v)
      if (part.assignment[static_cast<std::size_t>(v)] == 1 && base.color(v) == 1) vb = v;
    if (va < 0 || vb < 0) throw std::logic_error("measure_basket_coalescence: swap setup failed");
    swapped.set_color(va, 1);
    swapped.set_color(vb, 0);
  }

  const double rho = cfg.rho;
  run_replications(cfg.reps, cfg.threads, [&](int rep) {
    Rng rng = replication_stream(cfg.seed, static_cast<std::uint64_t>(rep));
    coupling::ConfigPair pair(base, swapped);
    auto bca = basket_counts(pair.a, part);
    auto bcb = basket_counts(pair.b, part);
    int active = coupling::active_basket(bca, bcb);
    long tau1 = active >= 1 ? 0 : -1;
    long tau2 = active >= 3 ? 0 : -1;
    long tau_star = -1;
    const auto in_ball = [&](const BasketCounts& bc) {
      return coupling::detail::matrix_in_ball(bc, part.sizes, rho);
    };
    if (!in_ball(bca) || !in_ball(bcb)) tau_star = 0;
    for (long t = 0; t < out.horizon; ++t) {
      if (tau2 >= 0 && tau_star >= 0) break;
      coupling::basketwise_step(pair, part, active, rng);
      bca = basket_counts(pair.a, part);
      bcb = basket_counts(pair.b, part);
      active = coupling::active_basket(bca, bcb);
      if (tau1 < 0 && active >= 1) tau1 = t + 1;
      if (tau2 < 0 && active >= 3) tau2 = t + 1;
      if (tau_star < 0 && (!in_ball(bca) || !in_ball(bcb))) tau_star = t + 1;
    }
    out.tau1[static_cast<std::size_t>(rep)] = tau1;
    out.tau2[static_cast<std::size_t>(rep)] = tau2;
    out.tau_star[static_cast<std::size_t>(rep)] = tau_star;
    out.success_flag[static_cast<std::size_t>(rep)] = tau2 >= 0 ? 1 : 0;
  });
  out.success.total = cfg.reps;
  out.tau_star_exit.total = cfg.reps;
  std::vector<double> uncensored;
  for (int rep = 0; rep < cfg.reps; ++rep) {
    if (out.success_flag[static_cast<std::size_t>(rep)]) ++out.success.successes;
    if (out.tau_star[static_cast<std::size_t>(rep)] >= 0) ++out.tau_star_exit.successes;
    if (out.tau2[static_cast<std::size_t>(rep)] >= 0)
      uncensored.push_back(static_cast<double>(out.tau2[static_cast<std::size_t>(rep)]));
    else
      ++out.censored;
  }
  out.tau2_stat = SummaryStat::of(uncensored);
  return out;
}

struct OverallResult {
  int n = 0;
  coupling::PhaseTimes times;
  Frequency success;  // basket matrices equal at t5
  std::array<long, 8> failed_step_counts{};  // failures attributed to their first failed step
  std::vector<coupling::OverallRunRecord> runs;  // per replication
};

/// Overall coupling success rate with per-phase failure attribution.
inline OverallResult measure_overall(const ExperimentConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_list.front();
  const ChainParams params(n, cfg.p);
  OverallResult out;
  out.n = n;
  out.times = coupling::phase_times(cfg.schedule, n, cfg.p);
  out.runs.resize(static_cast<std::size_t>(cfg.reps));
  run_replications(cfg.reps, cfg.threads, [&](int rep) {
    Rng rng = replication_stream(cfg.seed, static_cast<std::uint64_t>(rep));
    out.runs[static_cast<std::size_t>(rep)] = coupling::overall_coupling_run(
        Configuration::monochromatic(n), cfg.schedule, params, cfg.overall_thresholds, rng);
  });
  out.success.total = cfg.reps;
  for (const auto& run : out.runs) {
    if (run.basket_coalesced_t5)
      ++out.success.successes;
    else
      ++out.failed_step_counts[static_cast<std::size_t>(run.first_failed_step)];
  }
  return out;
}

}  // namespace cymix::mc
