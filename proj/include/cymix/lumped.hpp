#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cymix/chain.hpp"

// Exact distribution evolution of the lumped proportion chain: dense
// probability vectors over the (n+1)(n+2)/2 count states, sparse one-step
// kernel (at most 4 targets per state), total-variation profiles, mixing
// times and cutoff curves.

namespace cymix::exact {

/// Cutoff center t(n) = (1/(3p)) n ln n, rounded to nearest integer.
inline long t_star(int n, double p) {
  return std::llround(1.0 / (3.0 * p) * n * std::log(static_cast<double>(n)));
}

/// Bijection between count states and dense indices, lexicographic in
/// (c1, c2): index(a,b) = a(n+1) - a(a-1)/2 + b.
struct StateIndex {
  int n = 0;

  explicit StateIndex(int n_) : n(n_) {
    if (n < 1) throw std::invalid_argument("StateIndex: n must be >= 1");
  }

  std::size_t size() const {
    const auto m = static_cast<std::size_t>(n);
    return (m + 1) * (m + 2) / 2;
  }

  std::size_t index_of(std::int64_t a, std::int64_t b) const {
    return static_cast<std::size_t>(a * (n + 1) - a * (a - 1) / 2 + b);
  }

  std::size_t index_of(const CountVector& cv) const { return index_of(cv.c[0], cv.c[1]); }

  CountVector state_at(std::size_t idx) const {
    // Invert the triangular offset by scanning rows of constant c1.
    std::int64_t a = 0;
    std::size_t off = 0;
    while (off + static_cast<std::size_t>(n - a + 1) <= idx) {
      off += static_cast<std::size_t>(n - a + 1);
      ++a;
    }
    const auto b = static_cast<std::int64_t>(idx - off);
    return CountVector(n, a, b, n - a - b);
  }
};

inline constexpr std::size_t kDefaultStateBudget = 2'000'000;

struct LumpedKernel {
  ChainParams params;
  StateIndex index;

  struct Entry {
    std::uint32_t to = 0;
    double prob = 0.0;
  };
  struct Row {
    Entry e[4];
    int len = 0;
  };

  std::vector<CountVector> states;  // dense index -> state
  std::vector<Row> rows;            // outgoing transitions
  std::vector<Row> incoming;        // transposed rows, used by evolve

  LumpedKernel(ChainParams params_, StateIndex index_) : params(params_), index(index_) {}
};

inline LumpedKernel build_lumped_kernel(const ChainParams& params,
                                        std::size_t max_states = kDefaultStateBudget) {
  params.validate();
  StateIndex idx(params.n);
  if (idx.size() > max_states)
    throw std::runtime_error("build_lumped_kernel: state table for n = " +
                             std::to_string(params.n) + " (" + std::to_string(idx.size()) +
                             " states) exceeds the budget of " + std::to_string(max_states));
  LumpedKernel k(params, idx);
  const std::size_t count = idx.size();
  k.states.reserve(count);
  k.rows.resize(count);
  k.incoming.resize(count);
  for (std::int64_t a = 0; a <= params.n; ++a)
    for (std::int64_t b = 0; a + b <= params.n; ++b)
      k.states.push_back(CountVector(params.n, a, b, params.n - a - b));
  for (std::size_t s = 0; s < count; ++s) {
    const auto row = proportion_kernel_row(k.states[s], params);
    auto& out = k.rows[s];
    for (const auto& entry : row) {
      const auto t = static_cast<std::uint32_t>(idx.index_of(entry.to));
      out.e[out.len++] = {t, entry.prob};
      auto& in = k.incoming[t];
      in.e[in.len++] = {static_cast<std::uint32_t>(s), entry.prob};
    }
  }
  return k;
}

/// Dense probability vector over the lumped state index.
struct DistVector {
  int n = 0;
  std::vector<double> p;

  double mass() const {
    double s = 0.0;
    for (double x : p) s += x;
    return s;
  }

  void validate(double tol = 1e-12) const {
    for (double x : p)
      if (x < 0.0) throw std::invalid_argument("DistVector: negative probability");
    if (std::abs(mass() - 1.0) > tol)
      throw std::invalid_argument("DistVector: mass deviates from 1 beyond tolerance");
  }
};

inline DistVector delta_dist(const StateIndex& idx, const CountVector& at) {
  DistVector d;
  d.n = idx.n;
  d.p.assign(idx.size(), 0.0);
  d.p[idx.index_of(at)] = 1.0;
  return d;
}

/// Stationary law of the counts: multinomial(n; 1/3, 1/3, 1/3).
inline DistVector stationary_counts(int n) {
  StateIndex idx(n);
  DistVector d;
  d.n = n;
  d.p.resize(idx.size());
  const double log3 = std::log(3.0);
  const double lg_n = std::lgamma(static_cast<double>(n) + 1.0);
  for (std::int64_t a = 0; a <= n; ++a)
    for (std::int64_t b = 0; a + b <= n; ++b) {
      const std::int64_t c = n - a - b;
      const double logp = lg_n - std::lgamma(static_cast<double>(a) + 1.0) -
                          std::lgamma(static_cast<double>(b) + 1.0) -
                          std::lgamma(static_cast<double>(c) + 1.0) - n * log3;
      d.p[idx.index_of(a, b)] = std::exp(logp);
    }
  return d;
}

namespace detail {
inline void evolve_step(const LumpedKernel& k, const std::vector<double>& src,
                        std::vector<double>& dst) {
  const std::size_t count = src.size();
  for (std::size_t t = 0; t < count; ++t) {
    const auto& in = k.incoming[t];
    double acc = 0.0;
    for (int j = 0; j < in.len; ++j) acc += src[in.e[j].to] * in.e[j].prob;
    dst[t] = acc;
  }
}
}  // namespace detail

/// Pushforward by K^steps. Mass drift beyond 1e-9 is an error, never silently
/// renormalized.
inline DistVector evolve(const DistVector& dist, const LumpedKernel& kernel, long steps) {
  if (dist.n != kernel.params.n) throw std::invalid_argument("evolve: n mismatch");
  if (dist.p.size() != kernel.index.size()) throw std::invalid_argument("evolve: size mismatch");
  if (steps < 0) throw std::invalid_argument("evolve: steps must be >= 0");
  DistVector cur = dist;
  std::vector<double> buf(cur.p.size());
  for (long s = 0; s < steps; ++s) {
    detail::evolve_step(kernel, cur.p, buf);
    cur.p.swap(buf);
  }
  if (std::abs(cur.mass() - 1.0) > 1e-9)
    throw std::runtime_error("evolve: probability mass drifted beyond 1e-9");
  return cur;
}

inline double tv_distance(const DistVector& a, const DistVector& b) {
  if (a.p.size() != b.p.size()) throw std::invalid_argument("tv_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.p.size(); ++i) s += std::abs(a.p[i] - b.p[i]);
  return 0.5 * s;
}

struct TvProfile {
  int n = 0;
  double p = 0.5;
  CountVector start;
  std::vector<std::pair<long, double>> points;  // (t, TV to stationarity)
};

/// TV to stationarity at the requested times, one evolution pass.
inline TvProfile tv_profile(const CountVector& start, const ChainParams& params,
                            std::vector<long> times) {
  start.validate();
  if (start.n != params.n) throw std::invalid_argument("tv_profile: n mismatch");
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  if (!times.empty() && times.front() < 0) throw std::invalid_argument("tv_profile: negative time");
  const auto kernel = build_lumped_kernel(params);
  const auto pi = stationary_counts(params.n);
  TvProfile prof;
  prof.n = params.n;
  prof.p = params.p;
  prof.start = start;
  DistVector cur = delta_dist(kernel.index, start);
  std::vector<double> buf(cur.p.size());
  long t = 0;
  for (long target : times) {
    for (; t < target; ++t) {
      detail::evolve_step(kernel, cur.p, buf);
      cur.p.swap(buf);
    }
    prof.points.emplace_back(target, tv_distance(cur, pi));
  }
  return prof;
}

/// Default step budget for mixing-time searches.
inline long mixing_step_budget(int n, double p) {
  return std::max<long>(1000, 8 * t_star(n, p) + 64L * n);
}

/// Smallest t with TV(law_t, pi) <= eps from the given start.
inline long mixing_time(const CountVector& start, const ChainParams& params, double eps,
                        long max_steps = 0) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("mixing_time: eps must be in (0,1)");
  if (max_steps <= 0) max_steps = mixing_step_budget(params.n, params.p);
  const auto kernel = build_lumped_kernel(params);
  const auto pi = stationary_counts(params.n);
  DistVector cur = delta_dist(kernel.index, start);
  std::vector<double> buf(cur.p.size());
  for (long t = 0; t <= max_steps; ++t) {
    if (tv_distance(cur, pi) <= eps) return t;
    detail::evolve_step(kernel, cur.p, buf);
    cur.p.swap(buf);
  }
  throw std::runtime_error("mixing_time: step budget of " + std::to_string(max_steps) +
                           " exceeded at n = " + std::to_string(params.n));
}

struct CutoffPoint {
  int n = 0;
  double gamma = 0.0;
  long t = 0;
  double tv = 0.0;
};

/// Exact d_n(t(n) + gamma*n) from the monochromatic start, one value per
/// (n, gamma); negative times clamp to 0.
inline std::vector<CutoffPoint> cutoff_curve(const std::vector<int>& ns,
                                             const std::vector<double>& gammas, double p,
                                             std::size_t max_states = kDefaultStateBudget) {
  std::vector<CutoffPoint> out;
  for (int n : ns) {
    const ChainParams params(n, p);
    const long center = t_star(n, p);
    std::vector<long> times;
    times.reserve(gammas.size());
    for (double g : gammas) times.push_back(std::max<long>(0, center + std::llround(g * n)));
    std::vector<long> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    const auto kernel = build_lumped_kernel(params, max_states);
    const auto pi = stationary_counts(n);
    DistVector cur = delta_dist(kernel.index, CountVector(n, n, 0, 0));
    std::vector<double> buf(cur.p.size());
    std::vector<std::pair<long, double>> tv_at;
    long t = 0;
    for (long target : sorted) {
      for (; t < target; ++t) {
        detail::evolve_step(kernel, cur.p, buf);
        cur.p.swap(buf);
      }
      tv_at.emplace_back(target, tv_distance(cur, pi));
    }
    for (std::size_t i = 0; i < gammas.size(); ++i) {
      const auto it = std::lower_bound(tv_at.begin(), tv_at.end(),
                                       std::make_pair(times[i], -1.0));
      out.push_back({n, gammas[i], times[i], it->second});
    }
  }
  return out;
}

struct DriftCheck {
  double lhs = 0.0;  // E[||S_hat'||^2 - ||S_hat||^2] over the kernel row
  double rhs = 0.0;  // -(3/(2n)) ||S_hat||^2 + 1/n^2
  double abs_err = 0.0;
};

/// One-step drift of ||S - e_bar||_2^2 against its closed form (p = 1/2).
inline DriftCheck drift_identity_check(const CountVector& cv, const ChainParams& params) {
  if (params.p != 0.5)
    throw std::invalid_argument("drift_identity_check: specialized to p = 1/2");
  const double base = cv.centered_norms().l2sq;
  double lhs = 0.0;
  for (const auto& entry : proportion_kernel_row(cv, params))
    lhs += entry.prob * (entry.to.centered_norms().l2sq - base);
  const double n = params.n;
  const double rhs = -3.0 / (2.0 * n) * base + 1.0 / (n * n);
  return {lhs, rhs, std::abs(lhs - rhs)};
}

/// E ||S_hat_t||_2^2 in closed form (p = 1/2):
/// (1 - 3/(2n))^t ||S_hat_0||^2 + (2/(3n)) (1 - (1 - 3/(2n))^t).
inline double closed_form_l2(const CountVector& start, const ChainParams& params, long t) {
  if (params.p != 0.5) throw std::invalid_argument("closed_form_l2: specialized to p = 1/2");
  if (t < 0) throw std::invalid_argument("closed_form_l2: t must be >= 0");
  const double n = params.n;
  const double rho = std::pow(1.0 - 3.0 / (2.0 * n), static_cast<double>(t));
  return rho * start.centered_norms().l2sq + 2.0 / (3.0 * n) * (1.0 - rho);
}

/// Exact P(||S_hat_t||_inf >= r/sqrt(n)) from the evolved law.
inline double tail_probability(const CountVector& start, const ChainParams& params, long t,
                               double r) {
  if (r <= 0.0) throw std::invalid_argument("tail_probability: r must be > 0");
  const auto kernel = build_lumped_kernel(params);
  const auto dist = evolve(delta_dist(kernel.index, start), kernel, t);
  const double threshold = r / std::sqrt(static_cast<double>(params.n));
  double acc = 0.0;
  for (std::size_t s = 0; s < dist.p.size(); ++s)
    if (kernel.states[s].centered_norms().linf >= threshold) acc += dist.p[s];
  return acc;
}

struct OracleRow {
  long t = 0;
  double tv_lumped = 0.0;     // lumped chain from the monochromatic start
  double tv_full_mono = 0.0;  // full 3^n chain from the monochromatic start
  double residual = 0.0;      // |tv_full_mono - tv_lumped|
  double tv_full_max = 0.0;   // max over all 3^n starts of the full-chain TV
};

struct OracleReport {
  int n = 0;
  double p = 0.5;
  std::vector<OracleRow> rows;
};

/// Brute-force validation of the lumping at n <= 6: builds the full
/// 3^n-state kernel by enumerating (vertex, coin) moves and compares
/// total-variation distances. Both the monochromatic-start law and the
/// uniform measure are exchangeable, so their TV must agree with the lumped
/// TV; the max over all starts is reported alongside.
inline OracleReport brute_force_oracle(int n, const ChainParams& params,
                                       const std::vector<long>& t_list) {
  if (n < 1 || n > 6) throw std::invalid_argument("brute_force_oracle: requires 1 <= n <= 6");
  if (params.n != n) throw std::invalid_argument("brute_force_oracle: n mismatch");
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= 3;

  const auto color_at = [n](std::size_t code, int v) {
    for (int i = 0; i < v; ++i) code /= 3;
    return static_cast<Color>(code % 3);
  };
  // pow3[v] used to advance vertex v's digit.
  std::vector<std::int64_t> pow3(static_cast<std::size_t>(n) + 1, 1);
  for (int v = 1; v <= n; ++v) pow3[static_cast<std::size_t>(v)] = pow3[static_cast<std::size_t>(v - 1)] * 3;

  // Full kernel: hold with 1-p, advance each vertex with p/n.
  struct FullEntry {
    std::uint32_t to;
    double prob;
  };
  std::vector<std::vector<FullEntry>> full(total);
  for (std::size_t code = 0; code < total; ++code) {
    auto& row = full[code];
    row.reserve(static_cast<std::size_t>(n) + 1);
    row.push_back({static_cast<std::uint32_t>(code), 1.0 - params.p});
    for (int v = 0; v < n; ++v) {
      const Color c = color_at(code, v);
      const std::int64_t next = static_cast<std::int64_t>(code) +
                                pow3[static_cast<std::size_t>(v)] * ((c == 2) ? -2 : 1);
      row.push_back({static_cast<std::uint32_t>(next), params.p / n});
    }
  }
  const auto full_step = [&](const std::vector<double>& src, std::vector<double>& dst) {
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::size_t s = 0; s < total; ++s) {
      if (src[s] == 0.0) continue;
      for (const auto& e : full[s]) dst[e.to] += src[s] * e.prob;
    }
  };
  const double uniform = 1.0 / static_cast<double>(total);
  const auto full_tv_to_uniform = [&](const std::vector<double>& d) {
    double s = 0.0;
    for (double x : d) s += std::abs(x - uniform);
    return 0.5 * s;
  };

  std::vector<long> times = t_list;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  if (!times.empty() && times.front() < 0)
    throw std::invalid_argument("brute_force_oracle: negative time");

  OracleReport report;
  report.n = n;
  report.p = params.p;
  const auto lumped = tv_profile(CountVector(n, n, 0, 0), params, times);

  // Monochromatic start: all vertices color 0 => code 0.
  std::vector<double> mono(total, 0.0), buf(total);
  mono[0] = 1.0;
  // All starts for the max column.
  std::vector<std::vector<double>> all(total);
  for (std::size_t s = 0; s < total; ++s) {
    all[s].assign(total, 0.0);
    all[s][s] = 1.0;
  }
  long t = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (; t < times[i]; ++t) {
      full_step(mono, buf);
      mono.swap(buf);
      for (auto& d : all) {
        full_step(d, buf);
        d.swap(buf);
      }
    }
    OracleRow row;
    row.t = times[i];
    row.tv_lumped = lumped.points[i].second;
    row.tv_full_mono = full_tv_to_uniform(mono);
    row.residual = std::abs(row.tv_full_mono - row.tv_lumped);
    row.tv_full_max = 0.0;
    for (const auto& d : all) row.tv_full_max = std::max(row.tv_full_max, full_tv_to_uniform(d));
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace cymix::exact
