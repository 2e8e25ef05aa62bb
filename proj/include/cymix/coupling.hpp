#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cymix/chain.hpp"
#include "cymix/lumped.hpp"
#include "cymix/rng.hpp"

// Couplings of two copies of the cyclic dynamics, specialized to p = 1/2.
// Every coupling has an exact joint-enumeration form and a sampling form;
// the sampler draws from the enumerated branch table, so the two forms agree
// branch by branch by construction.

namespace cymix::coupling {

struct CountPair {
  CountVector a;
  CountVector b;

  CountPair(CountVector a_, CountVector b_) : a(std::move(a_)), b(std::move(b_)) {
    if (a.n != b.n) throw std::invalid_argument("CountPair: n mismatch");
  }

  /// l1 distance of the proportion vectors, in units of 1/n.
  std::int64_t l1_count_distance() const {
    std::int64_t s = 0;
    for (int k = 0; k < kColors; ++k) s += std::abs(a.c[static_cast<std::size_t>(k)] - b.c[static_cast<std::size_t>(k)]);
    return s;
  }
};

struct ConfigPair {
  Configuration a;
  Configuration b;

  ConfigPair(Configuration a_, Configuration b_) : a(std::move(a_)), b(std::move(b_)) {
    if (a.size() != b.size()) throw std::invalid_argument("ConfigPair: size mismatch");
  }

  CountPair counts() const { return CountPair(counts_of(a), counts_of(b)); }
};

/// Colors chosen for one coupled step: chain a recolors a uniform vertex of
/// color i_a to j_a, chain b likewise with (i_b, j_b).
struct MoveSummary {
  Color i_a = 0, j_a = 0, i_b = 0, j_b = 0;
  friend bool operator==(const MoveSummary&, const MoveSummary&) = default;
};

struct Outcome {
  MoveSummary mv;
  double prob = 0.0;
};

using CouplingOutcome = std::vector<Outcome>;

inline void apply_to_counts(CountPair& pair, const MoveSummary& mv) {
  pair.a = pair.a.moved(mv.i_a, mv.j_a);
  pair.b = pair.b.moved(mv.i_b, mv.j_b);
}

/// Uniform vertex with the given color; selecting from an empty class is an
/// internal fault, not a recoverable error.
inline int pick_uniform_vertex_of_color(const Configuration& cfg, Color c, Rng& rng) {
  std::int64_t count = 0;
  for (int v = 0; v < cfg.size(); ++v)
    if (cfg.color(v) == c) ++count;
  if (count == 0) throw std::logic_error("coupling: selection from an empty color class");
  auto k = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(count)));
  for (int v = 0; v < cfg.size(); ++v)
    if (cfg.color(v) == c && k-- == 0) return v;
  throw std::logic_error("coupling: class scan out of sync");
}

inline void apply_to_configs(ConfigPair& pair, const MoveSummary& mv, Rng& rng) {
  pair.a.set_color(pick_uniform_vertex_of_color(pair.a, mv.i_a, rng), mv.j_a);
  pair.b.set_color(pick_uniform_vertex_of_color(pair.b, mv.i_b, rng), mv.j_b);
}

inline MoveSummary sample_outcome(const CouplingOutcome& oc, Rng& rng) {
  const double u = rng.next_double();
  double acc = 0.0;
  for (const auto& o : oc) {
    acc += o.prob;
    if (u < acc) return o.mv;
  }
  return oc.back().mv;
}

/// Marginal law over (I, J) for one chain of an enumerated joint.
inline std::array<std::array<double, 3>, 3> marginal_color_law(const CouplingOutcome& oc,
                                                               bool second_chain) {
  std::array<std::array<double, 3>, 3> law{};
  for (const auto& o : oc) {
    const Color i = second_chain ? o.mv.i_b : o.mv.i_a;
    const Color j = second_chain ? o.mv.j_b : o.mv.j_a;
    law[i][j] += o.prob;
  }
  return law;
}

/// Single-chain reference law over (I, J): pick color I with probability S^I,
/// keep or advance with probability 1/2 each.
inline std::array<std::array<double, 3>, 3> kernel_color_law(const CountVector& cv) {
  std::array<std::array<double, 3>, 3> law{};
  for (int i = 0; i < kColors; ++i) {
    const double s = cv.proportion(i);
    law[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += 0.5 * s;
    law[static_cast<std::size_t>(i)][next_color(static_cast<Color>(i))] += 0.5 * s;
  }
  return law;
}

/// Expected one-step change of ||S - S~||_1 under the enumerated joint.
inline double expected_l1_drift(const CountPair& pair, const CouplingOutcome& oc) {
  const double base = static_cast<double>(pair.l1_count_distance()) / pair.a.n;
  double acc = 0.0;
  for (const auto& o : oc) {
    CountPair next = pair;
    apply_to_counts(next, o.mv);
    acc += o.prob * (static_cast<double>(next.l1_count_distance()) / pair.a.n - base);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Semi-synchronized coupling.
// ---------------------------------------------------------------------------

/// Rotation + optional chain swap that maps a pair onto the template sign
/// pattern S^1 >= S~^1, S^2 <= S~^2, S^3 <= S~^3.
struct SignCase {
  int rotation = 0;    // canonical color k corresponds to original color (k + rotation) mod 3
  bool swapped = false;
  bool identity = false;  // the two count vectors are equal
};

inline SignCase canonicalize_sign_case(const CountVector& a, const CountVector& b) {
  if (a.n != b.n) throw std::invalid_argument("canonicalize_sign_case: n mismatch");
  std::array<std::int64_t, 3> d{};
  bool all_zero = true;
  for (int k = 0; k < kColors; ++k) {
    d[static_cast<std::size_t>(k)] = a.c[static_cast<std::size_t>(k)] - b.c[static_cast<std::size_t>(k)];
    if (d[static_cast<std::size_t>(k)] != 0) all_zero = false;
  }
  if (all_zero) return {0, false, true};
  for (bool swapped : {false, true}) {
    for (int k = 0; k < kColors; ++k) {
      const auto at = [&](int j) {
        const auto x = d[static_cast<std::size_t>(j % 3)];
        return swapped ? -x : x;
      };
      if (at(k) > 0 && at(k + 1) <= 0 && at(k + 2) <= 0) return {k, swapped, false};
    }
  }
  throw std::logic_error("canonicalize_sign_case: no matching pattern");  // unreachable: diffs sum to 0
}

namespace detail {

inline CountVector rotated_counts(const CountVector& cv, int r) {
  CountVector out = cv;
  for (int k = 0; k < kColors; ++k) out.c[static_cast<std::size_t>(k)] = cv.c[static_cast<std::size_t>((k + r) % 3)];
  return out;
}

inline MoveSummary map_back(MoveSummary mv, const SignCase& sc) {
  mv.i_a = rotate_color(mv.i_a, sc.rotation);
  mv.j_a = rotate_color(mv.j_a, sc.rotation);
  mv.i_b = rotate_color(mv.i_b, sc.rotation);
  mv.j_b = rotate_color(mv.j_b, sc.rotation);
  if (sc.swapped) {
    std::swap(mv.i_a, mv.i_b);
    std::swap(mv.j_a, mv.j_b);
  }
  return mv;
}

}  // namespace detail

/// Exact joint one-step law of the semi-synchronized coupling. Non-template
/// sign patterns are reduced to the template by color rotation + chain swap
/// (the kernel is cyclic-color-equivariant), then mapped back.
inline CouplingOutcome semi_sync_enumerate(const CountPair& pair) {
  const SignCase sc = canonicalize_sign_case(pair.a, pair.b);
  const CountVector ca = detail::rotated_counts(sc.swapped ? pair.b : pair.a, sc.rotation);
  const CountVector cb = detail::rotated_counts(sc.swapped ? pair.a : pair.b, sc.rotation);
  const auto s = ca.proportions();
  const auto t = cb.proportions();

  // (I, I~) branches in the canonical frame, then (J, J~) at 1/2 each.
  struct Stage1 {
    Color i_a, i_b;
    double prob;
  };
  const std::array<Stage1, 5> stage1{{{0, 0, t[0]},
                                      {1, 1, s[1]},
                                      {2, 2, s[2]},
                                      {0, 1, t[1] - s[1]},
                                      {0, 2, t[2] - s[2]}}};
  struct Stage2 {
    Color j_a0, j_b0, j_a1, j_b1;
  };
  const std::array<Stage2, 5> stage2{{{0, 0, 1, 1},
                                      {1, 1, 2, 2},
                                      {2, 2, 0, 0},
                                      {0, 2, 1, 1},
                                      {0, 0, 1, 2}}};
  CouplingOutcome out;
  out.reserve(10);
  for (std::size_t k = 0; k < stage1.size(); ++k) {
    if (stage1[k].prob <= 0.0) continue;
    const auto& s2 = stage2[k];
    out.push_back({detail::map_back({stage1[k].i_a, s2.j_a0, stage1[k].i_b, s2.j_b0}, sc),
                   0.5 * stage1[k].prob});
    out.push_back({detail::map_back({stage1[k].i_a, s2.j_a1, stage1[k].i_b, s2.j_b1}, sc),
                   0.5 * stage1[k].prob});
  }
  return out;
}

inline void semi_sync_step(CountPair& pair, Rng& rng) {
  apply_to_counts(pair, sample_outcome(semi_sync_enumerate(pair), rng));
}

inline void semi_sync_step(ConfigPair& pair, Rng& rng) {
  apply_to_configs(pair, sample_outcome(semi_sync_enumerate(pair.counts()), rng), rng);
}

// ---------------------------------------------------------------------------
// {i}-semi-independent and {i}-coordinatewise couplings.
// ---------------------------------------------------------------------------

/// Joint law of the {i}-semi-independent coupling of two distributions on
/// colors: a shared uniform U matches both draws to the pivot when
/// U <= min(nu(i), nu~(i)); past the minimum the draws decouple into the
/// reweighted remainder laws.
struct PairLaw {
  std::array<std::array<double, 3>, 3> p{};
};

inline PairLaw semi_independent_pair(const std::array<double, 3>& nu,
                                     const std::array<double, 3>& nu_t, Color pivot) {
  for (int k = 0; k < kColors; ++k)
    if (nu[static_cast<std::size_t>(k)] < 0 || nu_t[static_cast<std::size_t>(k)] < 0)
      throw std::invalid_argument("semi_independent_pair: negative probability");
  const Color i1 = next_color(pivot), i2 = next_color(i1);
  const double ra = nu[i1] + nu[i2];
  const double rb = nu_t[i1] + nu_t[i2];
  const auto rest_a = [&](Color j) { return ra > 0.0 ? nu[j] / ra : 0.0; };
  const auto rest_b = [&](Color j) { return rb > 0.0 ? nu_t[j] / rb : 0.0; };

  PairLaw law;
  const double m = std::min(nu[pivot], nu_t[pivot]);
  law.p[pivot][pivot] += m;
  if (nu[pivot] <= nu_t[pivot]) {
    const double gap = nu_t[pivot] - nu[pivot];
    for (Color j : {i1, i2}) law.p[j][pivot] += gap * rest_a(j);
  } else {
    const double gap = nu[pivot] - nu_t[pivot];
    for (Color j : {i1, i2}) law.p[pivot][j] += gap * rest_b(j);
  }
  const double rem = 1.0 - std::max(nu[pivot], nu_t[pivot]);
  if (rem > 0.0)
    for (Color j : {i1, i2})
      for (Color jt : {i1, i2}) law.p[j][jt] += rem * rest_a(j) * rest_b(jt);
  return law;
}

namespace detail {

inline std::array<double, 3> lazy_advance_law(Color c) {
  std::array<double, 3> nu{0.0, 0.0, 0.0};
  nu[c] = 0.5;
  nu[next_color(c)] = 0.5;
  return nu;
}

}  // namespace detail

/// {i}-coordinatewise coupling: stage 1 couples the proportion vectors
/// semi-independently at the pivot, stage 2 couples the two lazy-advance laws
/// semi-independently at the same pivot.
inline CouplingOutcome coordinatewise_enumerate(const CountPair& pair, Color pivot) {
  const auto sa = pair.a.proportions();
  const auto sb = pair.b.proportions();
  const PairLaw stage1 = semi_independent_pair(sa, sb, pivot);
  CouplingOutcome out;
  out.reserve(16);
  for (Color i = 0; i < kColors; ++i)
    for (Color it = 0; it < kColors; ++it) {
      const double q1 = stage1.p[i][it];
      if (q1 <= 0.0) continue;
      const PairLaw stage2 =
          semi_independent_pair(detail::lazy_advance_law(i), detail::lazy_advance_law(it), pivot);
      for (Color j = 0; j < kColors; ++j)
        for (Color jt = 0; jt < kColors; ++jt) {
          const double q2 = stage2.p[j][jt];
          if (q2 <= 0.0) continue;
          out.push_back({{i, j, it, jt}, q1 * q2});
        }
    }
  return out;
}

inline void coordinatewise_step(CountPair& pair, Color pivot, Rng& rng) {
  apply_to_counts(pair, sample_outcome(coordinatewise_enumerate(pair, pivot), rng));
}

inline void coordinatewise_step(ConfigPair& pair, Color pivot, Rng& rng) {
  apply_to_configs(pair, sample_outcome(coordinatewise_enumerate(pair.counts(), pivot), rng), rng);
}

// ---------------------------------------------------------------------------
// Semi-coordinatewise coupling.
// ---------------------------------------------------------------------------

/// Dispatch on min_k |S^k - S~^k|: >= 2/n independent, = 1/n coordinatewise at
/// the smallest such pivot, = 0 the matched-coordinate three-way table.
inline CouplingOutcome semi_coordinatewise_enumerate(const CountPair& pair) {
  std::array<std::int64_t, 3> d{};
  for (int k = 0; k < kColors; ++k) d[static_cast<std::size_t>(k)] = pair.a.c[static_cast<std::size_t>(k)] - pair.b.c[static_cast<std::size_t>(k)];
  const std::int64_t g = std::min({std::abs(d[0]), std::abs(d[1]), std::abs(d[2])});

  if (g >= 2) {
    // Independent product of the two single-chain kernels.
    CouplingOutcome out;
    out.reserve(36);
    for (Color i = 0; i < kColors; ++i) {
      const double pa = pair.a.proportion(i);
      if (pa <= 0.0) continue;
      for (int adv_a = 0; adv_a < 2; ++adv_a) {
        const Color j = adv_a ? next_color(i) : i;
        for (Color it = 0; it < kColors; ++it) {
          const double pb = pair.b.proportion(it);
          if (pb <= 0.0) continue;
          for (int adv_b = 0; adv_b < 2; ++adv_b) {
            const Color jt = adv_b ? next_color(it) : it;
            out.push_back({{i, j, it, jt}, 0.25 * pa * pb});
          }
        }
      }
    }
    return out;
  }

  if (g == 1) {
    Color pivot = 0;
    for (int k = 0; k < kColors; ++k)
      if (std::abs(d[static_cast<std::size_t>(k)]) == 1) {
        pivot = static_cast<Color>(k);
        break;
      }
    return coordinatewise_enumerate(pair, pivot);
  }

  // g == 0: matched coordinate i; reduce to the template S^{i+1} >= S~^{i+1}
  // by swapping chain roles when needed.
  Color i = 0;
  for (int k = 0; k < kColors; ++k)
    if (d[static_cast<std::size_t>(k)] == 0) {
      i = static_cast<Color>(k);
      break;
    }
  const Color i1 = next_color(i), i2 = next_color(i1);
  const bool swapped = pair.a.c[i1] < pair.b.c[i1];
  const CountVector& x = swapped ? pair.b : pair.a;
  const CountVector& y = swapped ? pair.a : pair.b;
  const auto sx = x.proportions();
  const auto sy = y.proportions();

  struct Branch {
    Color i_x, i_y;
    double prob;
    std::array<MoveSummary, 4> xs;  // equally likely (J, J~) selections
    int len;
  };
  const auto mk = [](Color ix, Color jx, Color iy, Color jy) {
    return MoveSummary{ix, jx, iy, jy};
  };
  const std::array<Branch, 4> branches{{
      {i, i, sx[i], {mk(i, i, i, i), mk(i, i1, i, i1)}, 2},
      {i1, i1, sy[i1],
       {mk(i1, i1, i1, i1), mk(i1, i1, i1, i2), mk(i1, i2, i1, i1), mk(i1, i2, i1, i2)}, 4},
      {i2, i2, sx[i2], {mk(i2, i, i2, i), mk(i2, i2, i2, i2)}, 2},
      {i1, i2, sx[i1] - sy[i1], {mk(i1, i1, i2, i), mk(i1, i2, i2, i2)}, 2},
  }};
  CouplingOutcome out;
  out.reserve(10);
  for (const auto& br : branches) {
    if (br.prob <= 0.0) continue;
    for (int k = 0; k < br.len; ++k) {
      MoveSummary mv = br.xs[static_cast<std::size_t>(k)];
      if (swapped) {
        std::swap(mv.i_a, mv.i_b);
        std::swap(mv.j_a, mv.j_b);
      }
      out.push_back({mv, br.prob / br.len});
    }
  }
  return out;
}

inline void semi_coordinatewise_step(CountPair& pair, Rng& rng) {
  apply_to_counts(pair, sample_outcome(semi_coordinatewise_enumerate(pair), rng));
}

inline void semi_coordinatewise_step(ConfigPair& pair, Rng& rng) {
  apply_to_configs(pair, sample_outcome(semi_coordinatewise_enumerate(pair.counts()), rng), rng);
}

// ---------------------------------------------------------------------------
// Basketwise coupling.
// ---------------------------------------------------------------------------

/// One enumerated branch of the basketwise coupling: chain a recolors vertex
/// v from color `from` to `to`, chain b recolors v_tilde identically.
struct BasketBranch {
  int v = 0;
  int v_tilde = 0;
  Color from = 0;
  Color to = 0;
  double prob = 0.0;
};

/// First basket whose rows differ (0-based); 3 when the matrices are equal.
inline int active_basket(const BasketCounts& x, const BasketCounts& y) {
  for (int m = 0; m < kColors; ++m)
    if (x.counts[static_cast<std::size_t>(m)] != y.counts[static_cast<std::size_t>(m)]) return m;
  return 3;
}

namespace detail {

/// Vertices of the given color in baskets [lo, 3), ordered by (basket, index).
inline std::vector<int> class_by_basket_order(const Configuration& cfg,
                                              const BasketPartition& part, int lo, Color color) {
  std::vector<int> out;
  for (int m = lo; m < kColors; ++m)
    for (int v = 0; v < cfg.size(); ++v)
      if (part.assignment[static_cast<std::size_t>(v)] == m && cfg.color(v) == color) out.push_back(v);
  return out;
}

struct TildeChoice {
  bool spread = false;      // v_tilde uniform over cls
  int matched = -1;         // exact partner when !spread
  std::vector<int> cls;
};

/// Resolves the partner-vertex rule for a move (v, I -> J) of chain a.
inline TildeChoice basketwise_tilde_choice(const ConfigPair& pair, const BasketPartition& part,
                                           int active, const BasketCounts& bca,
                                           const BasketCounts& bcb, int v, Color to) {
  const Color from = pair.a.color(v);
  const int m0 = part.assignment[static_cast<std::size_t>(v)];
  TildeChoice choice;
  if (m0 < active) {
    // Coalesced basket: partner uniform in the same basket's matching class.
    choice.spread = true;
    for (int u = 0; u < pair.b.size(); ++u)
      if (part.assignment[static_cast<std::size_t>(u)] == m0 && pair.b.color(u) == from) choice.cls.push_back(u);
    if (choice.cls.empty())
      throw std::logic_error("basketwise: empty partner class in a coalesced basket");
    return choice;
  }
  const bool both_rows_differ =
      active < kColors &&
      bca.counts[static_cast<std::size_t>(active)][from] != bcb.counts[static_cast<std::size_t>(active)][from] &&
      bca.counts[static_cast<std::size_t>(active)][to] != bcb.counts[static_cast<std::size_t>(active)][to];
  if (both_rows_differ) {
    choice.spread = true;
    choice.cls = class_by_basket_order(pair.b, part, active, from);
    if (choice.cls.empty())
      throw std::logic_error("basketwise: empty partner class in the suffix baskets");
    return choice;
  }
  // Rank matching over baskets [active, 3), ordered by (basket, index).
  const auto ca = class_by_basket_order(pair.a, part, active, from);
  const auto cb = class_by_basket_order(pair.b, part, active, from);
  if (ca.size() != cb.size())
    throw std::logic_error("basketwise: suffix classes of unequal size");
  const auto it = std::find(ca.begin(), ca.end(), v);
  if (it == ca.end()) throw std::logic_error("basketwise: vertex missing from its own class");
  choice.matched = cb[static_cast<std::size_t>(it - ca.begin())];
  return choice;
}

inline void basketwise_validate(const ConfigPair& pair, const BasketPartition& part, int active) {
  if (part.n() != pair.a.size()) throw std::invalid_argument("basketwise: partition size mismatch");
  if (active < 0 || active > kColors) throw std::invalid_argument("basketwise: bad active basket");
  if (!(counts_of(pair.a) == counts_of(pair.b)))
    throw std::invalid_argument("basketwise: requires equal count vectors");
  const auto bca = basket_counts(pair.a, part);
  const auto bcb = basket_counts(pair.b, part);
  for (int m = 0; m < active && m < kColors; ++m)
    if (bca.counts[static_cast<std::size_t>(m)] != bcb.counts[static_cast<std::size_t>(m)])
      throw std::invalid_argument("basketwise: basket rows below the active one must be coalesced");
}

}  // namespace detail

/// Exact joint one-step law of the basketwise coupling at configuration
/// level: both chains draw the same (I, J); chain a recolors a uniform vertex
/// of color I, chain b's partner follows the matched/spread rules.
inline std::vector<BasketBranch> basketwise_enumerate(const ConfigPair& pair,
                                                      const BasketPartition& part, int active) {
  detail::basketwise_validate(pair, part, active);
  const auto bca = basket_counts(pair.a, part);
  const auto bcb = basket_counts(pair.b, part);
  const int n = pair.a.size();
  std::vector<BasketBranch> out;
  out.reserve(static_cast<std::size_t>(2 * n));
  const double base = 1.0 / (2.0 * n);
  for (int v = 0; v < n; ++v) {
    const Color from = pair.a.color(v);
    for (int adv = 0; adv < 2; ++adv) {
      const Color to = adv ? next_color(from) : from;
      const auto choice = detail::basketwise_tilde_choice(pair, part, active, bca, bcb, v, to);
      if (choice.spread) {
        const double p = base / static_cast<double>(choice.cls.size());
        for (int u : choice.cls) out.push_back({v, u, from, to, p});
      } else {
        out.push_back({v, choice.matched, from, to, base});
      }
    }
  }
  return out;
}

inline void basketwise_step(ConfigPair& pair, const BasketPartition& part, int active, Rng& rng) {
  detail::basketwise_validate(pair, part, active);
  const auto bca = basket_counts(pair.a, part);
  const auto bcb = basket_counts(pair.b, part);
  const int v = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(pair.a.size())));
  const Color from = pair.a.color(v);
  const Color to = rng.next_coin(0.5) ? next_color(from) : from;
  const auto choice = detail::basketwise_tilde_choice(pair, part, active, bca, bcb, v, to);
  const int u = choice.spread
                    ? choice.cls[rng.next_below(choice.cls.size())]
                    : choice.matched;
  pair.a.set_color(v, to);
  pair.b.set_color(u, to);
}

// ---------------------------------------------------------------------------
// Overall coupling.
// ---------------------------------------------------------------------------

/// Phase lengths gamma1..gamma4, in units of n; phase 2's extra length is the
/// cutoff center t(n).
struct OverallSchedule {
  double gamma1 = 2.0;
  double gamma2 = 4.0;
  double gamma3 = 4.0;
  double gamma4 = 6.0;

  void validate() const {
    if (!(gamma1 > 0 && gamma2 > 0 && gamma3 > 0 && gamma4 > 0))
      throw std::invalid_argument("OverallSchedule: phase lengths must be positive");
  }
};

struct PhaseTimes {
  long t1 = 0, t2 = 0, t3 = 0, t4 = 0, t5 = 0;
};

inline PhaseTimes phase_times(const OverallSchedule& s, int n, double p) {
  s.validate();
  PhaseTimes t;
  t.t1 = std::llround(s.gamma1 * n);
  t.t2 = t.t1 + exact::t_star(n, p);
  t.t3 = t.t2 + std::llround(s.gamma2 * n);
  t.t4 = t.t3 + std::llround(s.gamma3 * n);
  t.t5 = t.t4 + std::llround(s.gamma4 * n);
  if (!(t.t1 < t.t2 && t.t2 < t.t3 && t.t3 < t.t4 && t.t4 < t.t5))
    throw std::invalid_argument("phase_times: boundaries must be strictly increasing");
  return t;
}

/// Event thresholds mirroring the proof-step structure of the coupling run.
struct OverallThresholds {
  double rho = 0.15;  // ||S_hat_{t1}||_inf ball and the lambda = 1/3 - rho partition bound
  double r = 6.0;     // proportion-chain ball at t2, in units of 1/sqrt(n)
  double r1 = 8.0;    // basket-chain ball at t4, in units of 1/sqrt(n)
};

struct OverallRunRecord {
  PhaseTimes times;
  double lambda = 0.0;  // min basket fraction of the realized partition
  bool degenerate_partition = false;

  // One flag per proof step; the run continues past failed flags whenever the
  // next phase is still well-defined.
  bool s_t1_in_ball = false;
  bool partition_ok = false;
  bool s_t2_in_ball = false;
  bool s_tilde_t2_in_ball = false;
  bool s_coalesced_t4 = false;
  bool baskets_in_ball_t4 = false;
  bool basket_coalesced_t5 = false;

  long s_coalesce_time = -1;  // first time counts agree during phases 4-5 (-1: never)
  long tau1 = -1, tau2 = -1;  // absolute basket-row coalescence times (-1: censored)
  int first_failed_step = 0;  // 0 when every step held
};

namespace detail {

inline void independent_step(Configuration& cfg, CountVector& cv, const ChainParams& params,
                             Rng& rng) {
  const int v = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.size())));
  if (rng.next_coin(params.p)) {
    const Color c = cfg.color(v);
    cfg.set_color(v, next_color(c));
    cv = cv.moved(c, next_color(c));
  }
}

inline bool matrix_in_ball(const BasketCounts& bc, const std::array<int, 3>& sizes,
                           double threshold) {
  for (int m = 0; m < kColors; ++m) {
    if (sizes[static_cast<std::size_t>(m)] == 0) return false;
    for (int k = 0; k < kColors; ++k) {
      const double s = static_cast<double>(bc.counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)]) /
                       sizes[static_cast<std::size_t>(m)];
      if (std::abs(s - 1.0 / 3.0) >= threshold) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Runs the six-phase overall coupling: independent burn-in, baskets from the
/// first chain's color classes, independent until t(n), semi-coordinatewise,
/// semi-synchronized, then basketwise. The second chain starts from a uniform
/// sample. Records the per-phase proof-step events.
inline OverallRunRecord overall_coupling_run(const Configuration& start,
                                             const OverallSchedule& sched,
                                             const ChainParams& params,
                                             const OverallThresholds& th, Rng& rng) {
  if (params.p != 0.5) throw std::invalid_argument("overall_coupling_run: specialized to p = 1/2");
  if (start.size() != params.n) throw std::invalid_argument("overall_coupling_run: n mismatch");
  const int n = params.n;
  OverallRunRecord rec;
  rec.times = phase_times(sched, n, params.p);
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  Configuration a = start;
  std::vector<Color> bcolors(static_cast<std::size_t>(n));
  for (auto& c : bcolors) c = static_cast<Color>(rng.next_below(3));
  Configuration b{std::move(bcolors)};
  CountVector ca = counts_of(a), cb = counts_of(b);

  // Phase 1: independent to t1.
  for (long t = 0; t < rec.times.t1; ++t) {
    detail::independent_step(a, ca, params, rng);
    detail::independent_step(b, cb, params, rng);
  }
  rec.s_t1_in_ball = ca.centered_norms().linf < th.rho;

  // Phase 2: baskets from the color classes of the first chain.
  const BasketPartition part = BasketPartition::from_color_classes(a);
  rec.lambda = part.min_fraction();
  rec.degenerate_partition = std::min({part.sizes[0], part.sizes[1], part.sizes[2]}) == 0;
  rec.partition_ok = !rec.degenerate_partition && part.is_lambda_partition(1.0 / 3.0 - th.rho);
  if (rec.degenerate_partition) {
    rec.first_failed_step = rec.s_t1_in_ball ? 2 : 1;
    return rec;
  }

  // Phase 3: independent to t2.
  for (long t = rec.times.t1; t < rec.times.t2; ++t) {
    detail::independent_step(a, ca, params, rng);
    detail::independent_step(b, cb, params, rng);
  }
  rec.s_t2_in_ball = ca.centered_norms().linf < th.r / sqrt_n;
  rec.s_tilde_t2_in_ball = cb.centered_norms().linf < th.r / sqrt_n;

  // Phases 4 and 5: semi-coordinatewise to t3, then semi-synchronized to t4.
  ConfigPair pair(std::move(a), std::move(b));
  CountPair cpair(ca, cb);
  const auto coupled_step = [&](bool sync_phase, long t_now) {
    const CouplingOutcome oc = sync_phase ? semi_sync_enumerate(cpair)
                                          : semi_coordinatewise_enumerate(cpair);
    const MoveSummary mv = sample_outcome(oc, rng);
    apply_to_configs(pair, mv, rng);
    apply_to_counts(cpair, mv);
    if (rec.s_coalesce_time < 0 && cpair.a == cpair.b) rec.s_coalesce_time = t_now + 1;
  };
  for (long t = rec.times.t2; t < rec.times.t3; ++t) coupled_step(false, t);
  for (long t = rec.times.t3; t < rec.times.t4; ++t) coupled_step(true, t);
  rec.s_coalesced_t4 = cpair.a == cpair.b;

  auto bca = basket_counts(pair.a, part);
  auto bcb = basket_counts(pair.b, part);
  rec.baskets_in_ball_t4 = detail::matrix_in_ball(bca, part.sizes, th.r1 / sqrt_n) &&
                           detail::matrix_in_ball(bcb, part.sizes, th.r1 / sqrt_n);

  // Phase 6: basketwise to t5 (requires equal counts).
  if (rec.s_coalesced_t4) {
    int active = active_basket(bca, bcb);
    const auto note_taus = [&](long t_now) {
      if (rec.tau1 < 0 && active >= 1) rec.tau1 = t_now;
      if (rec.tau2 < 0 && active >= 3) rec.tau2 = t_now;
    };
    note_taus(rec.times.t4);
    for (long t = rec.times.t4; t < rec.times.t5; ++t) {
      basketwise_step(pair, part, active, rng);
      bca = basket_counts(pair.a, part);
      bcb = basket_counts(pair.b, part);
      active = active_basket(bca, bcb);
      note_taus(t + 1);
    }
    rec.basket_coalesced_t5 = active == 3;
  }

  const std::array<bool, 7> steps{rec.s_t1_in_ball,      rec.partition_ok,
                                  rec.s_t2_in_ball,      rec.s_tilde_t2_in_ball,
                                  rec.s_coalesced_t4,    rec.baskets_in_ball_t4,
                                  rec.basket_coalesced_t5};
  for (int k = 0; k < 7; ++k)
    if (!steps[static_cast<std::size_t>(k)]) {
      rec.first_failed_step = k + 1;
      break;
    }
  return rec;
}

}  // namespace cymix::coupling
