#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cymix/rng.hpp"

// Single-site cyclic dynamics on {1,2,3}^n: a uniformly chosen vertex keeps
// its color with probability 1-p or advances it cyclically (1->2->3->1) with
// probability p. Colors are stored 0-based; every public label view is
// 1-based.

namespace cymix {

inline constexpr int kColors = 3;

using Color = std::uint8_t;

inline Color next_color(Color c) { return static_cast<Color>((c + 1) % kColors); }
inline Color rotate_color(Color c, int r) { return static_cast<Color>((c + r) % kColors); }

struct ChainParams {
  int n = 1;
  double p = 0.5;

  ChainParams() = default;
  ChainParams(int n_, double p_ = 0.5) : n(n_), p(p_) { validate(); }

  void validate() const {
    if (n < 1) throw std::invalid_argument("ChainParams: n must be >= 1");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("ChainParams: p must lie in (0,1)");
  }
};

class Configuration {
 public:
  explicit Configuration(std::vector<Color> colors) : colors_(std::move(colors)) {
    if (colors_.empty()) throw std::invalid_argument("Configuration: n must be >= 1");
    for (Color c : colors_)
      if (c >= kColors) throw std::invalid_argument("Configuration: color out of range");
  }

  static Configuration monochromatic(int n, Color color = 0) {
    if (n < 1) throw std::invalid_argument("Configuration: n must be >= 1");
    return Configuration(std::vector<Color>(static_cast<std::size_t>(n), color));
  }

  /// Builds from the 1-based labels used in all I/O.
  static Configuration from_labels(const std::vector<int>& labels) {
    std::vector<Color> colors;
    colors.reserve(labels.size());
    for (int l : labels) {
      if (l < 1 || l > kColors) throw std::invalid_argument("Configuration: label out of range");
      colors.push_back(static_cast<Color>(l - 1));
    }
    return Configuration(std::move(colors));
  }

  int size() const { return static_cast<int>(colors_.size()); }
  Color color(int v) const { return colors_[static_cast<std::size_t>(v)]; }
  void set_color(int v, Color c) { colors_[static_cast<std::size_t>(v)] = c; }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(colors_.size());
    for (Color c : colors_) out.push_back(c + 1);
    return out;
  }

  const std::vector<Color>& colors() const { return colors_; }

  friend bool operator==(const Configuration&, const Configuration&) = default;

 private:
  std::vector<Color> colors_;
};

struct CenteredNorms {
  double l2sq = 0.0;  // ||S - (1/3,1/3,1/3)||_2^2
  double linf = 0.0;  // ||S - (1/3,1/3,1/3)||_inf
};

/// Integer color counts (c1,c2,c3) with c1+c2+c3 = n; the canonical exact
/// state of the proportion chain. Proportions are derived views.
struct CountVector {
  int n = 0;
  std::array<std::int64_t, 3> c{0, 0, 0};

  CountVector() = default;
  CountVector(int n_, std::int64_t c1, std::int64_t c2, std::int64_t c3) : n(n_), c{c1, c2, c3} {
    validate();
  }

  void validate() const {
    if (n < 1) throw std::invalid_argument("CountVector: n must be >= 1");
    if (c[0] < 0 || c[1] < 0 || c[2] < 0)
      throw std::invalid_argument("CountVector: negative count");
    if (c[0] + c[1] + c[2] != n) throw std::invalid_argument("CountVector: counts must sum to n");
  }

  double proportion(int k) const { return static_cast<double>(c[static_cast<std::size_t>(k)]) / n; }

  std::array<double, 3> proportions() const {
    return {proportion(0), proportion(1), proportion(2)};
  }

  CenteredNorms centered_norms() const {
    CenteredNorms out;
    for (int k = 0; k < kColors; ++k) {
      const double d = proportion(k) - 1.0 / 3.0;
      out.l2sq += d * d;
      if (std::abs(d) > out.linf) out.linf = std::abs(d);
    }
    return out;
  }

  /// Applies the count move color i -> color j (no-op when i == j).
  CountVector moved(Color i, Color j) const {
    CountVector out = *this;
    if (i != j) {
      --out.c[i];
      ++out.c[j];
    }
    return out;
  }

  friend bool operator==(const CountVector&, const CountVector&) = default;
};

inline CountVector counts_of(const Configuration& cfg) {
  CountVector cv;
  cv.n = cfg.size();
  for (Color c : cfg.colors()) ++cv.c[c];
  return cv;
}

/// One step of the cyclic dynamics, in place.
inline void step_configuration_in_place(Configuration& cfg, const ChainParams& params, Rng& rng) {
  const int v = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.size())));
  if (rng.next_coin(params.p)) cfg.set_color(v, next_color(cfg.color(v)));
}

inline Configuration step_configuration(const Configuration& cfg, const ChainParams& params,
                                        Rng& rng) {
  Configuration out = cfg;
  step_configuration_in_place(out, params, rng);
  return out;
}

struct KernelEntry {
  CountVector to;
  double prob = 0.0;
};

/// One row of the lumped proportion-chain kernel: hold with probability 1-p,
/// move mass k -> k+1 with probability p*S^k. Moves out of an empty color are
/// omitted (their probability is zero). At most 4 entries; sums to 1.
inline std::vector<KernelEntry> proportion_kernel_row(const CountVector& cv,
                                                      const ChainParams& params) {
  cv.validate();
  if (cv.n != params.n) throw std::invalid_argument("proportion_kernel_row: n mismatch");
  std::vector<KernelEntry> row;
  row.reserve(4);
  double move_total = 0.0;
  std::array<double, 3> move{0.0, 0.0, 0.0};
  for (int k = 0; k < kColors; ++k) {
    if (cv.c[static_cast<std::size_t>(k)] == 0) continue;
    move[static_cast<std::size_t>(k)] = params.p * cv.proportion(k);
    move_total += move[static_cast<std::size_t>(k)];
  }
  row.push_back({cv, 1.0 - move_total});  // hold; complementary so the row sums to 1 exactly
  for (int k = 0; k < kColors; ++k) {
    const double m = move[static_cast<std::size_t>(k)];
    if (m > 0.0)
      row.push_back({cv.moved(static_cast<Color>(k), next_color(static_cast<Color>(k))), m});
  }
  return row;
}

/// One step of the proportion chain at the count level (same law as lumping
/// step_configuration; O(1)).
inline void step_counts_in_place(CountVector& cv, const ChainParams& params, Rng& rng) {
  const auto x = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(cv.n)));
  Color k = 0;
  if (x >= cv.c[0] + cv.c[1])
    k = 2;
  else if (x >= cv.c[0])
    k = 1;
  if (rng.next_coin(params.p)) cv = cv.moved(k, next_color(k));
}

/// A 3-way vertex partition ("baskets"); assignment holds a basket index in
/// {0,1,2} per vertex.
struct BasketPartition {
  std::vector<int> assignment;
  std::array<int, 3> sizes{0, 0, 0};

  explicit BasketPartition(std::vector<int> assign) : assignment(std::move(assign)) {
    if (assignment.empty()) throw std::invalid_argument("BasketPartition: empty");
    for (int m : assignment) {
      if (m < 0 || m >= kColors) throw std::invalid_argument("BasketPartition: index out of range");
      ++sizes[static_cast<std::size_t>(m)];
    }
  }

  static BasketPartition equal_thirds(int n) {
    std::vector<int> assign(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) assign[static_cast<std::size_t>(v)] = (3 * v) / n;
    return BasketPartition(std::move(assign));
  }

  /// Basket m = color class m of the given configuration. Classes may be
  /// empty; callers that need a lambda-partition must check.
  static BasketPartition from_color_classes(const Configuration& cfg) {
    std::vector<int> assign(static_cast<std::size_t>(cfg.size()));
    for (int v = 0; v < cfg.size(); ++v) assign[static_cast<std::size_t>(v)] = cfg.color(v);
    return BasketPartition(std::move(assign));
  }

  int n() const { return static_cast<int>(assignment.size()); }
  double min_fraction() const {
    return static_cast<double>(std::min({sizes[0], sizes[1], sizes[2]})) / n();
  }
  bool is_lambda_partition(double lambda) const { return min_fraction() > lambda; }
};

/// counts[m][k] = number of vertices in basket m with color k.
struct BasketCounts {
  std::array<std::array<std::int64_t, 3>, 3> counts{};

  std::array<std::int64_t, 3> row_sums() const {
    std::array<std::int64_t, 3> out{0, 0, 0};
    for (int m = 0; m < kColors; ++m)
      for (int k = 0; k < kColors; ++k) out[static_cast<std::size_t>(m)] += counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)];
    return out;
  }

  std::array<std::int64_t, 3> column_sums() const {
    std::array<std::int64_t, 3> out{0, 0, 0};
    for (int m = 0; m < kColors; ++m)
      for (int k = 0; k < kColors; ++k) out[static_cast<std::size_t>(k)] += counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)];
    return out;
  }

  friend bool operator==(const BasketCounts&, const BasketCounts&) = default;
};

inline BasketCounts basket_counts(const Configuration& cfg, const BasketPartition& part) {
  if (part.n() != cfg.size()) throw std::invalid_argument("basket_counts: size mismatch");
  BasketCounts bc;
  for (int v = 0; v < cfg.size(); ++v)
    ++bc.counts[static_cast<std::size_t>(part.assignment[static_cast<std::size_t>(v)])][cfg.color(v)];
  return bc;
}

/// Per-basket proportion deviation Q[m][k] = S^{m,k} - S^k. Rows sum to 0.
inline std::array<std::array<double, 3>, 3> q_deviation(const BasketCounts& bc,
                                                        const CountVector& cv) {
  const auto cols = bc.column_sums();
  for (int k = 0; k < kColors; ++k)
    if (cols[static_cast<std::size_t>(k)] != cv.c[static_cast<std::size_t>(k)])
      throw std::invalid_argument("q_deviation: basket column sums do not match counts");
  const auto rows = bc.row_sums();
  std::array<std::array<double, 3>, 3> q{};
  for (int m = 0; m < kColors; ++m) {
    const auto sz = rows[static_cast<std::size_t>(m)];
    if (sz == 0) throw std::invalid_argument("q_deviation: empty basket");
    for (int k = 0; k < kColors; ++k)
      q[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] =
          static_cast<double>(bc.counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)]) / static_cast<double>(sz) - cv.proportion(k);
  }
  return q;
}

}  // namespace cymix
