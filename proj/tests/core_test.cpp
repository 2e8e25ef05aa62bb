#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "cymix/chain.hpp"
#include "cymix/rng.hpp"

namespace {

using namespace cymix;

// Test-side oracle: exact one-step law of the configuration chain by
// enumerating every (vertex, keep/advance) move. Independent of
// proportion_kernel_row.
std::map<std::vector<Color>, double> enumerate_config_step(const Configuration& cfg, double p) {
  std::map<std::vector<Color>, double> law;
  const int n = cfg.size();
  law[cfg.colors()] += 1.0 - p;  // every kept vertex leaves the state unchanged
  for (int v = 0; v < n; ++v) {
    Configuration next = cfg;
    next.set_color(v, next_color(cfg.color(v)));
    law[next.colors()] += p / n;
  }
  return law;
}

std::map<std::array<std::int64_t, 3>, double> enumerate_count_step(const Configuration& cfg,
                                                                   double p) {
  std::map<std::array<std::int64_t, 3>, double> law;
  for (const auto& [colors, prob] : enumerate_config_step(cfg, p))
    law[counts_of(Configuration(colors)).c] += prob;
  return law;
}

TEST(Configuration, LabelRoundTripAndValidation) {
  const auto cfg = Configuration::from_labels({1, 2, 3, 3});
  EXPECT_EQ(cfg.size(), 4);
  EXPECT_EQ(cfg.labels(), (std::vector<int>{1, 2, 3, 3}));
  EXPECT_THROW(Configuration::from_labels({0}), std::invalid_argument);
  EXPECT_THROW(Configuration::from_labels({4}), std::invalid_argument);
  EXPECT_THROW(Configuration(std::vector<Color>{}), std::invalid_argument);
}

TEST(StepConfiguration, TwoPointLawAtNOne) {
  // From [1] at n=1: stay with 1-p, advance to [2] with p.
  const ChainParams params(1, 0.5);
  const auto cfg = Configuration::from_labels({1});
  Rng rng(7);
  int advanced = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i)
    if (step_configuration(cfg, params, rng).color(0) == 1) ++advanced;
  const double se = std::sqrt(0.25 / draws);
  EXPECT_NEAR(static_cast<double>(advanced) / draws, 0.5, 4 * se);
}

TEST(StepConfiguration, CyclicWrapAdvancesThreeToOne) {
  // With n=1 and color 3, an accepted update always lands on color 1.
  const ChainParams params(1, 0.75);
  const auto cfg = Configuration::from_labels({3});
  const auto law = enumerate_config_step(cfg, params.p);
  EXPECT_DOUBLE_EQ(law.at({2}), 0.25);
  EXPECT_DOUBLE_EQ(law.at({0}), 0.75);
  Rng rng(11);
  int wrapped = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i)
    if (step_configuration(cfg, params, rng).color(0) == 0) ++wrapped;
  const double se = std::sqrt(0.75 * 0.25 / draws);
  EXPECT_NEAR(static_cast<double>(wrapped) / draws, 0.75, 4 * se);
}

TEST(StepConfiguration, EmpiricalFrequenciesMatchEnumeratedKernel) {
  const ChainParams params(3, 0.5);
  const auto cfg = Configuration::from_labels({1, 2, 3});
  const auto law = enumerate_config_step(cfg, params.p);
  std::map<std::vector<Color>, int> hits;
  Rng rng(42);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++hits[step_configuration(cfg, params, rng).colors()];
  for (const auto& [colors, prob] : law) {
    const double freq = static_cast<double>(hits[colors]) / draws;
    const double se = std::sqrt(prob * (1.0 - prob) / draws);
    EXPECT_NEAR(freq, prob, 4 * se);
  }
  // No mass outside the enumerated support.
  for (const auto& [colors, count] : hits) EXPECT_TRUE(law.count(colors)) << "stray outcome";
}

TEST(CountsOf, Examples) {
  EXPECT_EQ(counts_of(Configuration::from_labels({1, 1, 1})).c, (std::array<std::int64_t, 3>{3, 0, 0}));
  EXPECT_EQ(counts_of(Configuration::from_labels({1, 2, 3})).c, (std::array<std::int64_t, 3>{1, 1, 1}));
  Rng rng(3);
  std::vector<Color> colors(50);
  for (auto& c : colors) c = static_cast<Color>(rng.next_below(3));
  const auto cv = counts_of(Configuration(colors));
  EXPECT_EQ(cv.c[0] + cv.c[1] + cv.c[2], 50);
}

TEST(ProportionKernelRow, MonochromaticState) {
  const ChainParams params(5, 0.5);
  const auto row = proportion_kernel_row(CountVector(5, 5, 0, 0), params);
  ASSERT_EQ(row.size(), 2u);
  EXPECT_EQ(row[0].to.c, (std::array<std::int64_t, 3>{5, 0, 0}));
  EXPECT_DOUBLE_EQ(row[0].prob, 0.5);
  EXPECT_EQ(row[1].to.c, (std::array<std::int64_t, 3>{4, 1, 0}));
  EXPECT_DOUBLE_EQ(row[1].prob, 0.5);
}

TEST(ProportionKernelRow, TwoOneZeroExample) {
  const ChainParams params(3, 0.5);
  const auto row = proportion_kernel_row(CountVector(3, 2, 1, 0), params);
  ASSERT_EQ(row.size(), 3u);
  EXPECT_EQ(row[0].to.c, (std::array<std::int64_t, 3>{2, 1, 0}));
  EXPECT_DOUBLE_EQ(row[0].prob, 0.5);
  EXPECT_EQ(row[1].to.c, (std::array<std::int64_t, 3>{1, 2, 0}));
  EXPECT_NEAR(row[1].prob, 1.0 / 3.0, 1e-16);
  EXPECT_EQ(row[2].to.c, (std::array<std::int64_t, 3>{2, 0, 1}));
  EXPECT_NEAR(row[2].prob, 1.0 / 6.0, 1e-16);
}

TEST(ProportionKernelRow, SingleOccupiedColorWrapsForAnyP) {
  for (double p : {0.25, 0.5, 0.9}) {
    const ChainParams params(6, p);
    const auto row = proportion_kernel_row(CountVector(6, 0, 0, 6), params);
    ASSERT_EQ(row.size(), 2u);
    EXPECT_DOUBLE_EQ(row[0].prob, 1.0 - p);
    EXPECT_EQ(row[1].to.c, (std::array<std::int64_t, 3>{1, 0, 5}));
    EXPECT_DOUBLE_EQ(row[1].prob, p);
  }
}

TEST(ProportionKernelRow, StochasticOnEveryStateUpToSixty) {
  for (int n = 1; n <= 60; ++n) {
    const ChainParams params(n, 0.5);
    for (std::int64_t a = 0; a <= n; ++a)
      for (std::int64_t b = 0; a + b <= n; ++b) {
        const auto row = proportion_kernel_row(CountVector(n, a, b, n - a - b), params);
        ASSERT_LE(row.size(), 4u);
        double sum = 0.0;
        for (const auto& e : row) {
          sum += e.prob;
          EXPECT_GE(e.to.c[0], 0);
          EXPECT_GE(e.to.c[1], 0);
          EXPECT_GE(e.to.c[2], 0);
        }
        ASSERT_NEAR(sum, 1.0, 1e-15);
      }
  }
}

TEST(ProportionKernelRow, LumpingConsistencyExact) {
  // The enumerated one-step count law of the configuration chain equals the
  // kernel row, for random configurations and several p.
  Rng rng(19);
  for (double p : {0.3, 0.5, 0.8}) {
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 1 + static_cast<int>(rng.next_below(12));
      std::vector<Color> colors(static_cast<std::size_t>(n));
      for (auto& c : colors) c = static_cast<Color>(rng.next_below(3));
      const Configuration cfg{colors};
      const auto oracle = enumerate_count_step(cfg, p);
      const auto row = proportion_kernel_row(counts_of(cfg), ChainParams(n, p));
      std::map<std::array<std::int64_t, 3>, double> got;
      for (const auto& e : row) got[e.to.c] += e.prob;
      ASSERT_EQ(got.size(), oracle.size());
      for (const auto& [state, prob] : oracle) ASSERT_NEAR(got.at(state), prob, 1e-15);
    }
  }
}

TEST(StepConfiguration, PermutationEquivariance) {
  // Relabeling vertices commutes with the step in distribution.
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(4));  // n <= 5
    std::vector<Color> colors(static_cast<std::size_t>(n));
    for (auto& c : colors) c = static_cast<Color>(rng.next_below(3));
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) perm[static_cast<std::size_t>(v)] = v;
    for (int v = n - 1; v > 0; --v)
      std::swap(perm[static_cast<std::size_t>(v)], perm[rng.next_below(static_cast<std::uint64_t>(v + 1))]);
    const auto apply_perm = [&](const std::vector<Color>& cs) {
      std::vector<Color> out(cs.size());
      for (int v = 0; v < n; ++v) out[static_cast<std::size_t>(perm[static_cast<std::size_t>(v)])] = cs[static_cast<std::size_t>(v)];
      return out;
    };
    const Configuration cfg{colors};
    const Configuration permuted{apply_perm(colors)};
    std::map<std::vector<Color>, double> lhs;
    for (const auto& [cs, prob] : enumerate_config_step(cfg, 0.5)) lhs[apply_perm(cs)] += prob;
    const auto rhs = enumerate_config_step(permuted, 0.5);
    ASSERT_EQ(lhs.size(), rhs.size());
    for (const auto& [cs, prob] : rhs) ASSERT_NEAR(lhs.at(cs), prob, 1e-15);
  }
}

TEST(StepConfiguration, CyclicColorEquivariance) {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(5));
    std::vector<Color> colors(static_cast<std::size_t>(n));
    for (auto& c : colors) c = static_cast<Color>(rng.next_below(3));
    const auto rotate = [&](const std::vector<Color>& cs) {
      std::vector<Color> out(cs.size());
      for (std::size_t v = 0; v < cs.size(); ++v) out[v] = next_color(cs[v]);
      return out;
    };
    const Configuration cfg{colors};
    const Configuration rotated{rotate(colors)};
    std::map<std::vector<Color>, double> lhs;
    for (const auto& [cs, prob] : enumerate_config_step(cfg, 0.5)) lhs[rotate(cs)] += prob;
    const auto rhs = enumerate_config_step(rotated, 0.5);
    ASSERT_EQ(lhs.size(), rhs.size());
    for (const auto& [cs, prob] : rhs) ASSERT_NEAR(lhs.at(cs), prob, 1e-15);
  }
}

TEST(BasketCounts, MonochromaticAndDiagonalExamples) {
  const auto part = BasketPartition::equal_thirds(6);
  const auto mono = basket_counts(Configuration::monochromatic(6, 0), part);
  for (int m = 0; m < 3; ++m) {
    EXPECT_EQ(mono.counts[static_cast<std::size_t>(m)][0], part.sizes[static_cast<std::size_t>(m)]);
    EXPECT_EQ(mono.counts[static_cast<std::size_t>(m)][1], 0);
    EXPECT_EQ(mono.counts[static_cast<std::size_t>(m)][2], 0);
  }
  const BasketPartition singles{std::vector<int>{0, 1, 2}};
  const auto diag = basket_counts(Configuration::from_labels({1, 2, 3}), singles);
  for (int m = 0; m < 3; ++m)
    for (int k = 0; k < 3; ++k)
      EXPECT_EQ(diag.counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)], m == k ? 1 : 0);
}

TEST(BasketCounts, ColumnSumsReproduceCounts) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.next_below(20));
    std::vector<Color> colors(static_cast<std::size_t>(n));
    for (auto& c : colors) c = static_cast<Color>(rng.next_below(3));
    std::vector<int> assign(static_cast<std::size_t>(n));
    for (auto& m : assign) m = static_cast<int>(rng.next_below(3));
    const Configuration cfg{colors};
    const BasketPartition part{assign};
    const auto bc = basket_counts(cfg, part);
    EXPECT_EQ(bc.column_sums(), counts_of(cfg).c);
    const auto rows = bc.row_sums();
    for (int m = 0; m < 3; ++m) EXPECT_EQ(rows[static_cast<std::size_t>(m)], part.sizes[static_cast<std::size_t>(m)]);
  }
}

TEST(QDeviation, ZeroWhenBasketsMatchGlobal) {
  // Every basket's color proportions equal the global proportions.
  const auto cfg = Configuration::from_labels({1, 2, 3, 1, 2, 3, 1, 2, 3});
  const BasketPartition part{std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 2}};
  const auto q = q_deviation(basket_counts(cfg, part), counts_of(cfg));
  for (int m = 0; m < 3; ++m)
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(q[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)], 0.0, 1e-15);
}

TEST(QDeviation, RowsSumToZeroAndExample) {
  const auto cfg = Configuration::from_labels({1, 1, 2, 2, 3, 3});
  const BasketPartition part{std::vector<int>{0, 0, 1, 1, 2, 2}};
  const auto q = q_deviation(basket_counts(cfg, part), counts_of(cfg));
  EXPECT_NEAR(q[0][0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(q[0][1], -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(q[0][2], -1.0 / 3.0, 1e-15);
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.next_below(20));
    std::vector<Color> colors(static_cast<std::size_t>(n));
    for (auto& c : colors) c = static_cast<Color>(rng.next_below(3));
    std::vector<int> assign(static_cast<std::size_t>(n));
    // Keep baskets non-empty.
    for (int v = 0; v < n; ++v) assign[static_cast<std::size_t>(v)] = v < 3 ? v : static_cast<int>(rng.next_below(3));
    const Configuration cfg2{colors};
    const auto q2 = q_deviation(basket_counts(cfg2, BasketPartition{assign}), counts_of(cfg2));
    for (int m = 0; m < 3; ++m)
      EXPECT_NEAR(q2[static_cast<std::size_t>(m)][0] + q2[static_cast<std::size_t>(m)][1] + q2[static_cast<std::size_t>(m)][2], 0.0, 1e-15);
  }
}

TEST(QDeviation, InconsistentInputsRejected) {
  const auto cfg = Configuration::from_labels({1, 1, 2});
  const BasketPartition part{std::vector<int>{0, 1, 2}};
  const auto bc = basket_counts(cfg, part);
  EXPECT_THROW(q_deviation(bc, CountVector(3, 1, 1, 1)), std::invalid_argument);
}

TEST(CountVector, CenteredNormsRange) {
  const CountVector mono(9, 9, 0, 0);
  EXPECT_NEAR(mono.centered_norms().l2sq, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(mono.centered_norms().linf, 2.0 / 3.0, 1e-15);
  const CountVector center(9, 3, 3, 3);
  EXPECT_NEAR(center.centered_norms().l2sq, 0.0, 1e-15);
}

}  // namespace
