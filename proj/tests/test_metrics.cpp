#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "cmi/error.hpp"
#include "cmi/metrics.hpp"
#include "metric_oracles.hpp"

using namespace cmi::metrics;
namespace oracle = cmi::oracle;

namespace {

using Vec = std::vector<double>;

MapView<double> view(const Vec& v, std::size_t rows, std::size_t cols) {
  return MapView<double>(std::span<const double>(v), rows, cols);
}

// Quantised prediction levels k/255 and a mixed binary mask.
std::pair<Vec, Vec> random_quantized(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> level(0, 255);
  std::bernoulli_distribution fg(0.4);
  Vec p(n), g(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = level(rng) / 255.0;
    g[i] = fg(rng) ? 1.0 : 0.0;
  }
  return {p, g};
}

Vec random_mask(std::mt19937_64& rng, std::size_t n, double ratio) {
  std::bernoulli_distribution fg(ratio);
  Vec g(n);
  for (auto& v : g) v = fg(rng) ? 1.0 : 0.0;
  return g;
}

}  // namespace

TEST(Mae, HandCases) {
  Vec g{1, 0, 1, 0};
  EXPECT_EQ(mae(view(g, 2, 2), view(g, 2, 2)), 0.0);
  Vec ones(4, 1.0), zeros(4, 0.0);
  EXPECT_EQ(mae(view(ones, 2, 2), view(zeros, 2, 2)), 1.0);
  Vec quarter(4, 0.25);
  EXPECT_EQ(mae(view(quarter, 2, 2), view(g, 2, 2)), 0.5);
}

TEST(Mae, ShapeMismatchIsContractError) {
  Vec a(4, 0.0), b(4, 0.0);
  try {
    mae(view(a, 2, 2), view(b, 1, 4));
    FAIL();
  } catch (const cmi::Error& e) {
    EXPECT_EQ(e.kind(), cmi::ErrorKind::kContract);
  }
}

TEST(FMeasure, WorkedExample) {
  Vec p{1, 0, 0, 0}, g{1, 1, 0, 0};
  const double f_pos = 1.3 * 0.5 / (0.3 + 0.5);
  const double f_zero = 1.3 * 0.5 / (0.3 * 0.5 + 1.0);
  EXPECT_NEAR(f_pos, 0.8125, 1e-12);
  EXPECT_NEAR(f_zero, 0.5652, 1e-4);
  const auto f = mean_f_measure(view(p, 2, 2), view(g, 2, 2));
  ASSERT_TRUE(f.has_value());
  EXPECT_NEAR(*f, (255 * f_pos + f_zero) / 256, 1e-12);
  EXPECT_NEAR(*f, 0.8115, 1e-4);
}

TEST(FMeasure, HandCases) {
  Vec ones(9, 1.0);
  EXPECT_NEAR(*mean_f_measure(view(ones, 3, 3), view(ones, 3, 3)), 1.0, 1e-12);
  Vec zeros(9, 0.0), g{1, 1, 0, 0, 0, 0, 0, 0, 0};
  // only the t = 0 threshold predicts anything
  const double f0 = 1.3 * (2.0 / 9) * 1.0 / (0.3 * (2.0 / 9) + 1.0);
  EXPECT_NEAR(*mean_f_measure(view(zeros, 3, 3), view(g, 3, 3)), f0 / 256, 1e-12);
  EXPECT_FALSE(mean_f_measure(view(ones, 3, 3), view(zeros, 3, 3)).has_value());
}

TEST(EMeasure, DegenerateRules) {
  Vec ones(4, 1.0), zeros(4, 0.0);
  EXPECT_NEAR(mean_e_measure(view(ones, 2, 2), view(ones, 2, 2)), 1.0, 1e-12);
  EXPECT_NEAR(mean_e_measure(view(zeros, 2, 2), view(zeros, 2, 2)), 255.0 / 256, 1e-12);
  // gt all ones, B all zeros for every t > 0
  EXPECT_NEAR(mean_e_measure(view(zeros, 2, 2), view(ones, 2, 2)), 1.0 / 256, 1e-12);
}

TEST(EMeasure, IdenticalBinaryAlignsPerfectly) {
  Vec g{1, 0, 0, 1, 1, 0};
  for (int i = 1; i <= 255; ++i) {
    EXPECT_NEAR(oracle::e_at_threshold(g, g, i / 255.0), 1.0, 1e-7);
  }
  const double e0 = oracle::e_at_threshold(g, g, 0.0);
  EXPECT_NEAR(mean_e_measure(view(g, 2, 3), view(g, 2, 3)), (255 * oracle::e_at_threshold(g, g, 0.5) + e0) / 256,
              1e-12);
}

TEST(FAndE, MatchThresholdSweepOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    auto [p, g] = random_quantized(rng, 16);
    const auto f = mean_f_measure(view(p, 4, 4), view(g, 4, 4));
    const auto fo = oracle::mean_f(p, g);
    ASSERT_EQ(f.has_value(), fo.has_value());
    if (f) EXPECT_NEAR(*f, *fo, 1e-9) << "trial " << trial;
    EXPECT_NEAR(mean_e_measure(view(p, 4, 4), view(g, 4, 4)), oracle::mean_e(p, g), 1e-9)
        << "trial " << trial;
  }
}

TEST(FAndE, QuarterLevelsMatchOracle) {
  std::mt19937_64 rng(2025);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    Vec p(16), g = random_mask(rng, 16, 0.5);
    for (auto& v : p) v = level(rng) / 4.0;
    const auto f = mean_f_measure(view(p, 4, 4), view(g, 4, 4));
    const auto fo = oracle::mean_f(p, g);
    ASSERT_EQ(f.has_value(), fo.has_value());
    if (f) EXPECT_NEAR(*f, *fo, 1e-9) << "trial " << trial;
    EXPECT_NEAR(mean_e_measure(view(p, 4, 4), view(g, 4, 4)), oracle::mean_e(p, g), 1e-9);
  }
}

TEST(FAndE, UnquantisedValuesAlsoMatchOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    Vec p(25), g = random_mask(rng, 25, 0.3);
    for (auto& v : p) v = u(rng);
    g[0] = 1;
    EXPECT_NEAR(*mean_f_measure(view(p, 5, 5), view(g, 5, 5)), *oracle::mean_f(p, g), 1e-9);
    EXPECT_NEAR(mean_e_measure(view(p, 5, 5), view(g, 5, 5)), oracle::mean_e(p, g), 1e-9);
  }
}

TEST(FAndE, PixelPermutationInvariant) {
  std::mt19937_64 rng(8);
  auto [p, g] = random_quantized(rng, 16);
  std::vector<std::size_t> idx(16);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Vec pp(16), gp(16);
  for (std::size_t i = 0; i < 16; ++i) {
    pp[i] = p[idx[i]];
    gp[i] = g[idx[i]];
  }
  EXPECT_NEAR(mean_e_measure(view(p, 4, 4), view(g, 4, 4)),
              mean_e_measure(view(pp, 4, 4), view(gp, 4, 4)), 1e-12);
  EXPECT_NEAR(*mean_f_measure(view(p, 4, 4), view(g, 4, 4)),
              *mean_f_measure(view(pp, 2, 8), view(gp, 2, 8)), 1e-12);
  EXPECT_NEAR(mae(view(p, 4, 4), view(g, 4, 4)), mae(view(pp, 4, 4), view(gp, 4, 4)), 1e-12);
}

TEST(SMeasure, Fallbacks) {
  Vec zeros(16, 0.0), ones(16, 1.0), third(16, 0.3);
  EXPECT_EQ(s_measure(view(zeros, 4, 4), view(zeros, 4, 4)), 1.0);
  EXPECT_EQ(s_measure(view(ones, 4, 4), view(ones, 4, 4)), 1.0);
  EXPECT_NEAR(s_measure(view(third, 4, 4), view(zeros, 4, 4)), 0.7, 1e-15);
  EXPECT_NEAR(s_measure(view(third, 4, 4), view(ones, 4, 4)), 0.3, 1e-15);
}

TEST(SMeasure, BinaryPredEqualsGtGivesOne) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_mask(rng, 12 * 9, 0.35);
    g[5] = 1;
    g[6] = 0;
    EXPECT_NEAR(s_measure(view(g, 12, 9), view(g, 12, 9)), 1.0, 1e-6) << "trial " << trial;
  }
}

TEST(SMeasure, MatchesBlockwiseOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 3 + trial % 7, cols = 4 + trial % 5;
    auto g = random_mask(rng, rows * cols, 0.2 + 0.01 * trial);
    g[0] = 1;
    g[rows * cols - 1] = 0;
    Vec p(rows * cols);
    for (auto& v : p) v = u(rng);
    const double s = s_measure(view(p, rows, cols), view(g, rows, cols));
    EXPECT_NEAR(s, oracle::s_measure(oracle::to_grid(p, rows, cols), oracle::to_grid(g, rows, cols)),
                1e-12)
        << "trial " << trial;
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(SMeasure, PerfectBeatsDegraded) {
  std::mt19937_64 rng(12);
  auto g = random_mask(rng, 64, 0.4);
  Vec noisy(g);
  for (std::size_t i = 0; i < noisy.size(); i += 3) noisy[i] = 1 - noisy[i];
  EXPECT_GT(s_measure(view(g, 8, 8), view(g, 8, 8)), s_measure(view(noisy, 8, 8), view(g, 8, 8)));
}

TEST(Metrics, ComplementIdentities) {
  std::mt19937_64 rng(13);
  auto [p, g] = random_quantized(rng, 16);
  Vec pc(16), gc(16);
  for (std::size_t i = 0; i < 16; ++i) {
    pc[i] = 1 - p[i];
    gc[i] = 1 - g[i];
  }
  EXPECT_NEAR(mae(view(p, 4, 4), view(g, 4, 4)), mae(view(pc, 4, 4), view(gc, 4, 4)), 1e-12);
}

TEST(Metrics, MaeMonotoneInDistance) {
  Vec g{1, 1, 0, 0};
  double prev = -1;
  for (double d = 0.0; d <= 1.0; d += 0.1) {
    Vec p{1 - d, 1 - d, d, d};
    const double m = mae(view(p, 2, 2), view(g, 2, 2));
    EXPECT_GT(m, prev);
    prev = m;
  }
}

TEST(FMeasure, DroppingForegroundNeverHelps) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_mask(rng, 36, 0.4);
    g[0] = 1;
    Vec p(g);
    double prev = *mean_f_measure(view(p, 6, 6), view(g, 6, 6));
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] != 1.0) continue;
      p[i] = 0.0;
      const double f = *mean_f_measure(view(p, 6, 6), view(g, 6, 6));
      EXPECT_LE(f, prev + 1e-12);
      prev = f;
    }
  }
}

TEST(CosineDiag, Cases) {
  Vec a{1, 2, 3}, neg{-1, -2, -3}, o1{1, 0, 0}, o2{0, 4, 0};
  EXPECT_NEAR(*cosine_diag<double>(a, a, 3).value, 1.0, 1e-12);
  EXPECT_NEAR(*cosine_diag<double>(a, neg, 3).value, 1.0, 1e-12);
  EXPECT_NEAR(*cosine_diag<double>(o1, o2, 3).value, 0.0, 1e-12);

  Vec batch_a{1, 0, 0, 0, 0, 0, 1, 1, 0};
  Vec batch_g{1, 0, 0, 1, 1, 1, 0, 1, 1};
  auto d = cosine_diag<double>(batch_a, batch_g, 3);
  EXPECT_EQ(d.used, 2u);
  EXPECT_EQ(d.skipped, 1u);
  EXPECT_NEAR(*d.value, (1.0 + 0.5) / 2, 1e-12);

  Vec z(3, 0.0);
  auto all_skipped = cosine_diag<double>(z, a, 3);
  EXPECT_FALSE(all_skipped.value.has_value());
  EXPECT_EQ(all_skipped.skipped, 1u);
  EXPECT_THROW(cosine_diag<double>(a, Vec{1, 2}, 3), cmi::Error);
}
