#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sos/scheduler_core.hpp"

using sos::PathParams;
using sos::SplitVector;

namespace {

PathParams path(double mu, double w, double prop = 0.0, std::uint64_t in_flight = 0) {
  PathParams p;
  p.mu_ms = mu;
  p.w = w;
  p.prop_ms = prop;
  p.in_flight = in_flight;
  return p;
}

}  // namespace

TEST(ComputeW, EpsilonOneGivesZero) { EXPECT_EQ(sos::compute_w(1.0, 1.0, 9.0), 0.0); }

TEST(ComputeW, ZeroRangeGivesZero) { EXPECT_EQ(sos::compute_w(0.025, 7.0, 7.0), 0.0); }

TEST(ComputeW, HandEvaluation) {
  // -ln(0.025) = 3.6888794541, (5-1)^2 / 2 = 8.
  EXPECT_NEAR(sos::compute_w(0.025, 1.0, 5.0), std::sqrt(3.6888794541139363 * 8.0), 1e-12);
  EXPECT_NEAR(sos::compute_w(0.025, 1.0, 5.0), 5.4324, 1e-4);
}

TEST(ComputeW, Errors) {
  EXPECT_THROW(sos::compute_w(0.0, 1.0, 2.0), sos::DomainError);
  EXPECT_THROW(sos::compute_w(-0.1, 1.0, 2.0), sos::DomainError);
  EXPECT_THROW(sos::compute_w(0.5, 3.0, 2.0), sos::ValidationError);
}

TEST(TUpper, Examples) {
  EXPECT_EQ(sos::t_upper(0, 0, path(3.0, 2.0)), 0.0);
  EXPECT_DOUBLE_EQ(sos::t_upper(10, 5, path(2.0, 0.0)), 30.0);
  EXPECT_NEAR(sos::t_upper(100, 0, path(10.0, 5.4324)), 1054.324, 1e-9);
}

TEST(TUpper, ExcludesPropagation) { EXPECT_DOUBLE_EQ(sos::t_upper(4, 0, path(2.0, 0.0, 100.0)), 8.0); }

TEST(DUpper, Examples) {
  const std::vector<PathParams> two{path(10, 0, 5), path(1, 0, 0)};
  EXPECT_DOUBLE_EQ(sos::d_upper(SplitVector{{3, 50}, 53}, two), 50.0);
  const std::vector<PathParams> one{path(2, 0, 1)};
  EXPECT_DOUBLE_EQ(sos::d_upper(SplitVector{{4}, 4}, one), 9.0);
  const std::vector<PathParams> props{path(3, 1, 7), path(1, 2, 11)};
  EXPECT_DOUBLE_EQ(sos::d_upper(SplitVector{{0, 0}, 0}, props), 11.0);
}

TEST(DUpper, LengthMismatch) {
  const std::vector<PathParams> two{path(1, 0), path(1, 0)};
  EXPECT_THROW(sos::d_upper(SplitVector{{1}, 1}, two), sos::ValidationError);
}

TEST(SolveRelaxed, Symmetric) {
  const std::vector<PathParams> p{path(3, 2, 1), path(3, 2, 1)};
  const auto x = sos::solve_relaxed(10, p);
  EXPECT_NEAR(x[0], 5.0, 1e-9);
  EXPECT_NEAR(x[1], 5.0, 1e-9);
}

TEST(SolveRelaxed, LinearEqualization) {
  const std::vector<PathParams> p{path(1, 0), path(2, 0)};
  const auto x = sos::solve_relaxed(30, p);
  EXPECT_NEAR(x[0], 20.0, 1e-9);
  EXPECT_NEAR(x[1], 10.0, 1e-9);
}

TEST(SolveRelaxed, LongPropagationPathUnused) {
  const std::vector<PathParams> p{path(1, 0, 0), path(1, 0, 100)};
  const auto x = sos::solve_relaxed(10, p);
  EXPECT_NEAR(x[0], 10.0, 1e-9);
  EXPECT_EQ(x[1], 0.0);
}

TEST(SolveRelaxed, AllZeroCostIsDegenerate) {
  const std::vector<PathParams> p{path(0, 0, 1), path(0, 0, 2)};
  EXPECT_THROW(sos::solve_relaxed(5, p), sos::DegenerateInputError);
  EXPECT_THROW(sos::solve_integer(5, p), sos::DegenerateInputError);
}

TEST(SolveRelaxed, SumsToN) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + trial % 3;
    std::vector<PathParams> p;
    for (std::size_t j = 0; j < m; ++j) p.push_back(oracle::random_path(rng));
    const std::uint64_t n = 1 + rng() % 500;
    const auto x = sos::solve_relaxed(n, p);
    double sum = 0.0;
    for (double v : x) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, static_cast<double>(n), 1e-9 * static_cast<double>(n));
  }
}

TEST(SolveInteger, DominantPath) {
  const std::vector<PathParams> p{path(1, 0), path(100, 0)};
  const auto s = sos::solve_integer(10, p);
  EXPECT_EQ(s.counts, (std::vector<std::uint64_t>{10, 0}));
  EXPECT_DOUBLE_EQ(sos::d_upper(s, p), 10.0);
}

TEST(SolveInteger, IdenticalDeterministicPaths) {
  const std::vector<PathParams> p{path(1, 0), path(1, 0)};
  const auto s = sos::solve_integer(10, p);
  EXPECT_EQ(s.counts, (std::vector<std::uint64_t>{5, 5}));
  EXPECT_DOUBLE_EQ(sos::d_upper(s, p), 5.0);
}

TEST(SolveInteger, TieGoesToLowerIndex) {
  const std::vector<PathParams> p{path(1, 0), path(1, 0)};
  EXPECT_EQ(sos::solve_integer(11, p).counts, (std::vector<std::uint64_t>{6, 5}));
  const std::vector<PathParams> three{path(1, 0), path(1, 0), path(1, 0)};
  EXPECT_EQ(sos::solve_integer(7, three).counts, (std::vector<std::uint64_t>{3, 3, 1}));
}

TEST(SolveInteger, ZeroObjectAndSinglePath) {
  const std::vector<PathParams> p{path(1, 0, 3), path(2, 1, 4)};
  const auto s = sos::solve_integer(0, p);
  EXPECT_EQ(s.counts, (std::vector<std::uint64_t>{0, 0}));
  EXPECT_DOUBLE_EQ(sos::d_upper(s, p), 4.0);
  const std::vector<PathParams> one{path(2, 1)};
  EXPECT_EQ(sos::solve_integer(9, one).counts, (std::vector<std::uint64_t>{9}));
}

TEST(SolveInteger, ZeroCostPathTakesEverything) {
  const std::vector<PathParams> p{path(1, 0, 0), path(0, 0, 5)};
  const auto s = sos::solve_integer(10, p);
  const auto best = oracle::exhaustive(10, p);
  EXPECT_EQ(sos::d_upper(s, p), best.value);
  EXPECT_EQ(s.counts, best.counts);
}

TEST(SolveInteger, MatchesExhaustiveTwoPaths) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::vector<PathParams> p{oracle::random_path(rng), oracle::random_path(rng)};
    const std::uint64_t n = 1 + rng() % 200;
    const auto s = sos::solve_integer(n, p);
    const auto best = oracle::exhaustive(n, p);
    ASSERT_EQ(sos::d_upper(s, p), best.value) << "trial " << trial;
    ASSERT_EQ(s.counts, best.counts) << "trial " << trial;
  }
}

TEST(SolveInteger, MatchesExhaustiveThreeAndFourPaths) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t m = trial % 2 == 0 ? 3 : 4;
    std::vector<PathParams> p;
    for (std::size_t j = 0; j < m; ++j) p.push_back(oracle::random_path(rng));
    const std::uint64_t n = 1 + rng() % (m == 3 ? 40 : 16);
    const auto s = sos::solve_integer(n, p);
    const auto best = oracle::exhaustive(n, p);
    ASSERT_EQ(sos::d_upper(s, p), best.value) << "trial " << trial;
    ASSERT_EQ(s.counts, best.counts) << "trial " << trial;
  }
}

TEST(SolveInteger, IdenticalPathsTieBreakAgainstExhaustive) {
  for (std::uint64_t n = 1; n <= 20; ++n) {
    const std::vector<PathParams> p{path(2, 3, 1), path(2, 3, 1), path(2, 3, 1)};
    EXPECT_EQ(sos::solve_integer(n, p).counts, oracle::exhaustive(n, p).counts) << n;
  }
}

TEST(SolveInteger, NeverWorseThanRoundingCorners) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + trial % 3;
    std::vector<PathParams> p;
    for (std::size_t j = 0; j < m; ++j) p.push_back(oracle::random_path(rng));
    const std::uint64_t n = 1 + rng() % 300;
    const auto s = sos::solve_integer(n, p);
    std::optional<SplitVector> corner;
    try {
      corner = sos::best_rounding_corner(n, p);
    } catch (const sos::InfeasibleError&) {
    }
    if (corner) {
      EXPECT_LE(sos::d_upper(s, p), sos::d_upper(*corner, p));
    }
  }
}

TEST(SolveInteger, BisectionEvaluationCount) {
  std::mt19937_64 rng(14);
  for (std::uint64_t n : {1ULL, 2ULL, 3ULL, 10ULL, 999ULL, 65535ULL, 1000000ULL}) {
    for (int trial = 0; trial < 20; ++trial) {
      const std::vector<PathParams> p{oracle::random_path(rng), oracle::random_path(rng)};
      sos::SolveStats stats;
      sos::solve_integer(n, p, stats);
      const auto limit = 2 * static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n + 1)))) + 4;
      EXPECT_LE(stats.bound_evaluations, limit) << n;
    }
  }
}

TEST(SolveInteger, MonotoneInObjectSize) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + trial % 3;
    std::vector<PathParams> p;
    for (std::size_t j = 0; j < m; ++j) p.push_back(oracle::random_path(rng));
    double prev = sos::d_upper(sos::solve_integer(1, p), p);
    for (std::uint64_t n = 2; n <= 120; ++n) {
      const double cur = sos::d_upper(sos::solve_integer(n, p), p);
      EXPECT_GE(cur, prev);
      prev = cur;
    }
  }
}

TEST(SolveInteger, ScaleCovariance) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + trial % 3;
    std::vector<PathParams> p;
    for (std::size_t j = 0; j < m; ++j) p.push_back(oracle::random_path(rng));
    const std::uint64_t n = 1 + rng() % 400;
    const double c = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
    auto scaled = p;
    for (auto& q : scaled) {
      q.mu_ms *= c;
      q.w *= c;
      q.prop_ms *= c;
    }
    const auto s = sos::solve_integer(n, p);
    const auto t = sos::solve_integer(n, scaled);
    const double ds = sos::d_upper(s, p);
    EXPECT_NEAR(sos::d_upper(t, scaled), c * ds, 1e-9 * c * ds);
    // The scaled argmin is optimal for the original instance too.
    EXPECT_NEAR(sos::d_upper(t, p), ds, 1e-9 * ds);
  }
}

TEST(SolveInteger, PowerOfTwoScalingKeepsSplit) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PathParams> p{oracle::random_path(rng), oracle::random_path(rng), oracle::random_path(rng)};
    auto scaled = p;
    for (auto& q : scaled) {
      q.mu_ms *= 4.0;
      q.w *= 4.0;
      q.prop_ms *= 4.0;
    }
    const std::uint64_t n = 1 + rng() % 400;
    EXPECT_EQ(sos::solve_integer(n, p).counts, sos::solve_integer(n, scaled).counts);
  }
}

TEST(WardropEqualization, UsedPathsShareOneLevel) {
  std::mt19937_64 rng(18);
  int checked = 0;
  while (checked < 100) {
    const std::size_t m = 2 + static_cast<std::size_t>(rng() % 3);
    std::vector<PathParams> p;
    for (std::size_t j = 0; j < m; ++j) p.push_back(oracle::random_path(rng));
    const auto x = sos::solve_relaxed(10000, p);
    if (std::any_of(x.begin(), x.end(), [](double v) { return v <= 0.0; })) continue;
    std::vector<double> level;
    for (std::size_t j = 0; j < m; ++j) {
      level.push_back(x[j] * p[j].mu_ms + std::sqrt(x[j]) * p[j].w + p[j].prop_ms);
    }
    const auto [lo, hi] = std::minmax_element(level.begin(), level.end());
    EXPECT_LE(*hi - *lo, 1e-6 * *hi);
    ++checked;
  }
}

TEST(SplitObject, NoBacklogMatchesSolveInteger) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PathParams> p{oracle::random_path(rng), oracle::random_path(rng), oracle::random_path(rng)};
    const std::uint64_t n = 1 + rng() % 100;
    EXPECT_EQ(sos::split_object(n, p), sos::solve_integer(n, p));
  }
}

TEST(SplitObject, OffsetEqualization) {
  const std::vector<PathParams> p{path(1, 0, 0, 4), path(1, 0, 0, 0)};
  EXPECT_EQ(sos::split_object(6, p).counts, (std::vector<std::uint64_t>{1, 5}));
}

TEST(SplitObject, LargeBacklogStarvesPath) {
  const std::vector<PathParams> p{path(1, 2, 0, 1000), path(3, 4, 0, 0)};
  const auto s = sos::split_object(50, p);
  EXPECT_EQ(s.counts, (std::vector<std::uint64_t>{0, 50}));
  const auto best = oracle::exhaustive(50, p, true);
  EXPECT_EQ(s.counts, best.counts);
}

TEST(SplitObject, MatchesExhaustiveWithBacklog) {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 600; ++trial) {
    const std::size_t m = 2 + trial % 2;
    std::vector<PathParams> p;
    for (std::size_t j = 0; j < m; ++j) {
      auto q = oracle::random_path(rng);
      q.in_flight = rng() % 60;
      p.push_back(q);
    }
    const std::uint64_t n = 1 + rng() % 60;
    const auto s = sos::split_object(n, p);
    const auto best = oracle::exhaustive(n, p, true);
    ASSERT_EQ(sos::d_upper_with_backlog(s, p), best.value) << trial;
    ASSERT_EQ(s.counts, best.counts) << trial;
  }
}

TEST(SchedulerConfig, EpsilonPerPath) {
  sos::SchedulerConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.epsilon_per_path(2), 0.025);
}
