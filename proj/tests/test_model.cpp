#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "brwldp/model.hpp"

using namespace brwldp;

TEST(Offspring, BinaryNoDeath) {
  const auto law = build_offspring({0, 0.5, 0.5});
  EXPECT_DOUBLE_EQ(law.mean(), 1.5);
  EXPECT_EQ(law.extinction(), 0.0);
  EXPECT_NEAR(law.rho(), std::log(2.0), 1e-15);
  EXPECT_EQ(law.k_star(), 1);
  EXPECT_TRUE(law.schroeder());
}

TEST(Offspring, DeathOrTwins) {
  const auto law = build_offspring({0.25, 0, 0.75});
  EXPECT_DOUBLE_EQ(law.mean(), 1.5);
  EXPECT_NEAR(law.extinction(), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(law.rho(), std::log(2.0), 1e-10);
  EXPECT_EQ(law.k_star(), 2);
}

TEST(Offspring, BoettcherHasInfiniteRho) {
  const auto law = build_offspring({0, 0, 1});
  EXPECT_DOUBLE_EQ(law.mean(), 2.0);
  EXPECT_EQ(law.extinction(), 0.0);
  EXPECT_TRUE(std::isinf(law.rho()));
  EXPECT_EQ(law.k_star(), 2);
  EXPECT_FALSE(law.schroeder());
}

TEST(Offspring, RejectsBadWeights) {
  EXPECT_THROW(build_offspring({}), ModelError);
  EXPECT_THROW(build_offspring({0.5, -0.1, 0.6}), ModelError);
  EXPECT_THROW(build_offspring({0.5, 0.6}), ModelError);
  EXPECT_THROW(build_offspring({0, 1}), ModelError);
  EXPECT_THROW(build_offspring({0.2, std::nan(""), 0.8}), ModelError);
}

TEST(Offspring, SubcriticalAndCritical) {
  const auto crit = build_offspring({0.5, 0, 0.5});
  EXPECT_TRUE(crit.critical());
  EXPECT_EQ(crit.extinction(), 1.0);
  EXPECT_DOUBLE_EQ(crit.variance(), 1.0);
  EXPECT_THROW(require_supercritical(crit), ModelError);
  try {
    require_supercritical(crit);
  } catch (const ModelError& e) {
    EXPECT_EQ(e.key(), "supercritical");
  }
}

TEST(Pgf, Examples) {
  const auto a = build_offspring({0, 0.5, 0.5});
  EXPECT_DOUBLE_EQ(pgf_eval(a, 0.5), 0.375);
  EXPECT_DOUBLE_EQ(pgf_eval(a, 1.0), 1.0);
  const auto b = build_offspring({0.25, 0, 0.75});
  EXPECT_NEAR(pgf_eval(b, 1.0 / 3.0), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(pgf_eval(a, 1.5), std::domain_error);
}

TEST(Pgf, ComplementAndIncrementAgreeWithDirectEvaluation) {
  const auto law = build_offspring({0.1, 0.2, 0.3, 0.4});
  for (double u = 0.0; u <= 1.0; u += 0.0625) {
    EXPECT_NEAR(law.pgf_complement(1.0 - u), 1.0 - law.pgf(u), 1e-15);
    for (double d = 0.0; u + d <= 1.0; d += 0.125) EXPECT_NEAR(law.pgf_increment(u, d), law.pgf(u + d) - law.pgf(u), 1e-15);
  }
  // No cancellation for tiny arguments.
  EXPECT_NEAR(law.pgf_complement(1e-20) / 1e-20, law.mean(), 1e-12);
  EXPECT_NEAR(law.pgf_increment(0.0, 1e-30) / 1e-30, 0.2, 1e-12);
}

TEST(Pgf, ExtinctionIsMinimalFixedPoint) {
  for (const auto& w : {std::vector<double>{0.25, 0, 0.75}, {0.3, 0.1, 0.2, 0.4}, {0.05, 0.9, 0.05}, {0.2, 0.3, 0.0, 0.0, 0.5}}) {
    const auto law = build_offspring(w);
    const double q = law.extinction();
    EXPECT_LE(std::abs(law.pgf(q) - q), 1e-12);
    if (q > 0.0 && q < 1.0) {
      for (int i = 0; i < 1000; ++i) {
        const double u = q * i / 1000.0;
        EXPECT_GT(law.pgf(u), u);
      }
    }
  }
}

TEST(Offspring, RhoFiniteIffSchroeder) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> w(5);
    for (auto& x : w) x = unif(rng) < 0.3 ? 0.0 : unif(rng);
    if (trial % 3 == 0) w[0] = w[1] = 0.0;
    double s = 0;
    for (double x : w) s += x;
    if (s == 0.0 || w[1] == s) continue;
    for (auto& x : w) x /= s;
    const auto law = build_offspring(w);
    if (!law.supercritical()) continue;
    EXPECT_EQ(std::isfinite(law.rho()), w[0] + w[1] > 0.0) << trial;
  }
}

TEST(Cgf, Rademacher) {
  const auto r = StepLaw::rademacher();
  const auto c0 = cgf(r, 0.0);
  EXPECT_NEAR(c0.value, 0.0, 1e-15);
  EXPECT_NEAR(c0.first_derivative, 0.0, 1e-15);
  EXPECT_NEAR(c0.second_derivative, 1.0, 1e-15);
  const auto c1 = cgf(r, 1.0);
  EXPECT_NEAR(c1.value, std::log(std::cosh(1.0)), 1e-14);
  EXPECT_NEAR(c1.first_derivative, std::tanh(1.0), 1e-14);
  EXPECT_NEAR(c1.second_derivative, 1.0 - std::tanh(1.0) * std::tanh(1.0), 1e-14);
}

TEST(Cgf, Gaussian) {
  const auto g = StepLaw::gaussian(1.0);
  const auto c = cgf(g, 2.0);
  EXPECT_DOUBLE_EQ(c.value, 2.0);
  EXPECT_DOUBLE_EQ(c.first_derivative, 2.0);
  EXPECT_DOUBLE_EQ(c.second_derivative, 1.0);
  EXPECT_THROW(StepLaw::gaussian(0.0), ModelError);
}

TEST(Cgf, ConvexAtRandomLambdas) {
  const auto steps = {StepLaw::rademacher(), StepLaw::lattice({-3, 1}, {0.25, 0.75}), StepLaw::lattice({-2, 0, 5}, {0.3, 0.5, 0.2})};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lam(-40.0, 40.0);
  for (const auto& s : steps) {
    for (int i = 0; i < 10000; ++i) EXPECT_GE(s.cgf(lam(rng)).second_derivative, 0.0);
  }
}

TEST(Cgf, LatticeMatchesDirectSum) {
  const auto s = StepLaw::lattice({-2, 0, 1, 3}, {0.1, 0.4, 0.3, 0.2});
  for (double lambda = -30.0; lambda <= 30.0; lambda += 0.5) {
    long double direct = 0.0L;
    for (std::size_t j = 0; j < s.offsets().size(); ++j)
      direct += static_cast<long double>(s.probs()[j]) * std::exp(static_cast<long double>(lambda) * s.offsets()[j]);
    const double v = s.cgf(lambda).value;
    EXPECT_NEAR(v, static_cast<double>(std::log(direct)), 1e-12 * std::max(1.0, std::abs(v)));
  }
}

TEST(StepLaw, ValidationAndCentering) {
  EXPECT_THROW(StepLaw::lattice({0, 1}, {0.5, 0.6}), ModelError);
  EXPECT_THROW(StepLaw::lattice({0, 1}, {0.5}), ModelError);
  EXPECT_THROW(StepLaw::lattice({0, 0}, {0.5, 0.5}), ModelError);
  const auto s = StepLaw::lattice({0, 2}, {0.5, 0.5});
  EXPECT_DOUBLE_EQ(s.mean(), 1.0);
  const auto c = s.centered();
  EXPECT_DOUBLE_EQ(c.mean(), 0.0);
  EXPECT_EQ(c.support_min(), -1);
  const auto skew = StepLaw::lattice({0, 1}, {0.5, 0.5});
  try {
    (void)skew.centered();
    FAIL() << "non-integer mean must not be centred";
  } catch (const ModelError& e) {
    EXPECT_EQ(e.key(), "lattice");
  }
  try {
    require_lattice(StepLaw::gaussian(1.0));
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_EQ(e.key(), "lattice");
  }
}

TEST(StepLaw, ZeroProbabilityAtomsDropped) {
  const auto s = StepLaw::lattice({-1, 0, 1}, {0.5, 0.0, 0.5});
  EXPECT_EQ(s.offsets().size(), 2u);
  EXPECT_EQ(s.atom(0.0), 0.0);
  EXPECT_EQ(s.atom(1.0), 0.5);
}
