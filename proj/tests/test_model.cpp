#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"
#include "tipas/model.hpp"

using namespace tipas;
using namespace tipas::testing;

namespace {

ModelParams one_action(int mixtures = 1) { return ModelParams::zeros(small_structure(1, mixtures), {"u"}); }

}  // namespace

TEST(TimeOfDay, WrapsModuloDay) {
  EXPECT_DOUBLE_EQ(time_of_day(0.0), 0.0);
  EXPECT_DOUBLE_EQ(time_of_day(25.5), 1.5);
  EXPECT_NEAR(time_of_day(47.999), 23.999, 1e-12);
  EXPECT_THROW(time_of_day(std::nan("")), Error);
}

TEST(TodCategory, DefaultWindows) {
  const auto s = small_structure(1, 1);
  EXPECT_EQ(tod_category(3.0, s), 0);
  EXPECT_EQ(tod_category(12.0, s), 2);
  EXPECT_EQ(tod_category(30.0, s), 1);
  EXPECT_EQ(tod_category(23.9999, s), 3);
  EXPECT_EQ(tod_category(24.0, s), 0);
}

TEST(ModelStructure, WindowsMustTileTheDay) {
  auto s = small_structure(1, 1);
  s.tod_windows = {{0, 6}, {7, 24}};
  EXPECT_THROW(s.validate(), Error);
  s.tod_windows = {{0, 12}, {10, 24}};
  EXPECT_THROW(s.validate(), Error);
  s.tod_windows = {{0, 12}, {12, 23}};
  EXPECT_THROW(s.validate(), Error);
  s.tod_windows = {{0, 24}};
  EXPECT_NO_THROW(s.validate());
  s.n_mixtures = 0;
  EXPECT_THROW(s.validate(), Error);
}

TEST(ModelParams, ValidateRejectsBadSigns) {
  auto p = one_action();
  EXPECT_NO_THROW(p.validate());
  p.theta(0, 0) = -0.1;
  EXPECT_THROW(p.validate(), Error);
  p = one_action();
  p.sigma(0, 0) = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = one_action();
  p.kappa(0, 0) = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = one_action();
  p.mu(0, 0) = 24.0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(ModelParams, ColdStartUsersHaveZeroPreference) {
  auto p = ModelParams::zeros(small_structure(2, 1), {"alice", "bob"});
  p.alpha(1, 1) = 0.7;
  EXPECT_EQ(p.user_slot("bob"), 1);
  EXPECT_EQ(p.user_slot("carol"), kColdStart);
  EXPECT_DOUBLE_EQ(p.alpha_at(p.user_slot("bob"), 1), 0.7);
  EXPECT_DOUBLE_EQ(p.alpha_at(kColdStart, 1), 0.0);
}

TEST(Background, PeakValue) {
  auto p = one_action();
  p.beta(0, 0) = 1.0;
  p.mu(0, 0) = 12.0;
  p.sigma(0, 0) = 2.0;
  EXPECT_NEAR(background_intensity(p, 0, 12.0), 1.0 / std::sqrt(8.0 * std::numbers::pi), 1e-15);
  p.beta(0, 0) = 0.0;
  EXPECT_EQ(background_intensity(p, 0, 12.0), 0.0);
}

TEST(Background, TwoMixturesFarFromBoth) {
  auto p = one_action(2);
  p.beta << 1.0, 1.0;
  p.mu << 6.0, 18.0;
  p.sigma << 1.0, 1.0;
  // both components sit 6 sd away: 2 * exp(-18) / sqrt(2 pi)
  const double want = 2.0 * std::exp(-18.0) / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(background_intensity(p, 0, 12.0), want, 1e-22);
  EXPECT_NEAR(want, 1.215e-8, 1e-11);
}

TEST(Background, PeriodicWithDay) {
  Rng rng(11);
  const auto p = random_params(rng, 3, 2, {"u"});
  for (int i = 0; i < 200; ++i) {
    const double t = rng.uniform(0.0, 24.0);
    // t and t + 24 reduce to time-of-day values that differ only by rounding
    for (ActionId a = 0; a < 3; ++a)
      EXPECT_LT(rel_err(background_intensity(p, a, t + 24.0), background_intensity(p, a, t)), 1e-12);
  }
}

TEST(ShortTerm, KernelValues) {
  auto p = one_action();
  p.theta(0, 0) = 0.5;
  p.omega(0, 0) = 2.0;
  const std::vector<EventRecord> prior{{0, 1.0}};
  EXPECT_NEAR(short_term_intensity(p, prior, 0, 1.0 + 1e-12), 1.0, 1e-5);
  EXPECT_NEAR(short_term_intensity(p, prior, 0, 1.0 + std::log(2.0) / 2.0), 0.5, 1e-15);
  EXPECT_EQ(short_term_intensity(p, {}, 0, 5.0), 0.0);
}

TEST(ShortTerm, RejectsUnsortedPrefix) {
  auto p = one_action();
  const std::vector<EventRecord> prior{{0, 2.0}, {0, 1.0}};
  EXPECT_THROW(short_term_intensity(p, prior, 0, 3.0), Error);
  EXPECT_THROW(long_term_intensity(p, prior, 0, 3.0), Error);
  const std::vector<EventRecord> late{{0, 4.0}};
  EXPECT_THROW(short_term_intensity(p, late, 0, 3.0), Error);
}

TEST(LongTerm, WeibullValue) {
  auto p = one_action();
  p.phi.setConstant(1.0);
  p.gamma.setConstant(1.0);
  p.kappa.setConstant(2.0);
  const std::vector<EventRecord> prior{{0, 3.0}};
  EXPECT_NEAR(long_term_intensity(p, prior, 0, 4.0), 2.0 * std::exp(-1.0), 1e-15);
}

TEST(LongTerm, OtherActionsDoNotContribute) {
  auto p = ModelParams::zeros(small_structure(2, 1), {"u"});
  p.phi.setConstant(1.0);
  p.gamma.setConstant(1.0);
  const std::vector<EventRecord> prior{{1, 3.0}};
  EXPECT_EQ(long_term_intensity(p, prior, 0, 4.0), 0.0);
  EXPECT_GT(long_term_intensity(p, prior, 1, 4.0), 0.0);
}

TEST(LongTerm, CategoryComesFromTriggeringEvent) {
  auto p = one_action();
  p.gamma.setConstant(0.1);
  p.phi(1, 0) = 1.0;  // only triggers in [6, 12)
  EXPECT_GT(long_term_intensity(p, std::vector<EventRecord>{{0, 7.0}}, 0, 20.0), 0.0);
  EXPECT_EQ(long_term_intensity(p, std::vector<EventRecord>{{0, 13.0}}, 0, 20.0), 0.0);
}

TEST(LongTerm, ShapeOneMatchesExponentialKernel) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    auto p = one_action();
    const double phi = rng.uniform(0.01, 2.0), gamma = rng.uniform(0.01, 5.0);
    p.phi.setConstant(phi);
    p.gamma.setConstant(gamma);
    p.kappa.setConstant(1.0);
    p.theta(0, 0) = phi;
    p.omega(0, 0) = gamma;
    const std::vector<EventRecord> prior{{0, rng.uniform(0.0, 10.0)}};
    const double t = prior[0].t + rng.uniform(1e-3, 20.0);
    const double lt = long_term_intensity(p, prior, 0, t);
    EXPECT_LT(rel_err(lt, short_term_intensity(p, prior, 0, t)), 1e-12);
    EXPECT_LT(rel_err(lt, phi * gamma * std::exp(-gamma * (t - prior[0].t))), 1e-12);
  }
}

TEST(LongTerm, SimultaneousEventsStayFinite) {
  auto p = one_action();
  p.phi.setConstant(1.0);
  p.gamma.setConstant(1.0);
  p.kappa.setConstant(0.5);
  const std::vector<EventRecord> prior{{0, 2.0}};
  const double v = long_term_intensity(p, prior, 0, 2.0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, weibull_kernel(1.0, 1.0, 0.5, kMinDelta), 1e-12);
}

TEST(LongTerm, SteepKernelFarFromModeIsZero) {
  // 50^126 overflows a double; the kernel itself is far below the smallest denormal
  EXPECT_EQ(weibull_kernel(0.01, 100.0, 126.0, 50.0), 0.0);
  const double near_mode = weibull_kernel(0.01, 100.0, 126.0, std::pow(1.0 / 100.0, 1.0 / 126.0));
  EXPECT_GT(near_mode, 0.1);
  EXPECT_TRUE(std::isfinite(near_mode));
  auto p = one_action();
  p.phi.setConstant(0.01);
  p.gamma.setConstant(100.0);
  p.kappa.setConstant(126.0);
  const std::vector<EventRecord> prior{{0, 1.0}, {0, 60.0}};
  EXPECT_TRUE(std::isfinite(long_term_intensity(p, prior, 0, 61.0)));
}

TEST(TotalIntensity, ZeroModelAndConstant) {
  auto p = one_action();
  EXPECT_EQ(total_intensity(p, 0, {}, 0, 3.0), 0.0);
  p.alpha(0, 0) = 0.5;
  EXPECT_EQ(total_intensity(p, 0, {}, 0, 3.0), 0.5);
}

TEST(TotalIntensity, SumOfIndependentlyComputedParts) {
  auto p = one_action();
  p.alpha(0, 0) = 0.1;
  p.beta(0, 0) = 1.0;
  p.mu(0, 0) = 12.0;
  p.sigma(0, 0) = 2.0;
  p.theta(0, 0) = 0.5;
  p.omega(0, 0) = 2.0;
  p.phi.setConstant(1.0);
  p.gamma.setConstant(1.0);
  p.kappa.setConstant(2.0);
  const std::vector<EventRecord> prior{{0, 11.0}};
  const double t = 12.0;
  const double bg = 1.0 / std::sqrt(8.0 * std::numbers::pi);
  const double st = 0.5 * 2.0 * std::exp(-2.0);
  const double lt = 2.0 * std::exp(-1.0);
  EXPECT_NEAR(total_intensity(p, 0, prior, 0, t), 0.1 + bg + st + lt, 1e-14);
}

TEST(TotalIntensity, AdditiveAndNonNegativeOnRandomModels) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_params(rng, 3, 2, {"u0", "u1"});
    const auto ev = random_events(rng, 15, 3, 72.0);
    const double t = ev.back().t + rng.uniform(0.0, 10.0);
    const auto lambda = intensity_vector(p, 1, ev, t);
    for (ActionId a = 0; a < 3; ++a) {
      const double total = total_intensity(p, 1, ev, a, t);
      const double parts = p.alpha(1, a) + background_intensity(p, a, t) + short_term_intensity(p, ev, a, t) +
                           long_term_intensity(p, ev, a, t);
      EXPECT_GE(total, 0.0);
      EXPECT_TRUE(std::isfinite(total));
      EXPECT_LE(std::abs(total - parts), 1e-13 * std::max(1.0, total));
      EXPECT_LE(std::abs(lambda(a) - total), 1e-12 * std::max(1.0, total));
    }
  }
}

TEST(TotalIntensity, AppendingAnEventNeverLowersLaterIntensity) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_params(rng, 2, 1, {"u"});
    p.theta.array() += 0.01;
    p.phi.array() += 0.01;
    auto ev = random_events(rng, 8, 2, 48.0);
    const double t_new = ev.back().t + rng.uniform(0.0, 5.0);
    const double t = t_new + rng.uniform(0.0, 30.0);
    for (ActionId a = 0; a < 2; ++a) {
      const double before = total_intensity(p, 0, ev, a, t);
      auto longer = ev;
      longer.push_back({static_cast<ActionId>(trial % 2), t_new});
      EXPECT_GE(total_intensity(p, 0, longer, a, t), before);
    }
  }
}

TEST(SortHistory, StableAndCountsMoves) {
  UserHistory h{"u", {{0, 3.0}, {1, 1.0}, {2, 1.0}, {0, 2.0}}};
  EXPECT_GT(sort_history(h), 0u);
  const std::vector<EventRecord> want{{1, 1.0}, {2, 1.0}, {0, 2.0}, {0, 3.0}};
  EXPECT_EQ(h.events, want);
  EXPECT_EQ(sort_history(h), 0u);
}
