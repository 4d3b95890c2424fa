#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"
#include "tipas/em.hpp"
#include "tipas/simulate.hpp"

using namespace tipas;
using namespace tipas::testing;

namespace {

double resp_sum(const EventResponsibility& r) {
  double s = r.preference + r.background.sum();
  for (double q : r.short_term) s += q;
  for (const auto& [l, w] : r.long_term) s += w;
  return s;
}

}  // namespace

TEST(EStep, SingleSourceTakesEverything) {
  auto p = ModelParams::zeros(small_structure(1, 1), {"u"});
  p.alpha(0, 0) = 0.3;
  const auto resp = e_step(p, {{"u", {{0, 1.0}, {0, 2.0}}}});
  for (const auto& r : resp.users[0]) {
    EXPECT_EQ(r.preference, 1.0);
    EXPECT_EQ(r.background.sum(), 0.0);
  }
}

TEST(EStep, EqualSourcesSplitEvenly) {
  auto p = ModelParams::zeros(small_structure(1, 1), {"u"});
  p.alpha(0, 0) = 0.2;
  p.theta(0, 0) = 0.2 * std::exp(1.0);
  p.omega(0, 0) = 1.0;
  const auto resp = e_step(p, {{"u", {{0, 1.0}, {0, 2.0}}}});
  const auto& r = resp.users[0][1];
  EXPECT_NEAR(r.preference, 0.5, 1e-15);
  ASSERT_EQ(r.short_term.size(), 1u);
  EXPECT_NEAR(r.short_term[0], 0.5, 1e-15);
}

TEST(EStep, PreferenceAndExcitationByHand) {
  auto p = ModelParams::zeros(small_structure(1, 1), {"u"});
  p.alpha(0, 0) = 0.1;
  p.theta(0, 0) = 0.3 * std::exp(1.0);  // contributes 0.3 one hour later
  p.omega(0, 0) = 1.0;
  const auto resp = e_step(p, {{"u", {{0, 1.0}, {0, 2.0}}}});
  EXPECT_NEAR(resp.users[0][1].preference, 0.25, 1e-15);
  EXPECT_NEAR(resp.users[0][1].short_term[0], 0.75, 1e-15);
}

TEST(EStep, NormalizesOnRandomModels) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params(rng, 3, 2, {"a", "b"});
    const Dataset data{{"a", random_events(rng, 40, 3, 200.0)}, {"b", random_events(rng, 25, 3, 200.0)}};
    const auto resp = e_step(p, data);
    for (const auto& user : resp.users)
      for (const auto& r : user) {
        EXPECT_NEAR(resp_sum(r), 1.0, 1e-12);
        EXPECT_GE(r.preference, 0.0);
        EXPECT_GE(r.background.minCoeff(), 0.0);
      }
  }
}

TEST(EStep, DegenerateEventIsNamed) {
  auto p = ModelParams::zeros(small_structure(2, 1), {"u"});
  p.alpha(0, 0) = 0.1;
  p.beta.setZero();
  try {
    e_step(p, {{"u", {{0, 1.0}, {1, 2.0}}}});
    FAIL() << "expected a degenerate-event error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateEvent);
    EXPECT_NE(std::string(e.what()).find("event 1"), std::string::npos);
  }
}

TEST(MStepClosed, PreferenceRateIsCountOverHorizon) {
  auto p = ModelParams::zeros(small_structure(1, 1), {"u"});
  p.alpha(0, 0) = 0.01;
  const Dataset data{{"u", {{0, 1.0}, {0, 2.0}, {0, 3.0}, {0, 5.0}, {0, 8.0}}}};
  const auto next = m_step_closed(e_step(p, data), data, p, 10.0);
  EXPECT_DOUBLE_EQ(next.alpha(0, 0), 0.5);
}

TEST(MStepClosed, EmptyMixtureFallsToFloor) {
  auto p = ModelParams::zeros(small_structure(1, 2), {"u"});
  p.beta << 1.0, 0.0;
  const Dataset data{{"u", {{0, 10.0}, {0, 11.0}}}};
  MStepOptions opt;
  std::vector<std::string> diag;
  const auto next = m_step_closed(e_step(p, data), data, p, 24.0, opt, &diag);
  EXPECT_EQ(next.beta(0, 1), opt.param_floor);
  EXPECT_GT(next.beta(0, 0), 0.0);
}

TEST(MStepClosed, ExcitationMassOverSourceCountForLongHorizon) {
  auto p = ModelParams::zeros(small_structure(2, 1), {"u"});
  p.beta.setZero();
  p.alpha(0, 0) = 0.1;
  p.theta(0, 1) = 0.5;
  p.omega(0, 1) = 1.0;
  const Dataset data{{"u", {{0, 1.0}, {0, 2.0}, {1, 2.5}}}};
  const auto resp = e_step(p, data);
  const auto next = m_step_closed(resp, data, p, 1e9);
  // all of event 2 is attributed to the two action-0 events
  EXPECT_NEAR(next.theta(0, 1), 1.0 / 2.0, 1e-12);
}

TEST(MStepRate, DecayIsInverseLagForSingleTrigger) {
  auto p = ModelParams::zeros(small_structure(2, 1), {"u"});
  p.beta.setZero();
  p.alpha(0, 0) = 0.1;
  p.theta(0, 1) = 0.5;
  p.omega(0, 1) = 1.0;
  const Dataset data{{"u", {{0, 1.0}, {1, 3.0}}}};
  const auto next = m_step_rate(e_step(p, data), data, p, 1e6);
  EXPECT_NEAR(next.omega(0, 1), 0.5, 1e-12);
}

TEST(MStepRate, ShapeOneRecurrenceRate) {
  auto p = ModelParams::zeros(small_structure(1, 1), {"u"});
  p.beta.setZero();
  p.alpha(0, 0) = 1e-300;
  p.phi.setConstant(0.5);
  p.gamma.setConstant(0.1);
  const Dataset data{{"u", {{0, 1.0}, {0, 5.0}}}};
  // event 1 is all recurrence, event 0 all preference
  auto resp = e_step(p, data);
  ASSERT_NEAR(resp.users[0][1].long_term[0].second, 1.0, 1e-12);
  const auto next = m_step_rate(resp, data, p, 1e6);
  EXPECT_NEAR(next.gamma(0, 0), 0.25, 1e-12);
}

TEST(MStepRate, NoMassKeepsPreviousValue) {
  auto p = ModelParams::zeros(small_structure(2, 1), {"u"});
  p.alpha.setConstant(0.1);
  p.omega(1, 0) = 3.7;
  const Dataset data{{"u", {{0, 1.0}, {0, 3.0}}}};
  std::vector<std::string> diag;
  const auto next = m_step_rate(e_step(p, data), data, p, 10.0, {}, &diag);
  EXPECT_EQ(next.omega(1, 0), 3.7);
  EXPECT_FALSE(diag.empty());
}

TEST(MStepNewton, MeanMovesToConcentratedTimeOfDay) {
  auto p = ModelParams::zeros(small_structure(1, 1), {"u"});
  p.mu(0, 0) = 14.0;
  p.sigma(0, 0) = 3.0;
  p.beta(0, 0) = 1.0;
  Dataset data{{"u", {}}};
  for (int d = 0; d < 10; ++d) data[0].events.push_back({0, 24.0 * d + 10.0});
  const auto resp = e_step(p, data);
  for (int it = 0; it < 5; ++it) p = m_step_newton(resp, data, p, 240.0);
  EXPECT_NEAR(p.mu(0, 0), 10.0, 1e-6);
}

TEST(QSlices, KappaDerivativesMatchFiniteDifferences) {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    WeibullSlice s;
    for (int i = 0; i < 20; ++i) {
      s.weights.push_back(rng.uniform(0.0, 1.0));
      s.deltas.push_back(rng.uniform(0.1, 60.0));
    }
    for (int i = 0; i < 10; ++i) s.tails.push_back(rng.uniform(0.1, 200.0));
    s.phi = rng.uniform(0.01, 1.0);
    s.gamma = rng.uniform(1e-3, 0.5);
    const double k = rng.uniform(0.4, 3.0), h = 1e-5;
    const auto at = kappa_q_slice(s, k);
    const double g = (kappa_q_slice(s, k + h).value - kappa_q_slice(s, k - h).value) / (2 * h);
    const double hess = (kappa_q_slice(s, k + h).gradient - kappa_q_slice(s, k - h).gradient) / (2 * h);
    EXPECT_LT(std::abs(at.gradient - g) / std::max(1.0, std::abs(g)), 1e-4);
    EXPECT_LT(std::abs(at.hessian - hess) / std::max(1.0, std::abs(hess)), 1e-4);

    // value differences agree with the full Q written out directly
    const auto full_q = [&](double kappa) {
      double q = 0.0;
      for (std::size_t i = 0; i < s.weights.size(); ++i) {
        const double d = s.deltas[i];
        q += s.weights[i] * (std::log(s.phi * s.gamma * kappa) + (kappa - 1.0) * std::log(d) -
                             s.gamma * std::pow(d, kappa));
      }
      for (double tail : s.tails) q -= s.phi * (1.0 - std::exp(-s.gamma * std::pow(tail, kappa)));
      return q;
    };
    const double k2 = rng.uniform(0.4, 3.0);
    EXPECT_NEAR(kappa_q_slice(s, k2).value - at.value, full_q(k2) - full_q(k), 1e-9 * (1.0 + std::abs(full_q(k))));
  }
}

TEST(QSlices, GaussianDerivativesMatchFiniteDifferences) {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> tod, w;
    GaussianSlice s;
    for (int i = 0; i < 30; ++i) {
      tod.push_back(rng.uniform(0.0, 24.0));
      w.push_back(rng.uniform(0.0, 1.0));
      s.mass += w.back();
      s.first += w.back() * tod.back();
      s.second += w.back() * tod.back() * tod.back();
    }
    s.beta = rng.uniform(0.1, 3.0);
    s.n_users = 1 + static_cast<int>(rng.uniform() * 5);
    s.horizon = 24.0 * (1 + static_cast<int>(rng.uniform() * 5));
    const double mu = rng.uniform(1.0, 23.0), sd = rng.uniform(0.5, 6.0), h = 1e-5;
    const auto at = gaussian_q_slice(s, mu, sd);
    const auto dm = [&](double m, double v) { return gaussian_q_slice(s, m, v); };
    const Eigen::Vector2d g((dm(mu + h, sd).value - dm(mu - h, sd).value) / (2 * h),
                            (dm(mu, sd + h).value - dm(mu, sd - h).value) / (2 * h));
    Eigen::Matrix2d H;
    H.col(0) = (dm(mu + h, sd).gradient - dm(mu - h, sd).gradient) / (2 * h);
    H.col(1) = (dm(mu, sd + h).gradient - dm(mu, sd - h).gradient) / (2 * h);
    for (int i = 0; i < 2; ++i) {
      EXPECT_LT(std::abs(at.gradient(i) - g(i)) / std::max(1.0, std::abs(g(i))), 1e-4);
      for (int j = 0; j < 2; ++j)
        EXPECT_LT(std::abs(at.hessian(i, j) - H(i, j)) / std::max(1.0, std::abs(H(i, j))), 1e-4);
    }

    // value differences agree with sum p log(beta N) - |U| beta * (days * truncated mass)
    const double days = s.horizon / 24.0;
    const auto full_q = [&](double m, double v) {
      double q = 0.0;
      for (std::size_t i = 0; i < tod.size(); ++i)
        q += w[i] * std::log(s.beta * std::exp(-0.5 * std::pow((tod[i] - m) / v, 2)) /
                             (v * std::sqrt(2.0 * std::numbers::pi)));
      const double mass = 0.5 * (std::erf(m / (std::sqrt(2.0) * v)) + std::erf((24.0 - m) / (std::sqrt(2.0) * v)));
      return q - s.n_users * s.beta * days * mass;
    };
    const double mu2 = rng.uniform(1.0, 23.0), sd2 = rng.uniform(0.5, 6.0);
    EXPECT_NEAR(gaussian_q_slice(s, mu2, sd2).value - at.value, full_q(mu2, sd2) - full_q(mu, sd),
                1e-9 * (1.0 + std::abs(full_q(mu, sd))));
  }
}

TEST(Fit, ConstantRateRecoversPoissonMle) {
  auto truth = ModelParams::zeros(small_structure(1, 1), {"u"});
  truth.alpha(0, 0) = 1.5;
  SimConfig sim;
  sim.horizon = 240.0;
  sim.seed = 5;
  const Dataset data{{"u", simulate(truth, 0, {"u", {}}, sim)}};
  FitConfig cfg;
  cfg.n_mixtures = 1;
  cfg.horizon = 240.0;
  cfg.components = {true, false, false, false};
  const auto fitted = fit(data, cfg);
  const double mle = static_cast<double>(data[0].events.size()) / 240.0;
  EXPECT_NEAR(fitted.params.alpha(0, 0), mle, 1e-9);
  EXPECT_LT(rel_err(fitted.params.alpha(0, 0), 1.5), 0.02 * 5);  // sampling noise of ~360 events
}

TEST(Fit, TraceAscendsAndBeatsInitialization) {
  Rng rng(77);
  const auto truth = random_params(rng, 2, 1, {"a", "b", "c"});
  SyntheticSpec spec{3, truth, 96.0, 13};
  const auto data = generate_synthetic(spec);
  FitConfig cfg;
  cfg.n_mixtures = 2;
  cfg.max_iterations = 60;
  cfg.rng_seed = 2;
  const auto result = fit(data, cfg);
  const auto& tr = result.report.ll_trace;
  ASSERT_GE(tr.size(), 2u);
  for (std::size_t i = 1; i < tr.size(); ++i)
    EXPECT_GE(tr[i].total - tr[i - 1].total, -1e-8 * std::abs(tr[i - 1].total)) << "iteration " << i;
  EXPECT_GT(tr.back().total, tr.front().total);
  const double direct = log_likelihood(result.params, data, 96.0).total;
  EXPECT_NEAR(tr.back().total, direct, 1e-9 * std::abs(direct));
}

TEST(Fit, SameSeedSameTrace) {
  Rng rng(78);
  const auto truth = random_params(rng, 2, 1, {});
  const auto data = generate_synthetic({4, truth, 72.0, 3});
  FitConfig cfg;
  cfg.max_iterations = 20;
  cfg.rng_seed = 9;
  const auto a = fit(data, cfg), b = fit(data, cfg);
  ASSERT_EQ(a.report.ll_trace.size(), b.report.ll_trace.size());
  for (std::size_t i = 0; i < a.report.ll_trace.size(); ++i)
    EXPECT_EQ(a.report.ll_trace[i].total, b.report.ll_trace[i].total);
  EXPECT_EQ(a.params.theta, b.params.theta);
}

TEST(Fit, RejectsEmptyData) {
  EXPECT_THROW(fit({}, FitConfig{}), Error);
  EXPECT_THROW(fit({{"u", {}}}, FitConfig{}), Error);
}

TEST(Fit, DisabledComponentsStayZero) {
  Rng rng(79);
  const auto data = generate_synthetic({3, random_params(rng, 2, 1, {}), 72.0, 4});
  FitConfig cfg;
  cfg.components = Components::time_only();
  cfg.max_iterations = 10;
  const auto r = fit(data, cfg);
  EXPECT_EQ(r.params.theta.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.params.phi.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SelectMixtures, PicksFromGrid) {
  Rng rng(80);
  const auto data = generate_synthetic({10, random_params(rng, 2, 2, {}), 96.0, 6});
  FitConfig cfg;
  cfg.max_iterations = 15;
  const std::vector<int> grid{1, 2, 3};
  const int z = select_mixtures(data, cfg, grid);
  EXPECT_GE(z, 1);
  EXPECT_LE(z, 3);
}
