#include <atomic>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "qtt/config.hpp"
#include "qtt/stats.hpp"

using namespace qtt;

namespace {

// Cheap scenario: 200 kcps pairs, SPAD-like jitter, moderate noise.
Scenario small_scenario() {
  Scenario s;
  auto& c = s.streams;
  c.source.pair_rate_cps = 2e5;
  c.acquisition_time_s = 1.0;
  c.set_heralding(0.4);
  c.alice.eta_spec = 0.9;
  c.alice.eta_det = 0.6;
  c.bob.set_channel_db(-10.0);
  c.alice.jitter_det_ps = c.bob.jitter_det_ps = 287;
  c.alice.jitter_tt_ps = c.bob.jitter_tt_ps = 4;
  c.bob.background_cps = 1e5;
  c.clock.offset_ps = 2500;
  s.correlator.range = DifferenceRange{-200'000, 200'000};
  s.correlator.expected_sigma_ps = system_jitter_ps(c);
  return s;
}

std::vector<double> naive_adev(const std::vector<double>& x, double tau0, std::size_t m) {
  std::vector<double> out;
  for (std::size_t k = 1; k <= m; ++k) {
    long double acc = 0.0L;
    std::size_t terms = 0;
    for (std::size_t i = 0; i + 2 * k < x.size(); ++i) {
      const long double d = static_cast<long double>(x[i + 2 * k]) - 2.0L * x[i + k] + x[i];
      acc += d * d;
      ++terms;
    }
    const double tau = k * tau0;
    out.push_back(std::sqrt(static_cast<double>(acc) / (2.0 * tau * tau * terms)));
  }
  return out;
}

}  // namespace

TEST(ParallelFor, CoversEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, RethrowsLowestIndexException) {
  try {
    parallel_for(100, 3, [](std::size_t i) {
      if (i == 17 || i == 60) throw std::runtime_error(std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "17");
  }
}

TEST(SuccessProbability, LosslessNoiselessAlwaysSucceeds) {
  auto s = small_scenario();
  s.streams.bob.set_channel_db(0.0);
  s.streams.bob.background_cps = 0.0;
  s.streams.source.pair_rate_cps = 2e4;
  const auto e = success_probability(s, 100, RngSeed{1});
  EXPECT_EQ(e.p_hat, 1.0);
  EXPECT_EQ(e.trials, 100);
}

TEST(SuccessProbability, NoPairsNeverSucceeds) {
  auto s = small_scenario();
  s.streams.bob.eta_trans = 0.0;
  s.streams.bob.background_cps = 5e5;
  const auto e = success_probability(s, 100, RngSeed{2});
  EXPECT_LE(e.p_hat, 0.01);
}

TEST(SuccessProbability, IndependentOfWorkerCount) {
  const auto s = small_scenario();
  const auto a = run_trials(s, 12, RngSeed{3}, 1);
  const auto b = run_trials(s, 12, RngSeed{3}, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].result.fit.tau_hat_ps, b[i].result.fit.tau_hat_ps);
    EXPECT_EQ(a[i].success, b[i].success);
  }
}

TEST(SuccessProbability, BinomialConsistencyAcrossSeeds) {
  // A cell near the transition; repeated estimates scatter binomially.
  auto s = small_scenario();
  s.streams.bob.set_channel_db(-27.0);
  s.streams.bob.background_cps = 2e5;
  std::vector<double> ps;
  for (std::uint64_t seed = 0; seed < 8; ++seed)
    ps.push_back(success_probability(s, 40, RngSeed{100 + seed}).p_hat);
  double mean = 0.0;
  for (double p : ps) mean += p / ps.size();
  const double sd = std::sqrt(std::max(mean * (1 - mean), 0.02) / 40.0);
  for (double p : ps) EXPECT_NEAR(p, mean, 4.0 * sd);
}

TEST(Sweep, SingleCellReducesToSuccessProbability) {
  auto s = small_scenario();
  const auto g = sweep(s, {-12.0}, {3e4}, 10, RngSeed{4});
  s.set_attenuation_db(-12.0);
  s.set_background_cps(3e4);
  int ok = 0;
  for (std::uint64_t t = 0; t < 10; ++t) ok += run_trial(s, derive_seed(RngSeed{4}, {0, t})).success;
  EXPECT_DOUBLE_EQ(g.p(0, 0), ok / 10.0);
}

TEST(Sweep, DeterministicAcrossJobs) {
  const auto s = small_scenario();
  const auto a = sweep(s, {-10.0, -25.0}, {0.0, 1e5}, 4, RngSeed{5}, 1);
  const auto b = sweep(s, {-10.0, -25.0}, {0.0, 1e5}, 4, RngSeed{5}, 8);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, sweep(s, {-10.0, -25.0}, {0.0, 1e5}, 4, RngSeed{5}, 2));
}

TEST(Sweep, MonotoneInAttenuation) {
  const auto s = small_scenario();
  const std::vector<double> att{-14, -18, -22, -26, -30, -34};
  const auto g = sweep(s, att, {1e5}, 100, RngSeed{6});
  for (std::size_t i = 1; i < att.size(); ++i) {
    const double p0 = g.p(i - 1, 0), p1 = g.p(i, 0);
    const double sd = std::sqrt(std::max(p0 * (1 - p0), 0.01) / 100.0);
    EXPECT_LE(p1, p0 + 3.0 * sd) << att[i];
  }
  EXPECT_EQ(g.p(0, 0), 1.0);
  EXPECT_EQ(g.p(att.size() - 1, 0), 0.0);
}

TEST(Sweep, RejectsBadGrids) {
  const auto s = small_scenario();
  EXPECT_THROW(sweep(s, {}, {0.0}, 1, RngSeed{1}), std::invalid_argument);
  EXPECT_THROW(sweep(s, {3.0}, {0.0}, 1, RngSeed{1}), std::invalid_argument);
  EXPECT_THROW(sweep(s, {-3.0}, {-1.0}, 1, RngSeed{1}), std::invalid_argument);
  EXPECT_THROW(sweep(s, {-3.0}, {0.0}, 0, RngSeed{1}), std::invalid_argument);
}

TEST(Threshold, ColumnInterpolation) {
  // ln p is linear in between: 0.99 is reached 1/ln(0.5)*ln(0.99)... of the way.
  const auto t = threshold_from_column({-10, -20, -30}, {1.0, 1.0, 0.5});
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t, -20.0 - 10.0 * std::log(0.99) / std::log(0.5), 1e-12);
  EXPECT_EQ(*threshold_from_column({-10, -20, -30}, {1.0, 1.0, 1.0}), -30.0);
  EXPECT_FALSE(threshold_from_column({-10, -20}, {0.5, 0.1}));
  EXPECT_EQ(*threshold_from_column({-30, -10, -20}, {0.0, 1.0, 1.0}), -20.0);
  EXPECT_THROW(threshold_from_column({-10}, {1.0, 1.0}), std::invalid_argument);
}

TEST(Threshold, CurveFromGrid) {
  SweepGrid g;
  g.attenuations_dB = {-10, -20};
  g.background_cps = {0, 1e5};
  g.trials_per_cell = 1;
  g.success_prob = {1.0, 1.0, 1.0, 0.0};
  g.mean_n_true.assign(4, 0.0);
  const auto c = threshold_attenuation_curve(g);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(*c[0].threshold_dB, -20.0);
  EXPECT_EQ(*c[1].threshold_dB, -10.0);
  g.success_prob.assign(4, 0.0);
  for (const auto& p : threshold_attenuation_curve(g)) EXPECT_FALSE(p.threshold_dB);
}

TEST(Threshold, FitRecoversCoefficients) {
  std::vector<ThresholdPoint> pts;
  for (double nb : {1e4, 1e5, 2e5, 4e5, 8e5, 1.6e6})
    pts.push_back({nb, 0.01 * std::sqrt(nb) - 2e-6 * nb - 35.0});
  pts.push_back({5e5, std::nullopt});
  const auto f = fit_threshold_curve(pts);
  EXPECT_NEAR(f.c2, 0.01, 1e-9);
  EXPECT_NEAR(f.c1, -2e-6, 1e-12);
  EXPECT_NEAR(f.c0, -35.0, 1e-7);
  EXPECT_LT(f.rms_residual_dB, 1e-9);
  EXPECT_THROW(fit_threshold_curve({pts[0], pts[1]}), std::invalid_argument);
}

TEST(Sem, NoiselessHighCountMatchesFormula) {
  auto s = small_scenario();
  s.streams.bob.background_cps = 0.0;
  s.streams.alice.background_cps = 0.0;
  s.streams.bob.set_channel_db(-15.0);
  const auto r = sem_sampling(s, 150, RngSeed{7});
  EXPECT_EQ(r.successes, 150);
  EXPECT_NEAR(r.sem_measured_ps / r.sem_formula_ps, 1.0, 0.2);
}

TEST(Sem, RejectsHardScenario) {
  auto s = small_scenario();
  s.streams.bob.set_channel_db(-45.0);
  EXPECT_THROW(sem_sampling(s, 20, RngSeed{8}), std::runtime_error);
}

TEST(Sem, InverseSqrtFit) {
  std::vector<double> n{50, 100, 400, 1600}, y;
  for (double v : n) y.push_back(591.0 / std::sqrt(v));
  EXPECT_NEAR(fit_inverse_sqrt(n, y), 591.0, 1e-9);
}

TEST(Adev, HandValue) {
  const auto c = overlapping_adev(std::vector<double>{0, 1, 0, 1, 0}, 1.0, 1);
  ASSERT_EQ(c.sigma_y.size(), 1u);
  EXPECT_NEAR(c.sigma_y[0], std::sqrt(2.0), 1e-15);
  EXPECT_EQ(c.terms[0], 3u);
}

TEST(Adev, FrequencyOffsetHasZeroDeviation) {
  std::vector<double> x(100);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.4e-10 * static_cast<double>(i);
  const auto c = overlapping_adev(x, 1.0, 20);
  for (double v : c.sigma_y) EXPECT_LT(v, 1e-22);
}

TEST(Adev, MatchesNaiveSummation) {
  std::mt19937_64 eng(9);
  std::normal_distribution<double> n(0.0, 1e-10);
  std::vector<double> x(10000);
  for (auto& v : x) v = n(eng);
  const auto c = overlapping_adev(x, 1.0, 200);
  const auto ref = naive_adev(x, 1.0, 200);
  ASSERT_EQ(c.sigma_y.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(c.sigma_y[i] / ref[i], 1.0, 1e-12);
}

TEST(Adev, WhitePhaseNoiseSlope) {
  std::mt19937_64 eng(10);
  std::normal_distribution<double> n(0.0, 1e-10);
  std::vector<double> x(4000);
  for (auto& v : x) v = n(eng);
  const auto c = overlapping_adev(x, 1.0, 100);
  EXPECT_NEAR(adev_slope(c, 1.0, 60.0), -1.0, 0.1);
}

TEST(Adev, GapsAreSkippedAndLimitsEnforced) {
  std::vector<double> x{0, 1, std::nan(""), 1, 0, 1, 0};
  const auto c = overlapping_adev(x, 1.0, 1);
  EXPECT_EQ(c.terms[0], 2u);  // i = 3, 4 avoid the gap
  EXPECT_THROW(overlapping_adev(std::vector<double>{1, 2}, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(overlapping_adev(std::vector<double>(10, 0.0), 1.0, 5), std::invalid_argument);
}

TEST(Tracking, RbClockDriftAccumulates) {
  auto s = small_scenario();
  ClockModel rb{0.0, 3.4e-10, 3e-12};
  const auto series = continuous_tracking(s, 12, rb, RngSeed{11});
  ASSERT_EQ(series.size(), 12u);
  EXPECT_EQ(series.gaps(), 0u);
  // tau = -(offset) - ..., so estimates move by about -340 ps per second.
  const double slope = (series.taus_ps.back() - series.taus_ps.front()) / 11.0;
  EXPECT_NEAR(slope, -340.0, 15.0);
  for (std::size_t k = 0; k < series.size(); ++k)
    EXPECT_NEAR(series.taus_ps[k], series.true_taus_ps[k], 60.0);
}

TEST(Tracking, DriftEstimatesAverageToClockDrift) {
  auto s = small_scenario();
  s.streams.bob.set_channel_db(-6.0);
  ClockModel rb{0.0, 3.4e-10, 3e-12};
  const auto series = continuous_tracking(s, 100, rb, RngSeed{12});
  double mean = 0.0;
  for (std::size_t k = 0; k + 1 < series.size(); ++k)
    mean += estimate_drift(series.taus_ps[k], series.taus_ps[k + 1], 1.0) / 99.0;
  // tau_hat tracks -offset, so the estimate carries the opposite sign.
  // Two endpoint errors of a few ps over 99 s bound the error.
  EXPECT_NEAR(-mean, 3.4e-10, 0.2e-12 + 3e-12 / std::sqrt(99.0) * 4);
}

TEST(Tracking, CesiumScatterSmallerThanRubidium) {
  ClockModel rb{0.0, 3.4e-10, 3e-12}, cs{0.0, 3.4e-10, 5e-13};
  std::vector<double> drb, dcs;
  for (std::size_t k = 0; k < 2000; ++k) {
    drb.push_back(draw_effective_drift(rb, derive_seed(RngSeed{1}, {k})));
    dcs.push_back(draw_effective_drift(cs, derive_seed(RngSeed{1}, {k})));
  }
  auto sd = [](const std::vector<double>& v) {
    double m = 0, q = 0;
    for (double x : v) m += x / v.size();
    for (double x : v) q += (x - m) * (x - m) / (v.size() - 1);
    return std::sqrt(q);
  };
  EXPECT_NEAR(sd(drb) / sd(dcs), 6.0, 0.5);
}

TEST(Tracking, FeedbackKeepsResidualsSmall) {
  auto s = small_scenario();
  ClockModel rb{0.0, 3.4e-10, 3e-12};
  const auto series = continuous_tracking(s, 10, rb, RngSeed{13}, 1, TrackingOptions{true});
  EXPECT_EQ(series.gaps(), 0u);
  for (std::size_t k = 2; k < series.size(); ++k) EXPECT_LT(std::abs(series.taus_ps[k]), 100.0) << k;
  EXPECT_NE(series.corrections_ps.back(), 0.0);
}

TEST(Tracking, NeedsTwoAcquisitions) {
  EXPECT_THROW(continuous_tracking(small_scenario(), 1, ClockModel{}, RngSeed{1}),
               std::invalid_argument);
}

TEST(Fiber, LengthsMapToAttenuation) {
  auto s = small_scenario();
  links::FiberLink link;
  const auto pts = fiber_success_curve(s, link, {0.0, 50.0, 250.0}, 5, RngSeed{14});
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_NEAR(pts[1].attenuation_dB, -11.0, 1e-12);
  EXPECT_EQ(pts[0].estimate.p_hat, 1.0);
  EXPECT_EQ(pts[2].estimate.p_hat, 0.0);
}

TEST(AnalyticBridge, MatchesSimulatedScenario) {
  auto s = small_scenario();
  const auto [da, db] = dead_time_efficiencies(s, RngSeed{15});
  EXPECT_EQ(da, 1.0);
  EXPECT_EQ(db, 1.0);
  const auto a = analytic_scenario(s, da, db);
  EXPECT_NEAR(a.n_pair, 2e5, 1e-9);
  EXPECT_NEAR(a.eta_a, 0.54, 1e-12);
  EXPECT_NEAR(a.eta_b, 0.1, 1e-12);
  EXPECT_NEAR(a.background_a_cps, 2e5 * 0.54 * 0.4, 1e-6);
  // Expected true coincidences against ground truth.
  const auto e = success_probability(s, 10, RngSeed{16});
  EXPECT_NEAR(e.mean_true_coincidences, analytic::true_coincidences(a), 4.0 * std::sqrt(analytic::true_coincidences(a) / 10));
}

// Frozen from a first run (80% heralding, 1 kcps, 0.2 dB/km, seed 1009);
// with 100 trials per length the 0.99 level holds to 185 km.
TEST(Fiber, PinnedCutoffRegression) {
  auto s = scenario_preset("reference").scenario;
  s.streams.set_heralding(0.8);
  links::FiberLink link;
  link.background_cps = 1000.0;
  const auto pts = fiber_success_curve(s, link, {185.0, 200.0, 250.0}, 20, RngSeed{1009});
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_EQ(pts[0].estimate.successes, 20);
  EXPECT_EQ(pts[1].estimate.successes, 13);
  EXPECT_EQ(pts[2].estimate.successes, 0);
  EXPECT_NEAR(pts[0].estimate.mean_n_true, 51.542854050204753, 1e-9);
  EXPECT_NEAR(pts[1].estimate.mean_n_true, 21.107456354711804, 1e-9);
  EXPECT_NEAR(pts[2].estimate.mean_n_true, 2.0398119905995302, 1e-9);
}
