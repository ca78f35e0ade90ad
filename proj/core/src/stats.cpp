#include "qtt/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

#include <Eigen/Dense>

namespace qtt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return kNaN;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex error_mutex;
  std::size_t error_index = n;
  std::exception_ptr error;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          if (stop.load(std::memory_order_relaxed)) return;
          const std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (i < error_index) {
              error_index = i;
              error = std::current_exception();
            }
            stop = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

double system_jitter_ps(const StreamConfig& config) {
  return combine_jitter({config.alice.jitter_det_ps, config.alice.jitter_tt_ps,
                         config.bob.jitter_det_ps, config.bob.jitter_tt_ps});
}

double Scenario::tolerance_ps() const {
  return success_tolerance_ps >= 0.0 ? success_tolerance_ps : correlator.expected_sigma_ps;
}

void Scenario::validate() const {
  streams.validate();
  correlator.validate();
}

TrialOutcome run_trial(const Scenario& scenario, RngSeed seed) {
  const auto streams = build_bob_stream(scenario.streams, seed);
  TrialOutcome out;
  out.result = recover_offset(streams.alice, streams.bob, scenario.correlator);
  out.tau_true_ps = streams.truth.expected_tau_ps;
  out.error_ps = out.result.fit.tau_hat_ps - out.tau_true_ps;
  out.success = out.result.success && std::abs(out.error_ps) <= scenario.tolerance_ps();
  out.true_coincidences = streams.truth.true_coincidences;
  out.alice_dead_time_survival = streams.truth.alice_dead_time_survival();
  out.bob_dead_time_survival = streams.truth.bob_dead_time_survival();
  out.alice_singles = streams.alice.size();
  out.bob_singles = streams.bob.size();
  return out;
}

SuccessEstimate summarize(const std::vector<TrialOutcome>& trials) {
  SuccessEstimate s;
  s.trials = static_cast<int>(trials.size());
  if (trials.empty()) return s;
  std::vector<double> n_true, truth, sigma, dead_a, dead_b, singles;
  for (const auto& t : trials) {
    if (t.success) {
      ++s.successes;
      sigma.push_back(t.result.fit.sigma_tau_ps);
    }
    n_true.push_back(t.result.n_true);
    truth.push_back(static_cast<double>(t.true_coincidences));
    dead_a.push_back(t.alice_dead_time_survival);
    dead_b.push_back(t.bob_dead_time_survival);
    singles.push_back(static_cast<double>(t.alice_singles));
  }
  s.p_hat = static_cast<double>(s.successes) / static_cast<double>(s.trials);
  s.mean_n_true = mean_of(n_true);
  s.mean_true_coincidences = mean_of(truth);
  s.mean_sigma_ps = mean_of(sigma);
  s.mean_alice_dead_time_survival = mean_of(dead_a);
  s.mean_bob_dead_time_survival = mean_of(dead_b);
  s.mean_alice_singles = mean_of(singles);
  return s;
}

std::vector<TrialOutcome> run_trials(const Scenario& scenario, int trials, RngSeed seed,
                                     int jobs) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  scenario.validate();
  std::vector<TrialOutcome> out(static_cast<std::size_t>(trials));
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    out[i] = run_trial(scenario, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
  });
  return out;
}

SuccessEstimate success_probability(const Scenario& scenario, int trials, RngSeed seed,
                                    int jobs) {
  return summarize(run_trials(scenario, trials, seed, jobs));
}

SweepGrid sweep(const Scenario& tmpl, const std::vector<double>& attenuations_dB,
                const std::vector<double>& background_cps, int trials, RngSeed seed, int jobs) {
  if (attenuations_dB.empty() || background_cps.empty())
    throw std::invalid_argument("sweep grids must be non-empty");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  for (double a : attenuations_dB)
    if (!(a <= 0.0)) throw std::invalid_argument("attenuations must be <= 0 dB");
  for (double b : background_cps)
    if (!(b >= 0.0)) throw std::invalid_argument("background rates must be >= 0");
  tmpl.validate();

  SweepGrid grid;
  grid.attenuations_dB = attenuations_dB;
  grid.background_cps = background_cps;
  grid.trials_per_cell = trials;
  const std::size_t cells = attenuations_dB.size() * background_cps.size();
  const auto per_cell = static_cast<std::size_t>(trials);

  std::vector<Scenario> scenarios(cells, tmpl);
  for (std::size_t ia = 0; ia < attenuations_dB.size(); ++ia)
    for (std::size_t ib = 0; ib < background_cps.size(); ++ib) {
      auto& s = scenarios[grid.index(ia, ib)];
      s.set_attenuation_db(attenuations_dB[ia]);
      s.set_background_cps(background_cps[ib]);
    }

  std::vector<TrialOutcome> outcomes(cells * per_cell);
  parallel_for(outcomes.size(), jobs, [&](std::size_t k) {
    const std::size_t cell = k / per_cell;
    const std::size_t trial = k % per_cell;
    outcomes[k] = run_trial(scenarios[cell], derive_seed(seed, {cell, trial}));
  });

  grid.success_prob.resize(cells);
  grid.mean_n_true.resize(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    std::vector<TrialOutcome> slice(outcomes.begin() + static_cast<std::ptrdiff_t>(c * per_cell),
                                    outcomes.begin() + static_cast<std::ptrdiff_t>((c + 1) * per_cell));
    const auto s = summarize(slice);
    grid.success_prob[c] = s.p_hat;
    grid.mean_n_true[c] = s.mean_n_true;
  }
  return grid;
}

std::optional<double> threshold_from_column(std::vector<double> attenuations_dB,
                                            std::vector<double> p, double level) {
  if (attenuations_dB.size() != p.size())
    throw std::invalid_argument("threshold column: size mismatch");
  if (!(level > 0.0 && level <= 1.0)) throw std::invalid_argument("level must lie in (0, 1]");
  // Order from shallow (least negative) to deep.
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return attenuations_dB[a] > attenuations_dB[b]; });
  std::optional<std::size_t> deepest;
  for (std::size_t k = 0; k < order.size(); ++k)
    if (p[order[k]] >= level) deepest = k;
  if (!deepest) return std::nullopt;
  const std::size_t k = *deepest;
  const double a0 = attenuations_dB[order[k]];
  if (k + 1 == order.size()) return a0;
  const double a1 = attenuations_dB[order[k + 1]];
  const double p0 = p[order[k]];
  const double p1 = p[order[k + 1]];
  if (p1 <= 0.0) return a0;
  const double l0 = std::log(p0), l1 = std::log(p1), lt = std::log(level);
  if (l0 == l1) return a0;
  return a0 + (a1 - a0) * (lt - l0) / (l1 - l0);
}

std::vector<ThresholdPoint> threshold_attenuation_curve(const SweepGrid& grid, double level) {
  std::vector<ThresholdPoint> out;
  for (std::size_t ib = 0; ib < grid.background_cps.size(); ++ib) {
    std::vector<double> p;
    for (std::size_t ia = 0; ia < grid.attenuations_dB.size(); ++ia) p.push_back(grid.p(ia, ib));
    out.push_back({grid.background_cps[ib], threshold_from_column(grid.attenuations_dB, p, level)});
  }
  return out;
}

ThresholdFit fit_threshold_curve(const std::vector<ThresholdPoint>& curve) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& c : curve)
    if (c.threshold_dB) pts.emplace_back(c.background_cps, *c.threshold_dB);
  if (pts.size() < 3) throw std::invalid_argument("threshold fit needs at least 3 points");
  Eigen::MatrixXd a(pts.size(), 3);
  Eigen::VectorXd y(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    a(static_cast<Eigen::Index>(i), 0) = std::sqrt(pts[i].first);
    a(static_cast<Eigen::Index>(i), 1) = pts[i].first;
    a(static_cast<Eigen::Index>(i), 2) = 1.0;
    y(static_cast<Eigen::Index>(i)) = pts[i].second;
  }
  const Eigen::Vector3d c = a.completeOrthogonalDecomposition().solve(y);
  const Eigen::VectorXd r = a * c - y;
  ThresholdFit fit;
  fit.c2 = c(0);
  fit.c1 = c(1);
  fit.c0 = c(2);
  fit.rms_residual_dB = std::sqrt(r.squaredNorm() / static_cast<double>(pts.size()));
  return fit;
}

SemSample sem_sampling(const Scenario& scenario, int n_runs, RngSeed seed, int jobs,
                       double min_success_fraction) {
  const auto trials = run_trials(scenario, n_runs, seed, jobs);
  SemSample s;
  s.runs = n_runs;
  std::vector<double> errors, formula, n_true, sigma;
  for (const auto& t : trials) {
    if (!t.success) continue;
    ++s.successes;
    errors.push_back(t.error_ps);
    formula.push_back(t.result.sem_ps);
    n_true.push_back(t.result.n_true);
    sigma.push_back(t.result.fit.sigma_tau_ps);
  }
  const double fraction = static_cast<double>(s.successes) / n_runs;
  if (fraction < min_success_fraction || s.successes < 2)
    throw std::runtime_error("sem_sampling: only " + std::to_string(s.successes) + " of " +
                             std::to_string(n_runs) +
                             " runs succeeded; use less attenuation or noise");
  s.sem_measured_ps = sample_std(errors);
  s.sem_formula_ps = mean_of(formula);
  s.mean_n_true = mean_of(n_true);
  s.mean_sigma_ps = mean_of(sigma);
  return s;
}

double fit_inverse_sqrt(const std::vector<double>& n, const std::vector<double>& y) {
  if (n.size() != y.size() || n.empty()) throw std::invalid_argument("fit_inverse_sqrt: bad input");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(n[i] > 0.0)) throw std::invalid_argument("fit_inverse_sqrt: N must be > 0");
    num += y[i] / std::sqrt(n[i]);
    den += 1.0 / n[i];
  }
  return num / den;
}

std::size_t OffsetSeries::gaps() const {
  return static_cast<std::size_t>(
      std::count_if(taus_ps.begin(), taus_ps.end(), [](double t) { return std::isnan(t); }));
}

OffsetSeries continuous_tracking(const Scenario& scenario, int n_acquisitions,
                                 const ClockModel& clock, RngSeed seed, int jobs,
                                 TrackingOptions options) {
  if (n_acquisitions < 2) throw std::invalid_argument("continuous tracking needs >= 2 acquisitions");
  scenario.validate();
  clock.validate();
  const auto n = static_cast<std::size_t>(n_acquisitions);
  const double t_a = scenario.streams.acquisition_time_s;
  const double t_a_ps = seconds_to_ps(t_a);

  OffsetSeries out;
  out.acquisition_time_s = t_a;
  out.taus_ps.assign(n, kNaN);
  out.true_taus_ps.assign(n, kNaN);
  out.drift_eff.resize(n);
  out.corrections_ps.assign(n, 0.0);

  // The clock trajectory does not depend on the measurements.
  std::vector<double> offsets(n);
  double offset = clock.offset_ps;
  for (std::size_t k = 0; k < n; ++k) {
    out.drift_eff[k] = draw_effective_drift(clock, derive_seed(seed, {k, 0xc10cULL}));
    offsets[k] = offset;
    offset += out.drift_eff[k] * t_a_ps;
  }

  auto acquire = [&](std::size_t k, double correction) {
    StreamConfig cfg = scenario.streams;
    cfg.clock = clock;
    cfg.clock.offset_ps = offsets[k] - correction;
    const auto streams = build_bob_stream(cfg, derive_seed(seed, {k}), out.drift_eff[k]);
    const auto r = recover_offset(streams.alice, streams.bob, scenario.correlator);
    out.true_taus_ps[k] = streams.truth.expected_tau_ps;
    const bool ok = r.success &&
                    std::abs(r.fit.tau_hat_ps - streams.truth.expected_tau_ps) <=
                        scenario.tolerance_ps();
    out.taus_ps[k] = ok ? r.fit.tau_hat_ps : kNaN;
  };

  if (!options.feedback) {
    parallel_for(n, jobs, [&](std::size_t k) { acquire(k, 0.0); });
    return out;
  }

  // Feedback: Bob pre-corrects each window with the last offset estimate
  // advanced by the last drift estimate.
  double correction = 0.0;
  std::optional<double> previous_estimate;
  for (std::size_t k = 0; k < n; ++k) {
    out.corrections_ps[k] = correction;
    acquire(k, correction);
    if (std::isnan(out.taus_ps[k])) continue;
    // tau_hat ~ -(offset - correction), so the absolute offset estimate is:
    const double estimate = correction - out.taus_ps[k];
    const double drift = previous_estimate ? estimate_drift(*previous_estimate, estimate, t_a) : 0.0;
    previous_estimate = estimate;
    correction = estimate + drift * t_a_ps;
  }
  return out;
}

AdevCurve overlapping_adev(const std::vector<double>& phase_s, double tau0_s, std::size_t max_m) {
  const std::size_t n = phase_s.size();
  if (n < 3) throw std::invalid_argument("overlapping ADEV needs at least 3 samples");
  if (!(tau0_s > 0.0)) throw std::invalid_argument("tau0 must be > 0");
  if (max_m < 1 || 2 * max_m >= n)
    throw std::invalid_argument("max_m=" + std::to_string(max_m) + " too large for " +
                                std::to_string(n) + " samples (need 2m < N)");
  AdevCurve out;
  for (std::size_t m = 1; m <= max_m; ++m) {
    double sum = 0.0;
    std::size_t terms = 0;
    for (std::size_t i = 0; i + 2 * m < n; ++i) {
      const double d = phase_s[i + 2 * m] - 2.0 * phase_s[i + m] + phase_s[i];
      if (std::isnan(d)) continue;
      sum += d * d;
      ++terms;
    }
    if (terms == 0) continue;
    const double tau = static_cast<double>(m) * tau0_s;
    out.tau_s.push_back(tau);
    out.sigma_y.push_back(std::sqrt(sum / (2.0 * tau * tau * static_cast<double>(terms))));
    out.terms.push_back(terms);
  }
  return out;
}

AdevCurve overlapping_adev(const OffsetSeries& series, std::size_t max_m) {
  std::vector<double> x(series.taus_ps.size());
  std::transform(series.taus_ps.begin(), series.taus_ps.end(), x.begin(), ps_to_seconds);
  return overlapping_adev(x, series.acquisition_time_s, max_m);
}

double adev_slope(const AdevCurve& curve, double tau_lo_s, double tau_hi_s) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int k = 0;
  for (std::size_t i = 0; i < curve.tau_s.size(); ++i) {
    if (curve.tau_s[i] < tau_lo_s || curve.tau_s[i] > tau_hi_s || !(curve.sigma_y[i] > 0.0)) continue;
    const double x = std::log(curve.tau_s[i]);
    const double y = std::log(curve.sigma_y[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++k;
  }
  if (k < 2) throw std::invalid_argument("adev_slope needs at least 2 points in range");
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

double adev_mean(const AdevCurve& curve, double tau_lo_s, double tau_hi_s) {
  std::vector<double> v;
  for (std::size_t i = 0; i < curve.tau_s.size(); ++i)
    if (curve.tau_s[i] >= tau_lo_s && curve.tau_s[i] <= tau_hi_s) v.push_back(curve.sigma_y[i]);
  if (v.empty()) throw std::invalid_argument("adev_mean: no points in range");
  return mean_of(v);
}

std::vector<FiberPoint> fiber_success_curve(const Scenario& tmpl, const links::FiberLink& link,
                                            const std::vector<double>& lengths_km, int trials,
                                            RngSeed seed, int jobs) {
  if (lengths_km.empty()) throw std::invalid_argument("fiber lengths must be non-empty");
  std::vector<double> attenuations;
  for (double l : lengths_km) {
    links::FiberLink at = link;
    at.length_km = l;
    attenuations.push_back(links::fiber_attenuation(at));
  }
  const auto grid = sweep(tmpl, attenuations, {link.background_cps}, trials, seed, jobs);
  std::vector<FiberPoint> out;
  for (std::size_t i = 0; i < lengths_km.size(); ++i) {
    FiberPoint p;
    p.length_km = lengths_km[i];
    p.attenuation_dB = attenuations[i];
    p.estimate.trials = trials;
    p.estimate.p_hat = grid.p(i, 0);
    p.estimate.successes = static_cast<int>(std::lround(p.estimate.p_hat * trials));
    p.estimate.mean_n_true = grid.mean_n_true[grid.index(i, 0)];
    out.push_back(p);
  }
  return out;
}

std::pair<double, double> dead_time_efficiencies(const Scenario& scenario, RngSeed seed,
                                                 int acquisitions) {
  if (acquisitions < 1) throw std::invalid_argument("acquisitions must be >= 1");
  double a = 0.0, b = 0.0;
  for (int k = 0; k < acquisitions; ++k) {
    const auto s = build_bob_stream(scenario.streams,
                                    derive_seed(seed, {static_cast<std::uint64_t>(k), 0xdeadULL}));
    a += s.truth.alice_dead_time_survival();
    b += s.truth.bob_dead_time_survival();
  }
  return {a / acquisitions, b / acquisitions};
}

analytic::AnalyticScenario analytic_scenario(const Scenario& scenario, double eta_dead_a,
                                             double eta_dead_b, int order) {
  const auto& st = scenario.streams;
  analytic::AnalyticScenario a;
  a.n_pair = st.source.pair_rate_cps * st.acquisition_time_s;
  a.eta_herald = st.heralding();
  a.eta_a = st.alice.channel_efficiency();
  a.eta_b = st.bob.channel_efficiency();
  a.eta_dead_a = eta_dead_a;
  a.eta_dead_b = eta_dead_b;
  a.sigma_tau_ps = system_jitter_ps(st);
  a.acquisition_time_s = st.acquisition_time_s;
  a.drift = st.clock.drift;
  a.bin_width_ps = static_cast<double>(scenario.correlator.bin_width_ps);
  a.background_a_cps =
      (st.source.pair_rate_cps * st.alice.detection_efficiency() + st.alice.background_cps) *
      eta_dead_a;
  a.background_b_cps = st.bob.background_cps;
  a.order = order;
  return a;
}

}  // namespace qtt
