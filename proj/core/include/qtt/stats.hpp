#pragma once

// Monte Carlo harness: success probability, attenuation x background sweeps,
// threshold extraction, SEM sampling and continuous tracking with the
// overlapping Allan deviation.
//
// Every trial draws its randomness from a seed derived from (master seed,
// cell index, trial index), so results do not depend on the worker count.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "qtt/analytic.hpp"
#include "qtt/correlator.hpp"
#include "qtt/links.hpp"
#include "qtt/rng.hpp"
#include "qtt/timetags.hpp"

namespace qtt {

/// Runs fn(0..n-1) on up to `jobs` threads. The first exception (by index)
/// is rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

struct Scenario {
  StreamConfig streams;
  CorrelatorParams correlator;
  // A trial succeeds only if |tau_hat - tau_true| is within this bound.
  // Negative selects the expected system jitter.
  double success_tolerance_ps = -1.0;

  double tolerance_ps() const;
  /// Sets Bob's lumped channel loss (negative dB).
  void set_attenuation_db(double db) { streams.bob.set_channel_db(db); }
  void set_background_cps(double cps) { streams.bob.background_cps = cps; }
  void validate() const;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Expected system jitter from both receivers' detector and tagger jitter.
double system_jitter_ps(const StreamConfig& config);

struct TrialOutcome {
  CorrelationResult result;
  double tau_true_ps = 0.0;
  double error_ps = 0.0;  // tau_hat - tau_true
  bool success = false;
  std::size_t true_coincidences = 0;
  double alice_dead_time_survival = 1.0;
  double bob_dead_time_survival = 1.0;
  std::size_t alice_singles = 0;
  std::size_t bob_singles = 0;
};

TrialOutcome run_trial(const Scenario& scenario, RngSeed seed);

struct SuccessEstimate {
  int trials = 0;
  int successes = 0;
  double p_hat = 0.0;
  double mean_n_true = 0.0;       // measured N_C - N_AC
  double mean_true_coincidences = 0.0;  // ground truth
  double mean_sigma_ps = 0.0;     // over successful trials; NaN if none
  double mean_alice_dead_time_survival = 1.0;
  double mean_bob_dead_time_survival = 1.0;
  double mean_alice_singles = 0.0;
};

SuccessEstimate summarize(const std::vector<TrialOutcome>& trials);

std::vector<TrialOutcome> run_trials(const Scenario& scenario, int trials, RngSeed seed,
                                     int jobs = 1);

SuccessEstimate success_probability(const Scenario& scenario, int trials, RngSeed seed,
                                    int jobs = 1);

struct SweepGrid {
  std::vector<double> attenuations_dB;
  std::vector<double> background_cps;
  int trials_per_cell = 0;
  // Row-major, attenuation-major: index = i_att * background_count + i_bg.
  std::vector<double> success_prob;
  std::vector<double> mean_n_true;

  std::size_t index(std::size_t i_att, std::size_t i_bg) const {
    return i_att * background_cps.size() + i_bg;
  }
  double p(std::size_t i_att, std::size_t i_bg) const { return success_prob[index(i_att, i_bg)]; }

  friend bool operator==(const SweepGrid&, const SweepGrid&) = default;
};

SweepGrid sweep(const Scenario& tmpl, const std::vector<double>& attenuations_dB,
                const std::vector<double>& background_cps, int trials, RngSeed seed,
                int jobs = 1);

struct ThresholdPoint {
  double background_cps = 0.0;
  std::optional<double> threshold_dB;  // absent if no cell reaches the level
};

/// Per background column: the deepest attenuation with p >= level,
/// interpolated linearly in dB against ln p toward the next deeper cell.
std::vector<ThresholdPoint> threshold_attenuation_curve(const SweepGrid& grid,
                                                        double level = 0.99);

/// Threshold for a single column given (attenuation_dB, p) samples.
std::optional<double> threshold_from_column(std::vector<double> attenuations_dB,
                                            std::vector<double> p, double level = 0.99);

struct ThresholdFit {
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;
  double rms_residual_dB = 0.0;
};

/// Least squares of threshold_dB = c2 sqrt(N_b) + c1 N_b + c0 over the
/// present points. Needs at least three.
ThresholdFit fit_threshold_curve(const std::vector<ThresholdPoint>& curve);

struct SemSample {
  int runs = 0;
  int successes = 0;
  double sem_measured_ps = 0.0;  // std of tau_hat - tau_true over successful runs
  double sem_formula_ps = 0.0;   // mean sigma_tau / sqrt(N_T)
  double mean_n_true = 0.0;
  double mean_sigma_ps = 0.0;
};

/// Throws std::runtime_error if fewer than `min_success_fraction` of the runs
/// succeed.
SemSample sem_sampling(const Scenario& scenario, int n_runs, RngSeed seed, int jobs = 1,
                       double min_success_fraction = 0.9);

/// a minimizing sum (y_i - a / sqrt(n_i))^2.
double fit_inverse_sqrt(const std::vector<double>& n, const std::vector<double>& y);

struct OffsetSeries {
  double acquisition_time_s = 1.0;
  // One entry per acquisition; NaN marks a failed acquisition.
  std::vector<double> taus_ps;
  std::vector<double> true_taus_ps;
  std::vector<double> drift_eff;
  std::vector<double> corrections_ps;  // applied feedback offset (0 without feedback)

  std::size_t size() const { return taus_ps.size(); }
  std::size_t gaps() const;
};

struct TrackingOptions {
  bool feedback = false;
};

/// Back-to-back acquisitions with an evolving clock: the offset accumulates
/// drift_eff * T_a per window and drift_eff ~ Normal(drift, freq_jitter) is
/// redrawn each window.
OffsetSeries continuous_tracking(const Scenario& scenario, int n_acquisitions,
                                 const ClockModel& clock, RngSeed seed, int jobs = 1,
                                 TrackingOptions options = {});

struct AdevCurve {
  std::vector<double> tau_s;
  std::vector<double> sigma_y;
  std::vector<std::size_t> terms;  // second differences used per point
};

/// Overlapping Allan deviation of a phase series in seconds for m = 1..max_m.
/// Second differences touching a NaN are skipped.
AdevCurve overlapping_adev(const std::vector<double>& phase_s, double tau0_s, std::size_t max_m);

AdevCurve overlapping_adev(const OffsetSeries& series, std::size_t max_m);

/// Least-squares slope of log sigma_y against log tau over [tau_lo, tau_hi].
double adev_slope(const AdevCurve& curve, double tau_lo_s, double tau_hi_s);

/// Mean sigma_y over [tau_lo, tau_hi].
double adev_mean(const AdevCurve& curve, double tau_lo_s, double tau_hi_s);

struct FiberPoint {
  double length_km = 0.0;
  double attenuation_dB = 0.0;
  SuccessEstimate estimate;
};

/// Monte Carlo success probability along fiber lengths; Bob's background is
/// the link's background rate.
std::vector<FiberPoint> fiber_success_curve(const Scenario& tmpl, const links::FiberLink& link,
                                            const std::vector<double>& lengths_km, int trials,
                                            RngSeed seed, int jobs = 1);

/// Dead-time survival of both parties from a few simulated acquisitions.
std::pair<double, double> dead_time_efficiencies(const Scenario& scenario, RngSeed seed,
                                                 int acquisitions = 2);

/// Closed-form model matching a simulated scenario. The accidental rate on
/// Alice's side is her observed singles rate.
analytic::AnalyticScenario analytic_scenario(const Scenario& scenario, double eta_dead_a,
                                             double eta_dead_b, int order = 14);

}  // namespace qtt
