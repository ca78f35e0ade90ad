#pragma once

// Closed-form model of the correlation signal: drift-smeared peak shape,
// expected true coincidences, accidental background per bin, the
// order-statistic probability of success and its inversion for the
// threshold channel efficiency.
//
// Times are picoseconds unless a name says otherwise; rates are counts/s.

#include <optional>

namespace qtt::analytic {

struct AnalyticScenario {
  double n_pair = 2.0e6;  // pairs emitted during the acquisition
  double eta_herald = 0.4;
  double eta_a = 0.54;  // Alice spectral x detector efficiency
  double eta_b = 5.01e-3;  // Bob channel efficiency
  double eta_dead_a = 1.0;
  double eta_dead_b = 1.0;
  double sigma_tau_ps = 405.9;
  double acquisition_time_s = 1.0;
  double drift = 0.0;
  double bin_width_ps = 100.0;
  double background_a_cps = 0.0;  // counts Alice observes that can pair accidentally
  double background_b_cps = 0.0;
  int order = 14;

  void validate() const;
};

/// Expected true coincidences N_T.
double true_coincidences(const AnalyticScenario& s);

/// Expected correlation counts per bin at difference tau (drift-smeared
/// Gaussian). Continuous through drift = 0.
double signal_curve(double tau_ps, const AnalyticScenario& s);

struct Peak {
  double tau_ps = 0.0;
  double height = 0.0;  // counts/bin
};

Peak peak(const AnalyticScenario& s);

/// Largest drift keeping the peak within ~99% of its drift-free height:
/// sigma_tau / (2 T_a).
double drift_bound(double sigma_tau_ps, double acquisition_time_s);

/// Mean accidental counts per bin: N_b^A N_b^B T_bin T_a.
double accidental_mean(double background_a_cps, double background_b_cps, double bin_width_ps,
                       double acquisition_time_s);

/// Probability that the signal peak exceeds the n-th order statistic of
/// Gaussian(mu_b, sqrt(mu_b)) accidental peaks.
double prob_success(double s_peak, double mu_b, int order);

/// Peak height that yields probability p_s (closed-form inversion).
double threshold_peak(double p_s, double mu_b, int order);

struct ThresholdAttenuation {
  double c2 = 0.0;  // coefficient of sqrt(N_b^B)
  double c1 = 0.0;  // coefficient of N_b^B
  double eta_b_expanded = 0.0;
  double eta_b_closed_form = 0.0;
  std::optional<double> eta_b_root;  // absent if p_s is unreachable for eta_b <= 1
};

/// Threshold Bob efficiency for success probability p_s at Bob background
/// N_b^B. The eta_b field of the scenario is ignored.
ThresholdAttenuation threshold_attenuation(double p_s, double background_b_cps,
                                           const AnalyticScenario& s);

/// Peak height per unit Bob efficiency.
double peak_per_unit_eta_b(const AnalyticScenario& s);

}  // namespace qtt::analytic
