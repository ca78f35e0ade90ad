#include "qtt/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/tools/roots.hpp>

#include "qtt/special.hpp"
#include "qtt/units.hpp"

namespace qtt::analytic {

namespace {

void require_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0))
    throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
}

// Drift accumulated over the acquisition, in ps.
double drift_span_ps(const AnalyticScenario& s) {
  return seconds_to_ps(s.acquisition_time_s) * s.drift;
}

}  // namespace

void AnalyticScenario::validate() const {
  if (!(n_pair >= 0.0)) throw std::invalid_argument("n_pair must be >= 0");
  require_unit(eta_herald, "eta_herald");
  require_unit(eta_a, "eta_a");
  require_unit(eta_b, "eta_b");
  require_unit(eta_dead_a, "eta_dead_a");
  require_unit(eta_dead_b, "eta_dead_b");
  if (!(sigma_tau_ps > 0.0)) throw std::invalid_argument("sigma_tau_ps must be > 0");
  if (!(acquisition_time_s > 0.0)) throw std::invalid_argument("acquisition_time_s must be > 0");
  if (!(bin_width_ps > 0.0)) throw std::invalid_argument("bin_width_ps must be > 0");
  if (!(background_a_cps >= 0.0 && background_b_cps >= 0.0))
    throw std::invalid_argument("background rates must be >= 0");
  if (order < 1) throw std::invalid_argument("order must be >= 1");
  if (!std::isfinite(drift)) throw std::invalid_argument("drift must be finite");
}

double true_coincidences(const AnalyticScenario& s) {
  return s.n_pair * s.eta_herald * s.eta_herald * s.eta_a * s.eta_b * s.eta_dead_a * s.eta_dead_b;
}

double signal_curve(double tau_ps, const AnalyticScenario& s) {
  s.validate();
  const double n_t = true_coincidences(s);
  const double span = drift_span_ps(s);
  const double root2_sigma = std::numbers::sqrt2 * s.sigma_tau_ps;
  if (span == 0.0) {
    const double z = tau_ps / s.sigma_tau_ps;
    return n_t * s.bin_width_ps / (s.sigma_tau_ps * std::sqrt(2.0 * std::numbers::pi)) *
           std::exp(-0.5 * z * z);
  }
  // Negative drift mirrors the window onto [span, 0].
  const double width = std::abs(span) / root2_sigma;
  const double upper = (span > 0.0 ? tau_ps : tau_ps - span) / root2_sigma;
  return n_t * s.bin_width_ps / (2.0 * std::abs(span)) * special::erf_increment(upper, width);
}

Peak peak(const AnalyticScenario& s) {
  s.validate();
  const double span = drift_span_ps(s);
  const double x = span / (2.0 * std::numbers::sqrt2 * s.sigma_tau_ps);
  // N_T / span * erf(x) = N_T / (2 sqrt2 sigma) * erf(x)/x
  const double height = true_coincidences(s) * s.bin_width_ps /
                        (2.0 * std::numbers::sqrt2 * s.sigma_tau_ps) * special::erf_over_x(x);
  return Peak{0.5 * span, height};
}

double drift_bound(double sigma_tau_ps, double acquisition_time_s) {
  if (!(sigma_tau_ps > 0.0 && acquisition_time_s > 0.0))
    throw std::invalid_argument("drift_bound needs positive jitter and acquisition time");
  return sigma_tau_ps / (2.0 * seconds_to_ps(acquisition_time_s));
}

double accidental_mean(double background_a_cps, double background_b_cps, double bin_width_ps,
                       double acquisition_time_s) {
  if (!(background_a_cps >= 0.0 && background_b_cps >= 0.0))
    throw std::invalid_argument("background rates must be >= 0");
  if (!(bin_width_ps > 0.0 && acquisition_time_s > 0.0))
    throw std::invalid_argument("bin width and acquisition time must be > 0");
  return background_a_cps * background_b_cps * ps_to_seconds(bin_width_ps) * acquisition_time_s;
}

double prob_success(double s_peak, double mu_b, int order) {
  if (order < 1) throw std::invalid_argument("order must be >= 1");
  if (!(mu_b >= 0.0)) throw std::invalid_argument("mu_b must be >= 0");
  if (mu_b == 0.0) return s_peak > 0.0 ? 1.0 : 0.0;
  const double scale = std::sqrt(2.0 * mu_b);
  const double f_peak = 0.5 * std::erfc((mu_b - s_peak) / scale);
  const double f_zero = 0.5 * std::erfc(mu_b / scale);
  const double p = std::pow(f_peak, order) - std::pow(f_zero, order);
  return std::clamp(p, 0.0, 1.0);
}

double threshold_peak(double p_s, double mu_b, int order) {
  if (!(p_s > 0.0 && p_s < 1.0)) throw std::invalid_argument("p_s must lie in (0, 1)");
  if (order < 1) throw std::invalid_argument("order must be >= 1");
  if (!(mu_b > 0.0)) throw std::invalid_argument("mu_b must be > 0 for threshold inversion");
  const double f_zero = 0.5 * std::erfc(std::sqrt(mu_b / 2.0));
  const double inner = p_s + std::pow(f_zero, order);
  const double arg = 2.0 * std::pow(inner, 1.0 / order);
  if (!(arg > 0.0 && arg < 2.0))
    throw std::domain_error("threshold inversion: p_s unreachable at this background (erfc^-1 "
                            "argument " + std::to_string(arg) + " outside (0, 2))");
  return mu_b - std::sqrt(2.0 * mu_b) * special::erfc_inv(arg);
}

double peak_per_unit_eta_b(const AnalyticScenario& s) {
  AnalyticScenario unit = s;
  unit.eta_b = 1.0;
  return peak(unit).height;
}

ThresholdAttenuation threshold_attenuation(double p_s, double background_b_cps,
                                           const AnalyticScenario& s) {
  s.validate();
  if (!(p_s > 0.0 && p_s < 1.0)) throw std::invalid_argument("p_s must lie in (0, 1)");
  if (!(background_b_cps >= 0.0)) throw std::invalid_argument("background must be >= 0");
  const double per_eta = peak_per_unit_eta_b(s);
  if (!(per_eta > 0.0)) throw std::domain_error("scenario produces no true coincidences");

  const int n = s.order;
  const double big_p = 1.0 + std::pow(2.0, n) * p_s;
  const double p_root = std::pow(big_p, 1.0 / n);
  if (!(p_root > 0.0 && p_root < 2.0))
    throw std::domain_error("threshold expansion: erfc^-1 argument outside (0, 2)");
  const double e = special::erfc_inv(p_root);
  // mu_b per unit Bob background rate.
  const double mu_per_cps = accidental_mean(s.background_a_cps, 1.0, s.bin_width_ps,
                                            s.acquisition_time_s);

  ThresholdAttenuation out;
  out.c2 = -std::sqrt(2.0 * mu_per_cps) * e / per_eta;
  out.c1 = mu_per_cps * (big_p - std::exp(e * e) * p_root) / (big_p * per_eta);
  out.eta_b_expanded = out.c2 * std::sqrt(background_b_cps) + out.c1 * background_b_cps;

  const double mu_b = mu_per_cps * background_b_cps;
  if (mu_b > 0.0) {
    out.eta_b_closed_form = threshold_peak(p_s, mu_b, n) / per_eta;
  } else {
    out.eta_b_closed_form = 0.0;
  }

  if (mu_b > 0.0 && prob_success(per_eta, mu_b, n) >= p_s) {
    auto gap = [&](double eta) { return prob_success(per_eta * eta, mu_b, n) - p_s; };
    boost::uintmax_t iterations = 200;
    const auto bracket = boost::math::tools::toms748_solve(
        gap, 0.0, 1.0, boost::math::tools::eps_tolerance<double>(50), iterations);
    out.eta_b_root = 0.5 * (bracket.first + bracket.second);
  } else if (mu_b == 0.0) {
    out.eta_b_root = 0.0;
  }
  return out;
}

}  // namespace qtt::analytic
