#pragma once

// Independent reference computations for test code: direct numerical
// integration of the drift-smeared coincidence rate and of the density of
// the largest accidental peak.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace qtt::oracle {

inline double gaussian_pdf(double x, double sigma) {
  return std::exp(-0.5 * (x / sigma) * (x / sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

// Counts per bin at difference tau: the true-coincidence rate N_T / T_a
// integrated over the acquisition, each emission time t contributing a
// Gaussian centred on drift * t.
inline double signal_by_quadrature(double tau_ps, double n_true, double sigma_ps, double drift,
                                   double t_a_s, double bin_ps) {
  const double rate = n_true / t_a_s;
  auto f = [&](double t_s) { return gaussian_pdf(tau_ps - drift * t_s * 1e12, sigma_ps); };
  if (drift == 0.0) return rate * t_a_s * f(0.0) * bin_ps;
  // Split at the emission time whose Gaussian is centred on tau so the
  // adaptive rule sees the peak.
  const double centre = tau_ps / (drift * 1e12);
  const double w = sigma_ps / std::abs(drift * 1e12);
  std::vector<double> cuts{0.0, t_a_s};
  for (double k : {-12.0, -3.0, -1.0, 0.0, 1.0, 3.0, 12.0}) {
    const double c = centre + k * w;
    if (c > 0.0 && c < t_a_s) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    sum += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1],
                                                                         12, 1e-13);
  return rate * sum * bin_ps;
}

inline double normal_cdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc((mu - x) / (sigma * std::numbers::sqrt2));
}

// P(0 < max of n Normal(mu, sqrt(mu)) peaks < s) from the density of the
// largest order statistic, n f(x) F(x)^(n-1).
inline double max_order_probability(double s, double mu, int n) {
  const double sd = std::sqrt(mu);
  auto density = [&](double x) {
    return n * gaussian_pdf(x - mu, sd) * std::pow(normal_cdf(x, mu, sd), n - 1);
  };
  if (s <= 0.0) return 0.0;
  // Piecewise over +/-1 sd slices around the bulk keeps the rule well inside its depth.
  std::vector<double> cuts{0.0};
  for (double k = -10.0; k <= 10.0; k += 1.0) {
    const double c = mu + k * sd;
    if (c > 0.0 && c < s) cuts.push_back(c);
  }
  cuts.push_back(s);
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    sum += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(density, cuts[i],
                                                                         cuts[i + 1], 12, 1e-12);
  return sum;
}

}  // namespace qtt::oracle
