#include "qtt/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <Eigen/Dense>

namespace qtt {

namespace {

void check_range(DifferenceRange range) {
  if (range.hi <= range.lo) throw std::invalid_argument("difference range must have hi > lo");
}

// Calls visit(a - b) for every in-range pair, Bob tags taken from [bob_first, bob_last).
template <typename Visit>
void sweep_differences(std::span<const TimeTag> alice, std::span<const TimeTag> bob,
                       std::size_t bob_first, std::size_t bob_last, DifferenceRange range,
                       Visit&& visit) {
  if (alice.empty() || bob_first >= bob_last) return;
  const TimeTag first_b = bob[bob_first];
  std::size_t start = static_cast<std::size_t>(
      std::lower_bound(alice.begin(), alice.end(), first_b + range.lo) - alice.begin());
  for (std::size_t k = bob_first; k < bob_last; ++k) {
    const TimeTag b = bob[k];
    const TimeTag lower = b + range.lo;
    const TimeTag upper = b + range.hi;
    while (start < alice.size() && alice[start] < lower) ++start;
    for (std::size_t j = start; j < alice.size() && alice[j] < upper; ++j) visit(alice[j] - b);
  }
}

struct FitState {
  double baseline, amplitude, mu, sigma;  // mu, sigma in bins relative to origin
};

struct WindowFit {
  FitState p;
  double ssr = 0.0;
  int iterations = 0;
  bool converged = false;
};

WindowFit levenberg_marquardt(const std::vector<double>& u, const std::vector<double>& y,
                              FitState start, int max_iterations) {
  const std::size_t n = u.size();
  auto residuals = [&](const FitState& p, Eigen::VectorXd& r) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (u[i] - p.mu) / p.sigma;
      r[static_cast<Eigen::Index>(i)] = y[i] - (p.baseline + p.amplitude * std::exp(-0.5 * z * z));
      ssr += r[static_cast<Eigen::Index>(i)] * r[static_cast<Eigen::Index>(i)];
    }
    return ssr;
  };

  WindowFit out;
  out.p = start;
  Eigen::VectorXd r(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), 4);
  double ssr = residuals(out.p, r);
  double lambda = 1e-3;

  for (int it = 1; it <= max_iterations; ++it) {
    out.iterations = it;
    const FitState& p = out.p;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = u[i] - p.mu;
      const double g = std::exp(-0.5 * d * d / (p.sigma * p.sigma));
      const auto row = static_cast<Eigen::Index>(i);
      jac(row, 0) = 1.0;
      jac(row, 1) = g;
      jac(row, 2) = p.amplitude * g * d / (p.sigma * p.sigma);
      jac(row, 3) = p.amplitude * g * d * d / (p.sigma * p.sigma * p.sigma);
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d jtr = jac.transpose() * r;

    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::Matrix4d damped = jtj;
      for (int k = 0; k < 4; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-12);
      const Eigen::Vector4d step = damped.ldlt().solve(jtr);
      FitState trial{p.baseline + step[0], p.amplitude + step[1], p.mu + step[2],
                     p.sigma + step[3]};
      if (!(trial.sigma > 1e-3) || !std::isfinite(trial.mu) || !std::isfinite(trial.amplitude)) {
        lambda *= 10.0;
        continue;
      }
      Eigen::VectorXd r_trial(static_cast<Eigen::Index>(n));
      const double ssr_trial = residuals(trial, r_trial);
      if (ssr_trial <= ssr) {
        const double gain = ssr - ssr_trial;
        out.p = trial;
        r = r_trial;
        ssr = ssr_trial;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        const double step_norm = std::abs(step[2]) + std::abs(step[3]);
        if (gain <= 1e-12 * (ssr + 1e-30) || step_norm < 1e-10) {
          out.converged = true;
          out.ssr = ssr;
          return out;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent direction left: stationary point.
      out.converged = true;
      out.ssr = ssr;
      return out;
    }
  }
  out.ssr = ssr;
  return out;
}

}  // namespace

double CorrelationHistogram::bin_center_ps(std::size_t j) const {
  return static_cast<double>(range.lo) + (static_cast<double>(j) + 0.5) * bin_width_ps;
}

std::int64_t CorrelationHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

void CorrelatorParams::validate() const {
  if (bin_width_ps <= 0) throw std::invalid_argument("bin_width_ps must be > 0");
  check_range(range);
  if (range.width() % bin_width_ps != 0)
    throw std::invalid_argument("bin width must divide the histogram range");
  if (!(expected_sigma_ps > 0.0)) throw std::invalid_argument("expected_sigma_ps must be > 0");
  if (!(min_width_factor > 0.0 && max_width_factor > min_width_factor))
    throw std::invalid_argument("width factors must satisfy 0 < min < max");
  if (!(min_height_sigmas >= 0.0)) throw std::invalid_argument("min_height_sigmas must be >= 0");
  if (!(coincidence_sigmas > 0.0)) throw std::invalid_argument("coincidence_sigmas must be > 0");
  if (partitions < 1) throw std::invalid_argument("partitions must be >= 1");
}

std::vector<TimeTag> neighbor_differences(std::span<const TimeTag> alice,
                                          std::span<const TimeTag> bob, DifferenceRange range) {
  check_range(range);
  std::vector<TimeTag> out;
  sweep_differences(alice, bob, 0, bob.size(), range, [&](TimeTag d) { out.push_back(d); });
  return out;
}

std::vector<TimeTag> neighbor_differences(const TimeTagSeries& alice, const TimeTagSeries& bob,
                                          DifferenceRange range) {
  return neighbor_differences(std::span<const TimeTag>(alice.tags),
                              std::span<const TimeTag>(bob.tags), range);
}

CorrelationHistogram build_histogram(std::span<const TimeTag> diffs, TimeTag bin_width_ps,
                                     DifferenceRange range) {
  check_range(range);
  if (bin_width_ps <= 0) throw std::invalid_argument("bin width must be > 0");
  if (range.width() % bin_width_ps != 0)
    throw std::invalid_argument("bin width must divide the histogram range");
  CorrelationHistogram h;
  h.bin_width_ps = bin_width_ps;
  h.range = range;
  h.counts.assign(static_cast<std::size_t>(range.width() / bin_width_ps), 0);
  for (TimeTag d : diffs) {
    if (d < range.lo || d >= range.hi) continue;
    ++h.counts[static_cast<std::size_t>((d - range.lo) / bin_width_ps)];
  }
  return h;
}

CorrelationHistogram correlate(const TimeTagSeries& alice, const TimeTagSeries& bob,
                               TimeTag bin_width_ps, DifferenceRange range, int partitions) {
  auto h = build_histogram({}, bin_width_ps, range);
  if (partitions < 1) throw std::invalid_argument("partitions must be >= 1");
  const std::span<const TimeTag> a(alice.tags);
  const std::span<const TimeTag> b(bob.tags);
  const std::size_t parts = std::min<std::size_t>(static_cast<std::size_t>(partitions),
                                                  std::max<std::size_t>(b.size(), 1));
  auto accumulate_block = [&](std::size_t first, std::size_t last, std::vector<std::int64_t>& c) {
    sweep_differences(a, b, first, last, range, [&](TimeTag d) {
      ++c[static_cast<std::size_t>((d - range.lo) / bin_width_ps)];
    });
  };
  if (parts == 1) {
    accumulate_block(0, b.size(), h.counts);
    return h;
  }
  std::vector<std::vector<std::int64_t>> partial(parts, std::vector<std::int64_t>(h.counts.size(), 0));
  {
    std::vector<std::jthread> workers;
    for (std::size_t p = 0; p < parts; ++p) {
      const std::size_t first = b.size() * p / parts;
      const std::size_t last = b.size() * (p + 1) / parts;
      workers.emplace_back([&, first, last, p] { accumulate_block(first, last, partial[p]); });
    }
  }
  for (const auto& c : partial)
    for (std::size_t j = 0; j < c.size(); ++j) h.counts[j] += c[j];
  return h;
}

PeakFit fit_gaussian_peak(const CorrelationHistogram& hist, const FitOptions& options) {
  PeakFit fit;
  const std::size_t nbins = hist.bin_count();
  if (nbins == 0) throw std::invalid_argument("cannot fit an empty histogram");

  const auto max_it = std::max_element(hist.counts.begin(), hist.counts.end());
  const std::size_t peak_bin = static_cast<std::size_t>(max_it - hist.counts.begin());
  std::vector<std::int64_t> sorted = hist.counts;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(nbins / 2),
                   sorted.end());
  const double median = static_cast<double>(sorted[nbins / 2]);
  const double peak_count = static_cast<double>(*max_it);

  // Work in bin units relative to the maximum bin.
  FitState state{median, peak_count - median, 0.0, 2.0};
  double half_width = std::ceil(options.window_sigmas * state.sigma);
  WindowFit wf;
  std::size_t first = 0;
  std::size_t last = 0;

  for (int expansion = 0; expansion <= options.max_window_expansions; ++expansion) {
    const double centre = static_cast<double>(peak_bin) + state.mu;
    const double lo = std::max(0.0, std::floor(centre - half_width));
    const double hi = std::min(static_cast<double>(nbins - 1), std::ceil(centre + half_width));
    first = static_cast<std::size_t>(lo);
    last = static_cast<std::size_t>(hi);
    std::vector<double> u;
    std::vector<double> y;
    for (std::size_t j = first; j <= last; ++j) {
      u.push_back(static_cast<double>(j) - static_cast<double>(peak_bin));
      y.push_back(static_cast<double>(hist.counts[j]));
    }
    if (u.size() < 5) {
      fit.failure = "fit window has fewer than 5 bins";
      return fit;
    }
    wf = levenberg_marquardt(u, y, state, options.max_iterations);
    fit.iterations += wf.iterations;
    state = wf.p;
    if (!wf.converged) break;
    const double needed = std::ceil(options.window_sigmas * state.sigma);
    if (needed <= half_width) break;
    half_width = needed;
  }

  fit.window_first = first;
  fit.window_last = last;
  const double bin = static_cast<double>(hist.bin_width_ps);
  fit.tau_hat_ps = hist.bin_center_ps(peak_bin) + state.mu * bin;
  fit.sigma_tau_ps = state.sigma * bin;
  fit.amplitude = state.amplitude;
  fit.baseline = state.baseline;
  fit.fit_rmse = std::sqrt(wf.ssr / static_cast<double>(last - first + 1));
  fit.converged = wf.converged;

  const double centre_bin = static_cast<double>(peak_bin) + state.mu;
  if (!wf.converged) {
    fit.failure = "no convergence within iteration limit";
  } else if (!std::isfinite(fit.tau_hat_ps) || !std::isfinite(fit.sigma_tau_ps) ||
             !std::isfinite(fit.amplitude) || !std::isfinite(fit.baseline)) {
    fit.failure = "non-finite fit parameters";
  } else if (!(fit.sigma_tau_ps > 0.0)) {
    fit.failure = "non-positive width";
  } else if (centre_bin < static_cast<double>(first) || centre_bin > static_cast<double>(last)) {
    fit.failure = "peak centre left the fit window";
  } else if (fit.amplitude < 0.0) {
    fit.failure = "negative amplitude";
  }
  if (!fit.failure.empty()) {
    fit.converged = false;
    fit.amplitude = std::max(fit.amplitude, 0.0);
    if (!(fit.sigma_tau_ps > 0.0)) fit.sigma_tau_ps = std::numeric_limits<double>::min();
  }
  return fit;
}

double combine_jitter(std::span<const double> sigmas_ps) {
  double sum = 0.0;
  for (double s : sigmas_ps) {
    if (!(s >= 0.0)) throw std::invalid_argument("jitter contributions must be >= 0");
    sum += s * s;
  }
  return std::sqrt(sum);
}

double combine_jitter(std::initializer_list<double> sigmas_ps) {
  return combine_jitter(std::span<const double>(sigmas_ps.begin(), sigmas_ps.size()));
}

double estimate_accidentals(const CorrelationHistogram& hist, std::size_t first,
                            std::size_t last) {
  const std::size_t n = hist.bin_count();
  if (first > last || last >= n) throw std::invalid_argument("peak window outside histogram");
  const std::size_t window = last - first + 1;
  if (window >= n) throw std::invalid_argument("peak window covers the entire histogram");
  std::int64_t side = 0;
  for (std::size_t j = 0; j < n; ++j)
    if (j < first || j > last) side += hist.counts[j];
  const double mean = static_cast<double>(side) / static_cast<double>(n - window);
  return mean * static_cast<double>(window);
}

CorrelationResult evaluate_histogram(const CorrelationHistogram& hist,
                                     const CorrelatorParams& params) {
  CorrelationResult res;
  res.sem_ps = std::numeric_limits<double>::infinity();
  res.fit = fit_gaussian_peak(hist, params.fit);
  const PeakFit& fit = res.fit;
  if (!fit.converged) {
    res.diagnostic = "fit failed: " + fit.failure;
    return res;
  }

  const double half = params.coincidence_sigmas * fit.sigma_tau_ps;
  const double lo = (fit.tau_hat_ps - half - static_cast<double>(hist.range.lo)) / hist.bin_width_ps;
  const double hi = (fit.tau_hat_ps + half - static_cast<double>(hist.range.lo)) / hist.bin_width_ps;
  // Bins whose centres fall inside [tau - half, tau + half].
  const double first_d = std::max(0.0, std::ceil(lo - 0.5));
  const double last_d = std::min(static_cast<double>(hist.bin_count()) - 1.0, std::floor(hi - 0.5));
  if (last_d < first_d) {
    res.diagnostic = "coincidence window outside histogram";
    return res;
  }
  const auto first = static_cast<std::size_t>(first_d);
  const auto last = static_cast<std::size_t>(last_d);
  if (last - first + 1 >= hist.bin_count()) {
    res.diagnostic = "coincidence window covers the entire histogram";
    return res;
  }
  std::int64_t nc = 0;
  for (std::size_t j = first; j <= last; ++j) nc += hist.counts[j];
  res.n_coincidences = static_cast<double>(nc);
  res.n_accidentals = estimate_accidentals(hist, first, last);
  res.n_true = std::max(0.0, res.n_coincidences - res.n_accidentals);
  if (res.n_true > 0.0) res.sem_ps = fit.sigma_tau_ps / std::sqrt(res.n_true);

  const double width_ratio = fit.sigma_tau_ps / params.expected_sigma_ps;
  const double height_floor = params.min_height_sigmas * std::sqrt(std::max(fit.baseline, 0.0));
  if (width_ratio < params.min_width_factor || width_ratio > params.max_width_factor) {
    res.diagnostic = "peak width inconsistent with system jitter";
  } else if (!(fit.amplitude > height_floor)) {
    res.diagnostic = "peak not significant above baseline";
  } else {
    res.success = true;
  }
  return res;
}

OffsetRecovery recover_offset_detailed(const TimeTagSeries& alice, const TimeTagSeries& bob,
                                       const CorrelatorParams& params) {
  params.validate();
  OffsetRecovery out;
  out.histogram = correlate(alice, bob, params.bin_width_ps, params.range, params.partitions);
  out.result = evaluate_histogram(out.histogram, params);
  return out;
}

CorrelationResult recover_offset(const TimeTagSeries& alice, const TimeTagSeries& bob,
                                 const CorrelatorParams& params) {
  return recover_offset_detailed(alice, bob, params).result;
}

TimeTagSeries correct_tags(const TimeTagSeries& bob, double tau_ps, double drift) {
  return apply_affine(bob, tau_ps, drift);
}

double estimate_drift(double tau_i_ps, double tau_next_ps, double acquisition_time_s) {
  if (!(acquisition_time_s > 0.0)) throw std::invalid_argument("acquisition time must be > 0");
  return ps_to_seconds(tau_next_ps - tau_i_ps) / acquisition_time_s;
}

}  // namespace qtt
