#pragma once

// Clock-offset recovery from two time-tag series: Alice-minus-Bob arrival time
// differences within a finite range, histogrammed, with a Gaussian fit of the
// correlation peak and a width/height success test.
//
// Sign convention: tau is the peak of t_A - t_B, so correct_tags(t_B, tau, .) moves
// Bob's tags onto Alice's.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qtt/timetags.hpp"
#include "qtt/units.hpp"

namespace qtt {

/// Half-open difference range [lo, hi) in picoseconds.
struct DifferenceRange {
  TimeTag lo = -1'000'000;
  TimeTag hi = 1'000'000;

  TimeTag width() const { return hi - lo; }

  friend bool operator==(const DifferenceRange&, const DifferenceRange&) = default;
};

/// Left-closed bins of equal width covering [range.lo, range.hi).
struct CorrelationHistogram {
  TimeTag bin_width_ps = 100;
  DifferenceRange range;
  std::vector<std::int64_t> counts;

  std::size_t bin_count() const { return counts.size(); }
  double bin_center_ps(std::size_t j) const;
  std::int64_t total() const;
};

struct PeakFit {
  double tau_hat_ps = 0.0;
  double sigma_tau_ps = 0.0;
  double amplitude = 0.0;  // counts/bin above baseline
  double baseline = 0.0;   // counts/bin
  double fit_rmse = 0.0;   // counts/bin
  bool converged = false;
  int iterations = 0;
  std::size_t window_first = 0;  // fitted bin range, inclusive
  std::size_t window_last = 0;
  std::string failure;  // empty when converged
};

struct CorrelationResult {
  PeakFit fit;
  double n_coincidences = 0.0;  // N_C: counts within +/-3 sigma of the peak
  double n_accidentals = 0.0;   // N_AC
  double n_true = 0.0;          // N_T = N_C - N_AC, clamped at 0
  double sem_ps = 0.0;          // sigma_tau / sqrt(N_T)
  bool success = false;
  std::string diagnostic;
};

struct FitOptions {
  // Fit window half-width in units of the current sigma estimate.
  double window_sigmas = 10.0;
  int max_iterations = 200;
  int max_window_expansions = 4;

  friend bool operator==(const FitOptions&, const FitOptions&) = default;
};

struct CorrelatorParams {
  TimeTag bin_width_ps = 100;
  DifferenceRange range;
  // Expected system jitter; the width test is relative to it.
  double expected_sigma_ps = 405.9;
  double min_width_factor = 0.5;
  double max_width_factor = 2.0;
  // Minimum fitted amplitude in units of sqrt(baseline).
  double min_height_sigmas = 5.0;
  // N_C window half-width in fitted sigmas.
  double coincidence_sigmas = 3.0;
  FitOptions fit;
  // Bob's tags are split into this many contiguous blocks whose histograms
  // are summed. The result does not depend on it.
  int partitions = 1;

  void validate() const;

  friend bool operator==(const CorrelatorParams&, const CorrelatorParams&) = default;
};

/// Every a - b with a in t_A, b in t_B and a - b in [range.lo, range.hi),
/// found with a sliding window over the sorted inputs. Grouped by ascending b.
std::vector<TimeTag> neighbor_differences(std::span<const TimeTag> alice,
                                          std::span<const TimeTag> bob, DifferenceRange range);

std::vector<TimeTag> neighbor_differences(const TimeTagSeries& alice, const TimeTagSeries& bob,
                                          DifferenceRange range);

/// Throws if bin_width does not divide the range width.
CorrelationHistogram build_histogram(std::span<const TimeTag> diffs, TimeTag bin_width_ps,
                                     DifferenceRange range);

/// Histogram of neighbor differences without materializing them.
CorrelationHistogram correlate(const TimeTagSeries& alice, const TimeTagSeries& bob,
                               TimeTag bin_width_ps, DifferenceRange range, int partitions = 1);

/// baseline + amplitude * exp(-(x - mu)^2 / (2 sigma^2)), Levenberg-Marquardt
/// over a window around the maximum bin. Initial guess: mu at the
/// (first) maximum bin, sigma = 2 bins, amplitude = max - median,
/// baseline = median.
PeakFit fit_gaussian_peak(const CorrelationHistogram& hist, const FitOptions& options = {});

/// Quadrature sum of independent jitter contributions.
double combine_jitter(std::span<const double> sigmas_ps);
double combine_jitter(std::initializer_list<double> sigmas_ps);

/// Mean count of bins outside [first, last] times the window's bin count.
double estimate_accidentals(const CorrelationHistogram& hist, std::size_t first,
                            std::size_t last);

/// Scores an already computed histogram.
CorrelationResult evaluate_histogram(const CorrelationHistogram& hist,
                                     const CorrelatorParams& params);

struct OffsetRecovery {
  CorrelationHistogram histogram;
  CorrelationResult result;
};

OffsetRecovery recover_offset_detailed(const TimeTagSeries& alice, const TimeTagSeries& bob,
                                       const CorrelatorParams& params);

CorrelationResult recover_offset(const TimeTagSeries& alice, const TimeTagSeries& bob,
                                 const CorrelatorParams& params);

/// t'_B = (t_B + tau) * (1 + drift).
TimeTagSeries correct_tags(const TimeTagSeries& bob, double tau_ps, double drift);

/// (tau_next - tau_i) / T_a, unitless.
double estimate_drift(double tau_i_ps, double tau_next_ps, double acquisition_time_s);

}  // namespace qtt
