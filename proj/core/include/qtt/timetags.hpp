#pragma once

// Biphoton time-tag synthesis and the channel/clock transformations that turn
// an ideal pair stream into the detection records observed by Alice and Bob.
//
// All functions are pure functions of their inputs and seed.

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "qtt/rng.hpp"
#include "qtt/units.hpp"

namespace qtt {

/// Sorted detection timestamps of a single party.
struct TimeTagSeries {
  std::vector<TimeTag> tags;
  double acquisition_time_s = 0.0;

  std::size_t size() const { return tags.size(); }
  bool empty() const { return tags.empty(); }
  bool is_sorted() const;

  friend bool operator==(const TimeTagSeries&, const TimeTagSeries&) = default;
};

/// Efficiency chain, noise and timing hardware of one receiver.
///
/// The composite detection efficiency is the product of all five factors.
/// Alice keeps eta_rec = eta_trans = 1, which gives
/// eta_A = eta_spec * eta_det * eta_herald; Bob's product is
/// eta_B = eta_ch * eta_herald with eta_ch = eta_spec * eta_det * eta_rec * eta_trans.
struct ChannelParams {
  double eta_spec = 1.0;
  double eta_det = 1.0;
  double eta_rec = 1.0;
  double eta_trans = 1.0;
  double eta_herald = 1.0;
  double background_cps = 0.0;
  double dead_time_ps = 0.0;
  double jitter_det_ps = 0.0;
  double jitter_tt_ps = 0.0;

  /// eta_spec * eta_det * eta_rec * eta_trans.
  double channel_efficiency() const;
  /// channel_efficiency() * eta_herald.
  double detection_efficiency() const;
  /// Quadrature sum of detector and tagger jitter.
  double jitter_ps() const;

  /// Replaces the spectral/detector/receiver/transmission factors by a single
  /// lumped channel loss (negative dB). Heralding is untouched.
  void set_channel_db(double channel_db);

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

/// Bob's clock relative to Alice's: t -> (t + offset) * (1 + drift_eff) where
/// drift_eff ~ Normal(drift, freq_jitter) is drawn once per acquisition.
struct ClockModel {
  double offset_ps = 0.0;
  double drift = 0.0;
  double freq_jitter = 0.0;

  void validate() const;

  friend bool operator==(const ClockModel&, const ClockModel&) = default;
};

struct SourceParams {
  double pair_rate_cps = 2.0e6;
  // Draw exactly round(rate * T_a) pairs instead of a Poisson count.
  bool fixed_count = false;

  friend bool operator==(const SourceParams&, const SourceParams&) = default;
};

enum class DeadTimeModel { paralyzable, nonparalyzable };

/// Everything needed to synthesize one acquisition for both parties.
struct StreamConfig {
  SourceParams source;
  double acquisition_time_s = 1.0;
  ChannelParams alice;
  ChannelParams bob;
  ClockModel clock;
  DeadTimeModel dead_time_model = DeadTimeModel::paralyzable;

  /// Sets eta_herald on both receivers.
  void set_heralding(double eta_herald);
  double heralding() const { return bob.eta_herald; }

  void validate() const;

  friend bool operator==(const StreamConfig&, const StreamConfig&) = default;
};

/// What really happened in a synthesized acquisition. Never handed to the
/// correlator.
struct GroundTruth {
  double clock_offset_ps = 0.0;
  double drift_eff = 0.0;
  // Location of the t_A - t_B correlation peak implied by the clock,
  // averaged over the acquisition window.
  double expected_tau_ps = 0.0;

  std::size_t pairs_generated = 0;
  std::size_t alice_before_dead_time = 0;
  std::size_t alice_after_dead_time = 0;
  std::size_t bob_before_dead_time = 0;
  std::size_t bob_after_dead_time = 0;
  // Pairs with a surviving detection at both parties.
  std::size_t true_coincidences = 0;

  // Per-tag pair index (or -1 for background), aligned with the output
  // series. Filled only when requested.
  std::vector<std::int64_t> alice_pair_ids;
  std::vector<std::int64_t> bob_pair_ids;

  double alice_dead_time_survival() const;
  double bob_dead_time_survival() const;
};

struct SimulatedStreams {
  TimeTagSeries alice;
  TimeTagSeries bob;
  GroundTruth truth;
};

struct BuildOptions {
  bool keep_pair_ids = false;
};

/// Poisson process (or a fixed count of uniform points) on [0, T_a], sorted.
/// Both returned series are identical.
std::pair<TimeTagSeries, TimeTagSeries> generate_pair_stream(double pair_rate_cps,
                                                             double acquisition_time_s,
                                                             RngSeed seed,
                                                             bool fixed_count = false);

/// Independent Normal(0, sigma) displacement of every tag, rounded to 1 ps,
/// then re-sorted.
TimeTagSeries apply_jitter(const TimeTagSeries& series, double sigma_ps, RngSeed seed);

/// Independent survival of each tag with probability eta. Order preserved.
TimeTagSeries apply_loss(const TimeTagSeries& series, double eta, RngSeed seed);

/// Merges a homogeneous Poisson process of the given rate on [0, T_a].
TimeTagSeries inject_background(const TimeTagSeries& series, double rate_cps,
                                double acquisition_time_s, RngSeed seed);

/// Paralyzable: a tag survives iff the previous original tag is at least
/// dead_time earlier. Nonparalyzable: measured from the previous survivor.
TimeTagSeries apply_dead_time(const TimeTagSeries& series, double dead_time_ps,
                              DeadTimeModel model = DeadTimeModel::paralyzable);

/// Applies t -> (t + offset) * (1 + drift_eff) with drift_eff drawn from the
/// clock model.
TimeTagSeries apply_clock(const TimeTagSeries& series, const ClockModel& clock, RngSeed seed);

/// Exact affine map t -> (t + offset) * (1 + drift), rounded to 1 ps. With
/// drift == 0 and an integral offset this is an exact integer shift.
TimeTagSeries apply_affine(const TimeTagSeries& series, double offset_ps, double drift);

/// Draws the per-acquisition effective drift of a clock model.
double draw_effective_drift(const ClockModel& clock, RngSeed seed);

/// Full pipeline: generate -> loss -> jitter -> background -> dead time ->
/// Bob clock.
SimulatedStreams build_bob_stream(const StreamConfig& config, RngSeed seed,
                                  BuildOptions options = {});

/// Same pipeline with an externally fixed effective drift (continuous
/// tracking redraws it per window itself).
SimulatedStreams build_bob_stream(const StreamConfig& config, RngSeed seed, double drift_eff,
                                  BuildOptions options = {});

}  // namespace qtt
