#pragma once

// Run configuration: YAML (or JSON) files whose keys carry their units
// (`*_ps`, `*_ns`, `*_cps`, `*_dB`, `*_s`, `*_km`, `*_m`, `*_hz`), named
// hardware presets, and a normalized JSON snapshot that loads back to the
// same configuration.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qtt/links.hpp"
#include "qtt/stats.hpp"

namespace qtt {

/// Schema or value error. `field` is the dotted key path, `line` is 1-based
/// (0 when unknown).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, int line, const std::string& message);

  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

struct DetectorPreset {
  std::string name;
  double jitter_det_ps = 0.0;
  double jitter_tt_ps = 0.0;
  double dead_time_ps = 0.0;
  TimeTag bin_width_ps = 100;
};

struct ClockPreset {
  std::string name;
  double drift = 0.0;
  double freq_jitter = 0.0;
};

/// SPAD, SNSPD. SOTA uses SNSPD hardware.
const DetectorPreset& detector_preset(const std::string& name);
/// RbFS, CsFS, perfect, SOTA.
const ClockPreset& clock_preset(const std::string& name);
std::vector<std::string> detector_preset_names();
std::vector<std::string> clock_preset_names();
std::vector<std::string> scenario_preset_names();

void apply_detector(StreamConfig& streams, CorrelatorParams& correlator, const DetectorPreset& d);
void apply_clock(ClockModel& clock, const ClockPreset& c);

struct SweepSpec {
  std::vector<double> attenuations_dB{-10, -20, -30, -40, -50};
  std::vector<double> background_cps{0, 2e5, 4e5, 6e5, 8e5};
  int trials = 50;
  double level = 0.99;

  friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

struct SemSpec {
  std::vector<double> attenuations_dB{-33, -30, -27, -24, -21, -18};
  int runs = 200;

  friend bool operator==(const SemSpec&, const SemSpec&) = default;
};

struct TrackingSpec {
  int acquisitions = 600;
  std::size_t max_m = 100;
  bool feedback = false;

  friend bool operator==(const TrackingSpec&, const TrackingSpec&) = default;
};

struct FiberSpec {
  links::FiberLink link;
  std::vector<double> lengths_km{0, 50, 100, 150, 200, 250, 300, 350, 400};
  int trials = 100;

  friend bool operator==(const FiberSpec&, const FiberSpec&) = default;
};

struct AnalyticSpec {
  int order = 14;
  std::vector<double> attenuations_dB;  // empty: the sweep's attenuations
  double level = 0.99;

  friend bool operator==(const AnalyticSpec&, const AnalyticSpec&) = default;
};

struct FreespaceSpec {
  links::FreespaceReceiver receiver;
  std::vector<double> zenith_deg{0, 10, 20, 30, 40, 50, 60, 70, 80};

  friend bool operator==(const FreespaceSpec&, const FreespaceSpec&) = default;
};

struct RunConfig {
  Scenario scenario;
  // Unset: expected_sigma follows the receivers' jitter.
  std::optional<double> expected_sigma_ps;
  SweepSpec sweep;
  SemSpec sem;
  TrackingSpec tracking;
  FiberSpec fiber;
  AnalyticSpec analytic;
  FreespaceSpec freespace;
  std::optional<std::uint64_t> seed;

  /// Recomputes derived fields (expected jitter) and validates.
  void finalize();

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Scenario presets: reference (2 Mcps, -23 dB, 900 kcps, 40% heralding, SPAD),
/// daytime (2.14 Mcps background), nighttime (100 kcps), sota.
RunConfig scenario_preset(const std::string& name);

/// Parses YAML text. A `preset` key selects the base configuration, or
/// `base` when given; without either, the scenario sections are required.
RunConfig parse_config(const std::string& text, const std::string& source_name = "<config>");
RunConfig parse_config(const std::string& text, const std::string& source_name,
                       const RunConfig* base);
RunConfig load_config(const std::string& path, const RunConfig* base = nullptr);

/// Complete, preset-free description that parse_config reads back to an
/// equal configuration.
nlohmann::json to_json(const RunConfig& config);

}  // namespace qtt
