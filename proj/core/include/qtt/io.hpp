#pragma once

// CSV and JSON serialization of results. CSVs have a header row, comma
// separators, '.' decimals and LF line endings; absent values are written
// as "nan". Numbers are written with round-trip precision.

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qtt/analytic.hpp"
#include "qtt/correlator.hpp"
#include "qtt/stats.hpp"

namespace qtt::io {

/// Shortest decimal that reads back to the same double.
std::string format_number(double v);

void write_histogram_csv(std::ostream& out, const CorrelationHistogram& hist);
CorrelationHistogram read_histogram_csv(std::istream& in);

/// Non-finite numbers are written as null.
nlohmann::json to_json(const CorrelationResult& result);

void write_sweep_csv(std::ostream& out, const SweepGrid& grid);
void write_threshold_csv(std::ostream& out, const std::vector<ThresholdPoint>& curve);
void write_adev_csv(std::ostream& out, const AdevCurve& curve);
void write_offset_series_csv(std::ostream& out, const OffsetSeries& series);
void write_fiber_csv(std::ostream& out, const std::vector<FiberPoint>& points);

struct SemRow {
  double attenuation_dB = 0.0;
  SemSample sample;
};
void write_sem_csv(std::ostream& out, const std::vector<SemRow>& rows);

struct AnalyticRow {
  double attenuation_dB = 0.0;
  double background_cps = 0.0;
  double s_peak = 0.0;
  double mu_b = 0.0;
  double p_success = 0.0;
};
void write_analytic_csv(std::ostream& out, const std::vector<AnalyticRow>& rows);

struct FreespaceRow {
  double zenith_deg = 0.0;
  double r0_m = 0.0;
  double greenwood_hz = 0.0;
  double sigma2_tracking = 0.0;
  double sigma2_ao = 0.0;
  double eta_tracking = 0.0;
  double eta_ao = 0.0;
};
void write_freespace_csv(std::ostream& out, const std::vector<FreespaceRow>& rows);

/// Writes text to a file, throwing std::runtime_error on failure.
void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace qtt::io
