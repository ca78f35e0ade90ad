#pragma once

#include <cmath>
#include <cstdint>

namespace qtt {

// Detection timestamps are signed integer picoseconds. int64 covers about
// +/-106 days at 1 ps resolution.
using TimeTag = std::int64_t;

inline constexpr double kPsPerSecond = 1.0e12;
inline constexpr double kPsPerNs = 1.0e3;

constexpr double seconds_to_ps(double s) { return s * kPsPerSecond; }
constexpr double ps_to_seconds(double ps) { return ps / kPsPerSecond; }

// Nearest picosecond, halves away from zero. Avoids the libm call in
// llround on hot paths; valid for |ps| < 2^52.
inline TimeTag round_ps(double ps) {
  return ps >= 0.0 ? static_cast<TimeTag>(ps + 0.5) : -static_cast<TimeTag>(0.5 - ps);
}

// Power ratio <-> decibels. Losses are negative dB.
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double eta) { return 10.0 * std::log10(eta); }

}  // namespace qtt
