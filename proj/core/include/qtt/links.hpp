#pragma once

// Physical link descriptions mapped onto (attenuation, background) inputs.

#include <utility>

namespace qtt::links {

struct FiberLink {
  double length_km = 0.0;
  double alpha_dB_per_km = 0.22;
  double background_cps = 1.0e3;

  void validate() const;

  friend bool operator==(const FiberLink&, const FiberLink&) = default;
};

/// -alpha * L in dB.
double fiber_attenuation(const FiberLink& link);

struct FreespaceReceiver {
  double aperture_m = 1.0;  // D_R
  double r0_m = 0.05;       // Fried length at zenith
  double tracking_greenwood_hz = 10.0;   // f_TG
  double tracking_bandwidth_hz = 50.0;   // f_TC
  double greenwood_hz = 50.0;            // f_G
  double ao_bandwidth_hz = 100.0;        // f_c
  int actuators = 25;
  double fov_multiplier = 1.0;  // field of view in units of the diffraction limit

  void validate() const;
  double subaperture_m() const;

  friend bool operator==(const FreespaceReceiver&, const FreespaceReceiver&) = default;
};

/// Tip/tilt tracking only: 0.582 (D_R/r0)^(5/3) + (pi/2 f_TG/f_TC)^2 [rad^2].
double residual_error_tracking(const FreespaceReceiver& rx);

/// Tracking plus AO: 1.3 * 0.28 (d_sub/r0)^(5/3) + (pi/2 f_TG/f_TC)^2 +
/// (f_G/f_c)^(5/3) [rad^2]. The 1.3 factor carries aliasing at 30% of the
/// fitting error.
double residual_error_ao(const FreespaceReceiver& rx);

struct ZenithParams {
  double r0_m = 0.0;
  double greenwood_hz = 0.0;
};

/// r0 cos(z)^(3/5) and f_G cos(z)^(-3/5). Rejects z outside [0, 90).
ZenithParams zenith_scaling(double r0_zenith_m, double greenwood_zenith_hz, double zenith_deg);

/// Receiver evaluated at a zenith angle (r0 and f_G rescaled; f_TG scaled
/// like f_G).
FreespaceReceiver at_zenith(const FreespaceReceiver& rx, double zenith_deg);

/// Marechal approximation exp(-sigma^2). An approximation, not a full
/// coupling model.
double coupling_efficiency(double phase_variance_rad2);

/// Background collected with a wider field of view, proportional to the
/// solid angle (multiplier squared).
double fov_background(double background_at_unit_fov_cps, double fov_multiplier);

}  // namespace qtt::links
