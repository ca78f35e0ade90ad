#include "qtt/links.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qtt::links {

namespace {

double tracking_term(const FreespaceReceiver& rx) {
  const double x = 0.5 * std::numbers::pi * rx.tracking_greenwood_hz / rx.tracking_bandwidth_hz;
  return x * x;
}

}  // namespace

void FiberLink::validate() const {
  if (!(length_km >= 0.0)) throw std::invalid_argument("fiber length_km must be >= 0");
  if (!(alpha_dB_per_km > 0.0)) throw std::invalid_argument("fiber alpha_dB_per_km must be > 0");
  if (!(background_cps >= 0.0)) throw std::invalid_argument("fiber background_cps must be >= 0");
}

double fiber_attenuation(const FiberLink& link) {
  link.validate();
  return -link.alpha_dB_per_km * link.length_km;
}

void FreespaceReceiver::validate() const {
  if (!(aperture_m > 0.0)) throw std::invalid_argument("aperture_m must be > 0");
  if (!(r0_m > 0.0)) throw std::invalid_argument("r0_m must be > 0");
  if (!(tracking_greenwood_hz >= 0.0)) throw std::invalid_argument("tracking_greenwood_hz must be >= 0");
  if (!(tracking_bandwidth_hz > 0.0)) throw std::invalid_argument("tracking_bandwidth_hz must be > 0");
  if (!(greenwood_hz >= 0.0)) throw std::invalid_argument("greenwood_hz must be >= 0");
  if (!(ao_bandwidth_hz > 0.0)) throw std::invalid_argument("ao_bandwidth_hz must be > 0");
  if (actuators < 1) throw std::invalid_argument("actuators must be >= 1");
  if (!(fov_multiplier > 0.0)) throw std::invalid_argument("fov_multiplier must be > 0");
}

double FreespaceReceiver::subaperture_m() const {
  return aperture_m / std::sqrt(static_cast<double>(actuators));
}

double residual_error_tracking(const FreespaceReceiver& rx) {
  rx.validate();
  return 0.582 * std::pow(rx.aperture_m / rx.r0_m, 5.0 / 3.0) + tracking_term(rx);
}

double residual_error_ao(const FreespaceReceiver& rx) {
  rx.validate();
  const double fitting = 0.28 * std::pow(rx.subaperture_m() / rx.r0_m, 5.0 / 3.0);
  const double bandwidth = std::pow(rx.greenwood_hz / rx.ao_bandwidth_hz, 5.0 / 3.0);
  return 1.3 * fitting + tracking_term(rx) + bandwidth;
}

ZenithParams zenith_scaling(double r0_zenith_m, double greenwood_zenith_hz, double zenith_deg) {
  if (!(zenith_deg >= 0.0 && zenith_deg < 90.0))
    throw std::invalid_argument("zenith angle must lie in [0, 90) degrees");
  if (!(r0_zenith_m > 0.0) || !(greenwood_zenith_hz >= 0.0))
    throw std::invalid_argument("zenith_scaling needs r0 > 0 and f_G >= 0");
  const double c = std::cos(zenith_deg * std::numbers::pi / 180.0);
  const double k = std::pow(c, 0.6);
  return ZenithParams{r0_zenith_m * k, greenwood_zenith_hz / k};
}

FreespaceReceiver at_zenith(const FreespaceReceiver& rx, double zenith_deg) {
  rx.validate();
  const auto z = zenith_scaling(rx.r0_m, rx.greenwood_hz, zenith_deg);
  FreespaceReceiver out = rx;
  out.r0_m = z.r0_m;
  out.greenwood_hz = z.greenwood_hz;
  out.tracking_greenwood_hz = zenith_scaling(rx.r0_m, rx.tracking_greenwood_hz, zenith_deg).greenwood_hz;
  return out;
}

double coupling_efficiency(double phase_variance_rad2) {
  if (!(phase_variance_rad2 >= 0.0)) throw std::invalid_argument("phase variance must be >= 0");
  return std::exp(-phase_variance_rad2);
}

double fov_background(double background_at_unit_fov_cps, double fov_multiplier) {
  if (!(background_at_unit_fov_cps >= 0.0) || !(fov_multiplier > 0.0))
    throw std::invalid_argument("fov_background needs rate >= 0 and multiplier > 0");
  return background_at_unit_fov_cps * fov_multiplier * fov_multiplier;
}

}  // namespace qtt::links
