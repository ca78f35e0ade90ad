#pragma once

namespace qtt::special {

/// erf(a) - erf(b) without cancellation when a and b are close or share a
/// far tail.
double erf_diff(double a, double b);

/// erf(x) - erf(x - h) for h >= 0, exact in relative terms when h is tiny
/// against x (the width is never recovered by subtraction).
double erf_increment(double x, double h);

/// erf(x) / x, continuous through x = 0 where it equals 2/sqrt(pi).
double erf_over_x(double x);

/// Inverse complementary error function on (0, 2).
double erfc_inv(double y);

}  // namespace qtt::special
