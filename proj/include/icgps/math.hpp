#pragma once

#include <cmath>
#include <functional>

#include "icgps/rng.hpp"

namespace icgps {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }
inline double normal_log_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }
// Upper tail 1 - Phi(z), accurate for large z.
inline double normal_sf(double z) { return 0.5 * std::erfc(z * M_SQRT1_2); }

// Inverse standard normal CDF (Wichura's PPND16, AS 241). Absolute error
// below 1e-15 over (0, 1).
double normal_quantile(double p);

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double softplus_deriv(double x) {  // logistic
  return x > 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double softplus_inv(double y) {  // y > 0
  return y > 30.0 ? y : std::log(std::expm1(y));
}

// Regularized lower incomplete gamma P(a, x), series/continued-fraction split.
double gamma_p(double a, double x);
// Quantile of Gamma(shape a, rate b): smallest x with P(a, b*x) >= p.
double gamma_quantile(double a, double b, double p);
// Marsaglia-Tsang sampler for Gamma(shape a, rate b).
double gamma_sample(Rng& rng, double a, double b);

inline double normal_sample(Rng& rng) { return normal_quantile(uniform_open01(rng)); }

// Adaptive Gauss-Kronrod (G7/K15) quadrature on [a, b] to absolute tolerance.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol = 1e-8, int max_depth = 48);

}  // namespace icgps
