#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace blembed {

inline constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934381868;
inline constexpr double log_sqrt_2pi = 0.918938533204672741780329736405617640;

/// Arguments beyond this magnitude saturate the CDF.
inline constexpr double cdf_saturation = 38.0;
/// Smallest distance from {0, 1} accepted by the quantile.
inline constexpr double quantile_floor = 1e-300;

inline double std_normal_pdf(double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); }

inline double std_normal_log_pdf(double x) { return -0.5 * x * x - log_sqrt_2pi; }

/// Phi(x), evaluated through erfc so both tails keep full relative accuracy.
/// Saturates at Phi(-38) below and at the largest double under 1 above.
inline double std_normal_cdf(double x) {
    if (x < -cdf_saturation) x = -cdf_saturation;
    const double v = 0.5 * std::erfc(-x / std::numbers::sqrt2);
    constexpr double top = 1.0 - std::numeric_limits<double>::epsilon() / 2;
    return v < top ? v : top;
}

/// 1 - Phi(x) without cancellation.
inline double std_normal_sf(double x) { return std_normal_cdf(-x); }

namespace detail {

// Rational approximation of Phi^{-1} on (0, 1/2] with relative error ~1e-9
// (P. J. Acklam's coefficients); only a starting point for the polish below.
inline double rough_lower_quantile(double u) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    if (u < 0.02425) {
        const double q = std::sqrt(-2.0 * std::log(u));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = u - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Root of Phi(x) = u for 0 < u <= 1/2: Newton on log Phi from the rational
// start, kept inside a bisection bracket.
inline double lower_normal_quantile(double u) {
    double lo = -cdf_saturation - 0.5, hi = 0.0;
    double x = std::clamp(rough_lower_quantile(u), lo, hi);
    const double log_u = std::log(u);
    for (int it = 0; it < 60; ++it) {
        const double cdf = std_normal_cdf(x);
        const double step = (std::log(cdf) - log_u) * cdf / std_normal_pdf(x);
        (cdf < u ? lo : hi) = x;
        double next = x - step;
        if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
        if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

} // namespace detail

/// Phi^{-1}(u). Rejects u outside (0, 1) or within 1e-300 of either end.
inline double std_normal_quantile(double u) {
    if (!(u > 0.0 && u < 1.0) || u < quantile_floor || 1.0 - u < quantile_floor)
        throw std::invalid_argument("std_normal_quantile: u must lie in (0, 1)");
    if (u == 0.5) return 0.0;
    if (u < 0.5) return detail::lower_normal_quantile(u);
    return -detail::lower_normal_quantile(1.0 - u);
}

/// log Phi(x) for every finite x. Below -30 an asymptotic Mills-ratio series
/// replaces erfc, which would underflow.
inline double std_normal_log_cdf(double x) {
    if (x > 0.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
    if (x >= -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    const double r = 1.0 / (x * x);
    const double series =
        1.0 + r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 + r * (-945.0 + r * (10395.0 - r * 135135.0))))));
    return std_normal_log_pdf(x) - std::log(-x) + std::log(series);
}

/// The x <= 0 with log Phi(x) = log_u, for any log_u <= log(1/2).
inline double std_normal_quantile_from_log(double log_u) {
    if (!(log_u <= -std::numbers::ln2) || std::isnan(log_u))
        throw std::invalid_argument("std_normal_quantile_from_log: log_u must be at most log(1/2)");
    if (log_u > -690.0) return std_normal_quantile(std::exp(log_u));
    // asymptotic start, then Newton on log Phi with slope phi/Phi
    const double L = -2.0 * log_u;
    double x = -std::sqrt(L - std::log(2.0 * std::numbers::pi * L));
    for (int it = 0; it < 50; ++it) {
        const double lc = std_normal_log_cdf(x);
        const double slope = std::exp(std_normal_log_pdf(x) - lc);
        const double next = x - (lc - log_u) / slope;
        if (std::abs(next - x) <= 1e-15 * std::abs(x)) return next;
        x = next;
    }
    return x;
}

/// Quantile of the upper tail: the x with 1 - Phi(x) = s.
inline double std_normal_upper_quantile(double s) { return -std_normal_quantile(s); }

/// Brownian transition density p(t; x) = exp(-x^2 / 2t) / sqrt(2 pi t).
inline double heat_kernel(double t, double x) {
    if (!(t > 0.0)) throw std::invalid_argument("heat_kernel: t must be positive");
    return inv_sqrt_2pi / std::sqrt(t) * std::exp(-0.5 * x * x / t);
}

/// xi -> Phi'(Phi^{-1}(xi)); concave on (0, 1), symmetric about 1/2, with
/// derivative -Phi^{-1}(xi).
inline double gauss_density_of_quantile(double xi) {
    if (!(xi > 0.0 && xi < 1.0)) throw std::invalid_argument("gauss_density_of_quantile: xi must lie in (0, 1)");
    return std_normal_pdf(std_normal_quantile(xi));
}

} // namespace blembed
