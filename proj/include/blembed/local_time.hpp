#pragma once

#include "ensemble.hpp"
#include "gaussian_core.hpp"
#include "quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace blembed {

/// Three equivalent representations of E[L^x_t] for standard Brownian motion.
enum class LocalTimeFormula {
    /// int_0^t p(s; x) ds, integrated in u = sqrt(s)
    occupation,
    /// 2 int_0^inf (y - |x|)^+ p(t; y) dy
    reflection,
    /// 2 int_0^inf (sqrt(t) y - |x|)^+ p(1; y) dy
    scaled,
};

namespace detail {
inline quad::Options local_time_quad() { return {1e-300, 1e-13, 40, 4000}; }
} // namespace detail

inline double expected_local_time(double x, double t, LocalTimeFormula formula = LocalTimeFormula::occupation) {
    if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("expected_local_time: t must be positive");
    const double ax = std::abs(x);
    const auto opt = detail::local_time_quad();
    switch (formula) {
    case LocalTimeFormula::occupation: {
        // p(u^2; x) 2u du = sqrt(2/pi) exp(-x^2 / 2u^2) du, smooth and bounded on [0, sqrt t]
        const double r = std::sqrt(t);
        auto f = [ax](double u) { return u > 0.0 ? std::exp(-0.5 * (ax / u) * (ax / u)) : (ax == 0.0 ? 1.0 : 0.0); };
        return std::sqrt(2.0 / std::numbers::pi) * quad::integrate(f, 0.0, r, opt).value;
    }
    case LocalTimeFormula::reflection: {
        const double s = std::sqrt(t);
        auto f = [ax, t](double y) { return (y - ax) * heat_kernel(t, y); };
        return 2.0 * quad::integrate_piecewise(f, ax, ax + 40.0 * s, {ax + 2.0 * s, ax + 8.0 * s}, opt).value;
    }
    case LocalTimeFormula::scaled: {
        const double s = std::sqrt(t), y0 = ax / s;
        auto f = [ax, s](double y) { return (s * y - ax) * std_normal_pdf(y); };
        return 2.0 * quad::integrate_piecewise(f, y0, y0 + 40.0, {y0 + 2.0, y0 + 8.0}, opt).value;
    }
    }
    throw std::invalid_argument("expected_local_time: unknown formula");
}

namespace detail {
/// var_x may exceed A by quadrature noise; anything larger is an upstream error.
inline double clamp_variance(double A, double var_x, const char* op) {
    if (!(A > 0.0)) throw std::invalid_argument(std::string(op) + ": A must be positive");
    if (!(var_x >= 0.0)) throw std::invalid_argument(std::string(op) + ": var_x must be nonnegative");
    if (var_x > A * (1.0 + 1e-9) + 1e-12)
        throw std::invalid_argument(std::string(op) + ": var_x exceeds A (" + std::to_string(var_x) + " > " +
                                    std::to_string(A) + ")");
    return std::min(var_x, A);
}
} // namespace detail

/// int_0^{(A - var_x)^2 / A} p(s; sqrt(x^2 + A)) ds
inline double est1_lower(double x, double A, double var_x) {
    const double v = detail::clamp_variance(A, var_x, "est1_lower");
    const double t = (A - v) * (A - v) / A;
    if (t == 0.0) return 0.0;
    return expected_local_time(std::sqrt(x * x + A), t);
}

/// 2 (A(1+q))^{1/(2q)} p(1; x / sqrt(A(1+q))) (A - var_x)^{1/(2p)}, q = p/(p-1)
inline double est2_upper(double x, double A, double var_x, double p) {
    if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("est2_upper: p must be > 1");
    const double v = detail::clamp_variance(A, var_x, "est2_upper");
    const double q = p / (p - 1.0);
    const double c = A * (1.0 + q);
    return 2.0 * std::pow(c, 1.0 / (2.0 * q)) * std_normal_pdf(x / std::sqrt(c)) * std::pow(A - v, 1.0 / (2.0 * p));
}

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
    /// Paths with T > A whose residual time was clamped to zero.
    std::size_t clamps = 0;
};

namespace detail {
template <class F>
McEstimate sample_mean(const EmbeddingEnsemble& e, F&& per_path) {
    if (e.empty()) throw std::invalid_argument("Monte Carlo estimate over an empty ensemble");
    McEstimate out;
    out.n = e.size();
    // Welford keeps the variance accurate when the mean is far from zero.
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        const double v = per_path(e.samples[i], out);
        const double d = v - mean;
        mean += d / double(i + 1);
        m2 += d * (v - mean);
    }
    out.estimate = mean;
    out.std_error = out.n > 1 ? std::sqrt(m2 / double(out.n - 1) / double(out.n)) : 0.0;
    return out;
}
} // namespace detail

/// E[L^x_A - L^x_T] = E[ E[L^{x - z}_{A - t}] at (t, z) = (T, B(T)) ].
inline McEstimate local_time_gap_mc(const EmbeddingEnsemble& e, double x, double A) {
    return detail::sample_mean(e, [x, A](const EmbeddingSample& s, McEstimate& acc) {
        const double residual = A - s.T;
        if (residual <= 0.0) {
            if (residual < 0.0) ++acc.clamps;
            return 0.0;
        }
        return expected_local_time(x - s.bt, residual);
    });
}

struct OccupationBound {
    double t = 0.0;
    double x = 0.0;
    McEstimate lhs;
    double rhs = 0.0;
    bool pass = false;
};

/// E[int_0^t p(s; |x - B(T)|) ds] <= int_0^{A + t} p(s; x) ds, within 3 SE.
inline OccupationBound occupation_bound_check(const EmbeddingEnsemble& e, double x, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("occupation_bound_check: t must be positive");
    OccupationBound out;
    out.t = t;
    out.x = x;
    out.lhs = detail::sample_mean(e, [x, t](const EmbeddingSample& s, McEstimate&) {
        return expected_local_time(x - s.bt, t);
    });
    out.rhs = expected_local_time(x, e.A + t);
    out.pass = out.lhs.estimate <= out.rhs + 3.0 * out.lhs.std_error;
    return out;
}

} // namespace blembed
