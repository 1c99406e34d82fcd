#pragma once

#include "errors.hpp"
#include "gaussian_core.hpp"
#include "potentials.hpp"
#include "quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

namespace blembed {

/// g(x) together with g'(x) and whether x fell outside the Gaussian window
/// (in which case both come from linear extrapolation at the window edge).
struct TransportPoint {
    double value = 0.0;
    double slope = 0.0;
    bool extrapolated = false;
};

/// Monotone transport g = F_mu^{-1} o Phi from N(0, 1) to mu, with the CDF,
/// quantile and moments of mu.
///
/// F_mu is tabulated by cumulative Gauss-Kronrod integrals over a uniform
/// node set, accumulated from both ends so that lower and upper tail
/// probabilities keep relative accuracy. Between nodes the CDF is completed
/// by a short adaptive integral, and quantiles are a table search followed by
/// a bracketed Newton polish that uses the exact density.
///
/// Immutable once built; every const member is safe for concurrent readers.
class TransportMap {
public:
    static constexpr int segments = 4096;
    /// Log-density drop from the mode that delimits the window (e^-120 ~ 1e-52).
    static constexpr double window_drop = 120.0;

    double A() const { return A_; }
    double normalizer() const { return std::exp(log_Z_); }
    double log_normalizer() const { return log_Z_; }
    double mean_mu() const { return mean_; }
    double var_mu() const { return var_; }
    double quadrature_tol() const { return tol_; }
    const Potential& potential() const { return pot_; }
    const std::string& label() const { return pot_.label; }
    /// Support window [lo, hi] in the mu variable.
    std::pair<double, double> window() const { return {nodes_.front(), nodes_.back()}; }
    /// Range of standard-normal inputs x for which g(x) lands inside the window.
    std::pair<double, double> gaussian_window() const { return {x_lo_, x_hi_}; }

    /// log of the Lebesgue density of mu.
    double log_density(double y) const { return raw(y) - shift_ - log_H_; }
    double density(double y) const { return std::exp(log_density(y)); }

    double mu_cdf(double x) const {
        const auto [lo, hi] = window();
        if (x <= lo) return lower_tail(x) / H_;
        if (x >= hi) return 1.0 - upper_tail(x) / H_;
        const int i = segment_of(x);
        if (lower_[i] < upper_[i + 1]) return (lower_[i] + partial(nodes_[i], x)) / H_;
        return 1.0 - (upper_[i + 1] + partial(x, nodes_[i + 1])) / H_;
    }

    /// 1 - F_mu(x), accurate in the upper tail.
    double mu_sf(double x) const {
        const auto [lo, hi] = window();
        if (x <= lo) return 1.0 - lower_tail(x) / H_;
        if (x >= hi) return upper_tail(x) / H_;
        const int i = segment_of(x);
        if (upper_[i + 1] <= lower_[i]) return (upper_[i + 1] + partial(x, nodes_[i + 1])) / H_;
        return 1.0 - (lower_[i] + partial(nodes_[i], x)) / H_;
    }

    double mu_quantile(double u) const {
        if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("mu_quantile: u must lie in (0, 1)");
        return u <= 0.5 ? solve_lower(u * H_) : solve_upper((1.0 - u) * H_);
    }

    /// The y with 1 - F_mu(y) = s.
    double mu_upper_quantile(double s) const {
        if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("mu_upper_quantile: s must lie in (0, 1)");
        return s <= 0.5 ? solve_upper(s * H_) : solve_lower((1.0 - s) * H_);
    }

    TransportPoint evaluate(double x) const {
        if (x < x_lo_) return {lo_edge_.value + lo_edge_.slope * (x - x_lo_), lo_edge_.slope, true};
        if (x > x_hi_) return {hi_edge_.value + hi_edge_.slope * (x - x_hi_), hi_edge_.slope, true};
        const double y = x <= 0.0 ? solve_lower(std_normal_cdf(x) * H_) : solve_upper(std_normal_sf(x) * H_);
        return {y, std::exp(std_normal_log_pdf(x) - log_density(y)), false};
    }

    double g(double x) const { return evaluate(x).value; }

    /// g'(x) = Phi'(x) / F_mu'(g(x)).
    double g_prime(double x) const { return evaluate(x).slope; }

    /// Left derivative of log(density) (`right = false`) or right derivative.
    double log_density_slope(double y, bool right) const {
        const double dv = right ? pot_.right_derivative(y) : pot_.left_derivative(y);
        return -dv - (pot_.base == MeasureBase::gaussian ? y / A_ : 0.0);
    }

    friend TransportMap build_transport(Potential potential, double A, double tol);

private:
    TransportMap() = default;

    double raw(double y) const {
        const double v = pot_.value(y);
        return pot_.base == MeasureBase::gaussian ? -v - 0.5 * y * y / A_ : -v;
    }
    double h(double y) const { return std::exp(raw(y) - shift_); }

    double partial(double a, double b) const {
        if (a == b) return 0.0;
        auto f = [this](double y) { return h(y); };
        return quad::integrate(f, a, b, seg_opt_).value;
    }

    int segment_of(double x) const {
        const double pos = (x - nodes_.front()) / spacing_;
        return std::clamp(static_cast<int>(pos), 0, segments - 1);
    }

    // Log-linear continuation of the density beyond the window.
    double lower_tail(double x) const {
        return tail_lo_ * std::exp(std::min(0.0, raw(x) - raw(nodes_.front())));
    }
    double upper_tail(double x) const {
        return tail_hi_ * std::exp(std::min(0.0, raw(x) - raw(nodes_.back())));
    }

    // Solve lower-cumulative(y) = target (unnormalised mass).
    double solve_lower(double target) const {
        if (target <= lower_[0]) {
            const double slope = std::max(slope_lo_, 1e-300);
            return nodes_.front() - std::log(lower_[0] / std::max(target, 1e-320)) / slope;
        }
        const auto it = std::upper_bound(lower_.begin(), lower_.end(), target);
        const int i = std::clamp(static_cast<int>(it - lower_.begin()) - 1, 0, segments - 1);
        return newton_in_segment(i, target, true);
    }

    // Solve upper-cumulative(y) = target.
    double solve_upper(double target) const {
        if (target <= upper_[segments]) {
            const double slope = std::max(slope_hi_, 1e-300);
            return nodes_.back() + std::log(upper_[segments] / std::max(target, 1e-320)) / slope;
        }
        // upper_ is decreasing; find i with upper_[i+1] <= target < upper_[i].
        const auto it = std::lower_bound(upper_.rbegin(), upper_.rend(), target);
        const int i = std::clamp(segments - static_cast<int>(it - upper_.rbegin()), 0, segments - 1);
        return newton_in_segment(i, target, false);
    }

    // 5-point Gauss-Legendre; used only for the tiny moves of late Newton steps.
    double short_integral(double a, double b) const {
        static constexpr double x[] = {0.0, 0.5384693101056831, 0.9061798459386640};
        static constexpr double w[] = {0.5688888888888889, 0.4786286704993665, 0.2369268850561891};
        const double c = 0.5 * (a + b), r = 0.5 * (b - a);
        return r * (w[0] * h(c) + w[1] * (h(c - r * x[1]) + h(c + r * x[1])) + w[2] * (h(c - r * x[2]) + h(c + r * x[2])));
    }

    double newton_in_segment(int i, double target, bool from_left) const {
        double lo = nodes_[i], hi = nodes_[i + 1];
        const double base = from_left ? lower_[i] : upper_[i + 1];
        const double frac = std::clamp((target - base) / seg_[i], 0.0, 1.0);
        double y = from_left ? lo + frac * spacing_ : hi - frac * spacing_;
        // mass between the anchoring node and y
        auto full = [&](double at) { return from_left ? partial(nodes_[i], at) : partial(at, nodes_[i + 1]); };
        double acc = full(y);
        for (int it = 0; it < 60; ++it) {
            // residual > 0 means y lies to the right of the root
            const double residual = from_left ? base + acc - target : target - (base + acc);
            (residual > 0.0 ? hi : lo) = y;
            const double step = residual / h(y);
            double next = y - step;
            if (std::abs(next - y) <= 1e-14 * std::max(1.0, std::abs(y)) || hi - lo <= 1e-15 * std::max(1.0, std::abs(y)))
                return std::clamp(next, lo, hi);
            if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - y) < 1e-4 * spacing_)
                acc += (from_left ? 1.0 : -1.0) * short_integral(y, next);
            else
                acc = full(next);
            y = next;
        }
        return y;
    }

    Potential pot_;
    double A_ = 1.0;
    double tol_ = 1e-10;
    double shift_ = 0.0;
    double H_ = 1.0;
    double log_H_ = 0.0;
    double log_Z_ = 0.0;
    double spacing_ = 0.0;
    double tail_lo_ = 0.0, tail_hi_ = 0.0;
    double slope_lo_ = 0.0, slope_hi_ = 0.0;
    double mean_ = 0.0, var_ = 0.0;
    double x_lo_ = 0.0, x_hi_ = 0.0;
    TransportPoint lo_edge_, hi_edge_;
    quad::Options seg_opt_;
    std::vector<double> nodes_, seg_, lower_, upper_;
};

/// Tabulates mu for `potential` against N(0, A) (or Lebesgue measure for
/// slope-map potentials, where A is only the comparison variance 1/alpha).
/// Throws divergent_normalizer when no finite window carries the mass.
inline TransportMap build_transport(Potential potential, double A, double tol = 1e-10) {
    if (!(A > 0.0) || !std::isfinite(A)) throw std::invalid_argument("build_transport: A must be positive");
    if (!(tol > 0.0)) throw std::invalid_argument("build_transport: tolerance must be positive");
    TransportMap T;
    T.pot_ = std::move(potential);
    T.A_ = A;
    T.tol_ = tol;
    const double scale = std::sqrt(A);
    const double max_reach = 1e6 * scale;

    auto raw_checked = [&](double y) {
        const double r = T.raw(y);
        if (std::isnan(r) || r == std::numeric_limits<double>::infinity())
            throw std::invalid_argument("potential '" + T.pot_.label + "' is not finite at " + std::to_string(y));
        return r;
    };

    // Locate the mode on a scan that widens until the maximum is interior.
    double mode = 0.0, best = -std::numeric_limits<double>::infinity();
    for (double reach = 64.0 * scale;; reach *= 4.0) {
        if (reach > max_reach) throw divergent_normalizer("normalizer of '" + T.pot_.label + "' diverges (no interior mode)");
        constexpr int n = 4097;
        int arg = 0;
        best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            const double y = -reach + 2.0 * reach * j / (n - 1);
            const double r = raw_checked(y);
            if (r > best) best = r, arg = j;
        }
        if (arg > 0 && arg < n - 1) {
            mode = -reach + 2.0 * reach * arg / (n - 1);
            break;
        }
    }
    T.shift_ = best;
    if (!std::isfinite(best)) throw divergent_normalizer("potential '" + T.pot_.label + "' has no finite mass");

    // Walk outward until the log-density has dropped by window_drop.
    auto find_edge = [&](double dir) {
        const double level = best - TransportMap::window_drop;
        double inside = mode, step = scale / 8.0, y = mode;
        while (raw_checked(y) > level) {
            inside = y;
            y += dir * step;
            step *= 1.1;
            if (std::abs(y - mode) > max_reach)
                throw divergent_normalizer("normalizer of '" + T.pot_.label + "' diverges (mass does not decay)");
        }
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (inside + y);
            (raw_checked(mid) > level ? inside : y) = mid;
        }
        return y;
    };
    const double lo = find_edge(-1.0), hi = find_edge(1.0);

    constexpr int N = TransportMap::segments;
    T.spacing_ = (hi - lo) / N;
    T.nodes_.resize(N + 1);
    for (int i = 0; i <= N; ++i) T.nodes_[i] = lo + (hi - lo) * double(i) / N;
    T.nodes_.back() = hi;
    for (double y : T.nodes_) raw_checked(y);

    T.seg_opt_ = {0.0, std::clamp(tol * 1e-3, 1e-13, 1e-10), 30, 2000};
    T.seg_.resize(N);
    auto hf = [&T](double y) { return T.h(y); };
    for (int i = 0; i < N; ++i) {
        const auto r = quad::integrate(hf, T.nodes_[i], T.nodes_[i + 1], T.seg_opt_);
        if (!r.converged && r.abs_error > 1e-8 * std::abs(r.value))
            throw divergent_normalizer("normalizer quadrature for '" + T.pot_.label +
                                       "' did not converge after 30 refinement levels");
        T.seg_[i] = r.value;
    }

    T.slope_lo_ = T.log_density_slope(lo, false);
    T.slope_hi_ = -T.log_density_slope(hi, true);
    T.tail_lo_ = T.slope_lo_ > 0.0 ? T.h(lo) / T.slope_lo_ : T.h(lo) * (hi - lo);
    T.tail_hi_ = T.slope_hi_ > 0.0 ? T.h(hi) / T.slope_hi_ : T.h(hi) * (hi - lo);

    T.lower_.resize(N + 1);
    T.upper_.resize(N + 1);
    T.lower_[0] = T.tail_lo_;
    for (int i = 0; i < N; ++i) T.lower_[i + 1] = T.lower_[i] + T.seg_[i];
    T.upper_[N] = T.tail_hi_;
    for (int i = N - 1; i >= 0; --i) T.upper_[i] = T.upper_[i + 1] + T.seg_[i];
    T.H_ = T.lower_[N] + T.tail_hi_;
    if (!(T.H_ > 0.0) || !std::isfinite(T.H_)) throw divergent_normalizer("normalizer of '" + T.pot_.label + "' is not finite");
    if ((T.tail_lo_ + T.tail_hi_) / T.H_ > 1e-6)
        throw divergent_normalizer("normalizer of '" + T.pot_.label + "' diverges (boundary mass above 1e-6)");
    T.log_H_ = std::log(T.H_);
    T.log_Z_ = T.shift_ + T.log_H_;
    if (T.pot_.base == MeasureBase::gaussian) T.log_Z_ -= 0.5 * std::log(2.0 * std::numbers::pi * A);
    if (T.log_Z_ > 700.0) throw divergent_normalizer("normalizer of '" + T.pot_.label + "' overflows");

    // Moments by the same segment quadrature.
    quad::Options mopt = T.seg_opt_;
    mopt.abs_tol = 1e-17 * T.H_ / N * (1.0 + std::abs(lo) + std::abs(hi));
    double m1 = 0.0;
    for (int i = 0; i < N; ++i)
        m1 += quad::integrate([&T](double y) { return y * T.h(y); }, T.nodes_[i], T.nodes_[i + 1], mopt).value;
    T.mean_ = m1 / T.H_;
    double m2 = 0.0;
    const double m = T.mean_;
    for (int i = 0; i < N; ++i)
        m2 += quad::integrate([&T, m](double y) { return (y - m) * (y - m) * T.h(y); }, T.nodes_[i], T.nodes_[i + 1], mopt)
                  .value;
    T.var_ = m2 / T.H_;

    // Gaussian-side window: g maps [x_lo, x_hi] onto [lo, hi].
    const double p_lo = T.tail_lo_ / T.H_, p_hi = T.tail_hi_ / T.H_;
    T.x_lo_ = p_lo > quantile_floor ? std_normal_quantile(p_lo) : -cdf_saturation;
    T.x_hi_ = p_hi > quantile_floor ? std_normal_upper_quantile(p_hi) : cdf_saturation;
    T.lo_edge_ = {lo, std::exp(std_normal_log_pdf(T.x_lo_) - T.log_density(lo)), true};
    T.hi_edge_ = {hi, std::exp(std_normal_log_pdf(T.x_hi_) - T.log_density(hi)), true};
    return T;
}

/// Identifies a built transport (potential label and A) so that consumers of
/// an ensemble can check it came from the map they were handed.
inline std::string provenance(const TransportMap& T) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", T.A());
    return T.label() + "|A=" + buf;
}

struct GPrimeBound {
    double max_g_prime = 0.0;
    double arg_max = 0.0;
    double bound = 0.0;
    bool pass = false;
};

/// max g' over the grid against sqrt(A); passes iff max <= sqrt(A) (1 + 1e-8).
inline GPrimeBound check_g_prime_bound(const TransportMap& T, std::span<const double> grid) {
    GPrimeBound out;
    out.bound = std::sqrt(T.A());
    out.max_g_prime = -std::numeric_limits<double>::infinity();
    for (double x : grid) {
        const double gp = T.g_prime(x);
        if (gp > out.max_g_prime) out.max_g_prime = gp, out.arg_max = x;
    }
    out.pass = out.max_g_prime <= out.bound * (1.0 + 1e-8);
    return out;
}

struct HazardViolation {
    double x;
    /// 0: F'/F vs Phi'/Phi, 1: F' vs Phi'. Offset by 2 for the V'_+ variant.
    int which;
    double lhs, rhs;
};

struct HazardReport {
    std::size_t points = 0;
    double worst_relative_deficit = -std::numeric_limits<double>::infinity();
    std::vector<HazardViolation> violations;
    bool pass() const { return violations.empty(); }
};

namespace detail {
inline void require_convex_gaussian(const TransportMap& T, const char* op) {
    if (T.potential().base != MeasureBase::gaussian || !T.potential().convex)
        throw nonconvex_potential(std::string(op) + " requires a convex potential relative to N(0, A); '" + T.label() +
                                  "' is not");
}
} // namespace detail

/// Checks F'/F(x) >= Phi'/Phi(x + V'(x)) and F'(x) >= Phi'(x + V'(x)) for both
/// one-sided derivatives, in coordinates rescaled to A = 1. Relative slack 1e-9.
inline HazardReport check_hazard_inequalities(const TransportMap& T, std::span<const double> grid) {
    detail::require_convex_gaussian(T, "check_hazard_inequalities");
    const double s = std::sqrt(T.A());
    const auto& pot = T.potential();
    HazardReport rep;
    auto record = [&](double x, int which, double lhs, double rhs) {
        const double deficit = (rhs - lhs) / rhs;
        rep.worst_relative_deficit = std::max(rep.worst_relative_deficit, deficit);
        if (deficit > 1e-9) rep.violations.push_back({x, which, lhs, rhs});
    };
    for (double x : grid) {
        const double y = s * x;
        const double F = T.mu_cdf(y);
        const double dF = s * T.density(y);
        for (int side = 0; side < 2; ++side) {
            const double dv = s * (side == 0 ? pot.left_derivative(y) : pot.right_derivative(y));
            const double z = x + dv;
            record(x, 2 * side, dF / F, std_normal_pdf(z) / std_normal_cdf(z));
            record(x, 2 * side + 1, dF, std_normal_pdf(z));
        }
        ++rep.points;
    }
    return rep;
}

struct GCheck {
    double min_G = 0.0;
    double arg_min = 0.0;
    bool pass = false;
};

/// G(xi) = F'(F^{-1}(xi)) - Phi'(Phi^{-1}(xi)) in A = 1 coordinates; passes iff
/// min G >= -1e-9.
inline GCheck check_G_nonnegative(const TransportMap& T, std::span<const double> xi_grid) {
    detail::require_convex_gaussian(T, "check_G_nonnegative");
    const double s = std::sqrt(T.A());
    GCheck out;
    out.min_G = std::numeric_limits<double>::infinity();
    for (double xi : xi_grid) {
        const double G = s * T.density(T.mu_quantile(xi)) - gauss_density_of_quantile(xi);
        if (G < out.min_G) out.min_G = G, out.arg_min = xi;
    }
    out.pass = out.min_G >= -1e-9;
    return out;
}

} // namespace blembed
