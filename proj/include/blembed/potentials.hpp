#pragma once

#include "errors.hpp"
#include "gaussian_core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace blembed {

using RealFn = std::function<double(double)>;

/// Reference measure a potential tilts.
enum class MeasureBase {
    /// mu(dx) = e^{-V(x)} nu_A(dx) / Z with nu_A = N(0, A).
    gaussian,
    /// mu(dx) = e^{-U(x)} dx / Z'; the slope-map construction.
    lebesgue,
};

/// One-dimensional potential with analytic one-sided derivatives.
struct Potential {
    std::string label;
    MeasureBase base = MeasureBase::gaussian;
    RealFn value;
    RealFn left_derivative;
    RealFn right_derivative;
    bool convex = false;
};

/// Increasing map k with k' >= sqrt(alpha) (and optionally k' <= sqrt(beta)).
/// The potential U = k^2 / 2 - log k' has transport map g = k^{-1}.
struct SlopeMap {
    std::string label;
    RealFn k;
    RealFn k_prime;
    RealFn k_second;
    double alpha = 1.0;
    std::optional<double> beta;
    /// Sharper alpha for which the Gaussian comparison is known to hold even
    /// though k' >= sqrt(alpha) fails.
    std::optional<double> improved_alpha;
};

/// Weighted component (weight, kappa) of a Gaussian log-mixture; two atoms
/// give the (p, q, a, b) family.
struct MixtureAtom {
    double weight;
    double kappa;
};

using ParamMap = std::map<std::string, double>;

namespace detail {

inline double param(const ParamMap& params, const std::string& key, std::optional<double> fallback = {}) {
    if (auto it = params.find(key); it != params.end()) return it->second;
    if (fallback) return *fallback;
    throw std::invalid_argument("missing parameter '" + key + "'");
}

inline std::string fmt_param(double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

inline void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string(what) + " must be a positive finite number");
}

inline void check_mixture(std::span<const MixtureAtom> atoms) {
    if (atoms.empty()) throw std::invalid_argument("log-mixture needs at least one atom");
    double total = 0.0;
    for (const auto& at : atoms) {
        require_positive(at.weight, "mixture weight");
        require_positive(at.kappa, "mixture kappa");
        total += at.weight / std::sqrt(at.kappa);
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("log-mixture constraint sum weight/sqrt(kappa) = 1 violated (got " +
                                    std::to_string(total) + ")");
}

} // namespace detail

inline Potential zero_potential() {
    auto zero = [](double) { return 0.0; };
    return {"zero", MeasureBase::gaussian, zero, zero, zero, true};
}

inline Potential linear_potential(double c) {
    if (!std::isfinite(c)) throw std::invalid_argument("linear potential slope must be finite");
    auto slope = [c](double) { return c; };
    return {"linear(" + detail::fmt_param(c) + ")", MeasureBase::gaussian, [c](double x) { return c * x; }, slope,
            slope, true};
}

/// V(x) = c x^2 / 2.
inline Potential quadratic_potential(double c) {
    detail::require_positive(c, "quadratic scale c");
    auto d = [c](double x) { return c * x; };
    return {"quadratic(" + detail::fmt_param(c) + ")", MeasureBase::gaussian,
            [c](double x) { return 0.5 * c * x * x; }, d, d, true};
}

/// V(x) = c |x|; one-sided derivatives -c and +c at the kink.
inline Potential abs_potential(double c) {
    detail::require_positive(c, "abs scale c");
    return {"abs(" + detail::fmt_param(c) + ")", MeasureBase::gaussian, [c](double x) { return c * std::abs(x); },
            [c](double x) { return x > 0.0 ? c : -c; }, [c](double x) { return x < 0.0 ? -c : c; }, true};
}

/// U(x) = x^2/2 + x^4 + x^6/2 - log(1 + 3x^2), from k(x) = x + x^3.
inline Potential double_well_potential() {
    auto d = [](double x) {
        const double x2 = x * x;
        return x + 4.0 * x * x2 + 3.0 * x * x2 * x2 - 6.0 * x / (1.0 + 3.0 * x2);
    };
    return {"double_well", MeasureBase::lebesgue,
            [](double x) {
                const double x2 = x * x;
                return 0.5 * x2 + x2 * x2 + 0.5 * x2 * x2 * x2 - std::log1p(3.0 * x2);
            },
            d, d, false};
}

/// U(x) = -log sum_i w_i exp(-kappa_i x^2 / 2), subject to sum w_i / sqrt(kappa_i) = 1.
inline Potential log_mixture_potential(std::vector<MixtureAtom> atoms, std::string label = "log_mixture") {
    detail::check_mixture(atoms);
    // Factor out the slowest-decaying component to avoid underflow.
    double kmin = atoms.front().kappa;
    for (const auto& at : atoms) kmin = std::min(kmin, at.kappa);
    auto value = [atoms, kmin](double x) {
        const double x2 = x * x;
        double s = 0.0;
        for (const auto& at : atoms) s += at.weight * std::exp(-0.5 * (at.kappa - kmin) * x2);
        return 0.5 * kmin * x2 - std::log(s);
    };
    auto d = [atoms, kmin](double x) {
        const double x2 = x * x;
        double num = 0.0, den = 0.0;
        for (const auto& at : atoms) {
            const double e = at.weight * std::exp(-0.5 * (at.kappa - kmin) * x2);
            num += at.kappa * e;
            den += e;
        }
        return x * num / den;
    };
    return {std::move(label), MeasureBase::lebesgue, value, d, d, false};
}

/// Built-in catalogue: zero, linear(c), quadratic(c), abs(c), double_well,
/// log_mixture(p, q, a, b).
inline Potential builtin_potential(const std::string& name, const ParamMap& params = {}) {
    using detail::param;
    if (name == "zero") return zero_potential();
    if (name == "linear") return linear_potential(param(params, "c", 1.0));
    if (name == "quadratic") return quadratic_potential(param(params, "c", 1.0));
    if (name == "abs") return abs_potential(param(params, "c", 1.0));
    if (name == "double_well") return double_well_potential();
    if (name == "log_mixture") {
        const double p = param(params, "p"), q = param(params, "q"), a = param(params, "a"), b = param(params, "b");
        if (!(a < b)) throw std::invalid_argument("log_mixture requires a < b");
        return log_mixture_potential({{p, a}, {q, b}});
    }
    throw std::invalid_argument("unknown potential family '" + name + "'");
}

/// Derivative monotonicity on a grid: both one-sided derivatives nondecreasing
/// and V'_- <= V'_+ pointwise (to `slack`).
inline bool derivatives_monotone_on(const Potential& pot, std::span<const double> grid, double slack = 1e-12) {
    double prev_right = -std::numeric_limits<double>::infinity();
    for (double x : grid) {
        const double l = pot.left_derivative(x), r = pot.right_derivative(x);
        if (!(std::isfinite(l) && std::isfinite(r))) return false;
        if (r - l < -slack * (1.0 + std::abs(l))) return false;
        if (l - prev_right < -slack * (1.0 + std::abs(l))) return false;
        prev_right = r;
    }
    return true;
}

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
    return g;
}

/// Identity map k(x) = x (alpha = beta = 1).
inline SlopeMap identity_slope_map() {
    return {"k_identity", [](double x) { return x; }, [](double) { return 1.0; }, [](double) { return 0.0; }, 1.0,
            1.0, std::nullopt};
}

/// k(x) = c x; U(x) = c^2 x^2 / 2 - log c, i.e. mu = N(0, 1/c^2).
inline SlopeMap scaled_slope_map(double c) {
    detail::require_positive(c, "slope map scale");
    return {"k_scaled(" + detail::fmt_param(c) + ")", [c](double x) { return c * x; }, [c](double) { return c; },
            [](double) { return 0.0; }, c * c, c * c, std::nullopt};
}

/// k(x) = x + c x^3, c >= 0; c = 1 is the double-well example.
inline SlopeMap cubic_slope_map(double c = 1.0) {
    if (!(c >= 0.0)) throw std::invalid_argument("cubic slope map needs c >= 0");
    return {c == 1.0 ? "double_well" : "k_cubic(" + detail::fmt_param(c) + ")",
            [c](double x) { return x + c * x * x * x; }, [c](double x) { return 1.0 + 3.0 * c * x * x; },
            [c](double x) { return 6.0 * c * x; }, 1.0, std::nullopt, std::nullopt};
}

/// k(x) = Phi^{-1}(sum_i w_i/sqrt(kappa_i) Phi(sqrt(kappa_i) x)); accepts any
/// number of atoms so general mixing measures can be discretised.
inline SlopeMap mixture_slope_map(std::vector<MixtureAtom> atoms, std::string label = "log_mixture") {
    detail::check_mixture(atoms);
    // Everything in logs: the mixed CDF and density underflow long before the
    // transport window edge for steep components.
    // log sum_i exp(term(atom_i)) without temporaries
    auto logsumexp = [atoms](auto term) {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& at : atoms) m = std::max(m, term(at));
        if (!std::isfinite(m)) return m;
        double s = 0.0;
        for (const auto& at : atoms) s += std::exp(term(at) - m);
        return m + std::log(s);
    };
    // log of the mixed CDF on the lower half (x <= 0)
    auto log_lower_mix = [logsumexp](double x) {
        return logsumexp([x](const MixtureAtom& at) {
            return std::log(at.weight / std::sqrt(at.kappa)) + std_normal_log_cdf(std::sqrt(at.kappa) * x);
        });
    };
    // log sum_i w_i kappa_i^e phi(sqrt(kappa_i) x)
    auto log_mix_density = [logsumexp](double x, double e) {
        return logsumexp([x, e](const MixtureAtom& at) {
            return std::log(at.weight) + e * std::log(at.kappa) + std_normal_log_pdf(std::sqrt(at.kappa) * x);
        });
    };
    auto k = [log_lower_mix](double x) {
        if (x == 0.0) return 0.0;
        const double v = std_normal_quantile_from_log(std::min(log_lower_mix(-std::abs(x)), -std::numbers::ln2));
        return x < 0.0 ? v : -v;
    };
    auto k_prime = [k, log_mix_density](double x) {
        return std::exp(log_mix_density(x, 0.0) - std_normal_log_pdf(k(x)));
    };
    auto k_second = [k, log_mix_density](double x) {
        const double kx = k(x), lp = std_normal_log_pdf(kx);
        const double kp = std::exp(log_mix_density(x, 0.0) - lp);
        return -x * std::exp(log_mix_density(x, 1.0) - lp) + kx * kp * kp;
    };
    // k' >= weight of the flattest component; k' <= sqrt of the steepest kappa.
    const auto flattest = std::min_element(atoms.begin(), atoms.end(),
                                           [](const auto& l, const auto& r) { return l.kappa < r.kappa; });
    const auto steepest = std::max_element(atoms.begin(), atoms.end(),
                                           [](const auto& l, const auto& r) { return l.kappa < r.kappa; });
    SlopeMap out{std::move(label), k, k_prime, k_second, flattest->weight * flattest->weight, steepest->kappa,
                 std::nullopt};
    return out;
}

/// Two-atom log-mixture (p, q, a, b) with 0 < a < b and p/sqrt(a) + q/sqrt(b) = 1.
/// Declares alpha = p^2, beta = b and the improved exponent a.
inline SlopeMap log_mixture_slope_map(double p, double q, double a, double b) {
    detail::require_positive(a, "a");
    detail::require_positive(b, "b");
    if (!(a < b)) throw std::invalid_argument("log_mixture requires a < b");
    auto k = mixture_slope_map({{p, a}, {q, b}});
    k.alpha = p * p;
    k.beta = b;
    k.improved_alpha = a;
    return k;
}

/// U(x) = k(x)^2 / 2 - log k'(x), relative to Lebesgue measure (Z' = sqrt(2 pi)).
/// Convexity is not assumed: the flag is set from a derivative-monotonicity
/// grid test.
inline Potential potential_from_slope_map(const SlopeMap& k, double grid_half_width = 8.0,
                                          std::size_t grid_points = 3201) {
    const auto grid = uniform_grid(-grid_half_width, grid_half_width, grid_points);
    for (double x : grid)
        if (!(k.k_prime(x) > 0.0)) throw slope_bound_violation("slope map has k' <= 0 at x = " + std::to_string(x));
    auto kk = k.k, kp = k.k_prime, ks = k.k_second;
    auto d = [kk, kp, ks](double x) {
        const double p = kp(x);
        return kk(x) * p - ks(x) / p;
    };
    Potential pot{k.label, MeasureBase::lebesgue,
                  [kk, kp](double x) {
                      const double v = kk(x);
                      return 0.5 * v * v - std::log(kp(x));
                  },
                  d, d, false};
    pot.convex = derivatives_monotone_on(pot, grid);
    return pot;
}

struct SlopeBoundReport {
    double min_k_prime = 0.0;
    double argmin = 0.0;
    double max_k_prime = 0.0;
    double argmax = 0.0;
    /// Grid points where k' undercuts sqrt(alpha) or exceeds sqrt(beta) by more than 1e-10.
    std::vector<double> violations;
    bool pass() const { return violations.empty(); }
};

inline SlopeBoundReport check_slope_bounds(const SlopeMap& k, std::span<const double> grid) {
    if (grid.empty()) throw std::invalid_argument("check_slope_bounds: empty grid");
    SlopeBoundReport rep;
    rep.min_k_prime = std::numeric_limits<double>::infinity();
    rep.max_k_prime = -std::numeric_limits<double>::infinity();
    const double lower = std::sqrt(k.alpha);
    const double upper = k.beta ? std::sqrt(*k.beta) : std::numeric_limits<double>::infinity();
    for (double x : grid) {
        const double kp = k.k_prime(x);
        if (kp < rep.min_k_prime) rep.min_k_prime = kp, rep.argmin = x;
        if (kp > rep.max_k_prime) rep.max_k_prime = kp, rep.argmax = x;
        if (kp < lower - 1e-10 || kp > upper + 1e-10 || !std::isfinite(kp)) rep.violations.push_back(x);
    }
    return rep;
}

} // namespace blembed
