#pragma once

#include "bass_embedding.hpp"
#include "convex_tests.hpp"
#include "errors.hpp"
#include "local_time.hpp"
#include "potentials.hpp"
#include "quadrature.hpp"
#include "transport.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace blembed {

/// Margins below -tolerance fail.
struct Tolerances {
    double bl1 = 1e-8;
    double bl2 = 1e-8 + 1e-6;
    double bl3 = 1e-8;
    double mad = 1e-9;
    double remark_mass = 1e-8;
    double appendix = 1e-7;
};

/// One inequality, stated as margin >= -tolerance.
struct InequalityCheck {
    std::string name;
    double margin = 0.0;
    double tolerance = 0.0;
    bool skipped = false;
    /// Free text for skipped checks and infinite sides.
    std::string note;
    bool pass = false;
};

struct Bl3Entry {
    double p = 0.0;
    double q = 0.0;
    /// C(A, psi, q), possibly +inf (entry skipped).
    double C = 0.0;
    /// C (A - var_x)^{1/(2p)}
    double upper_correction = 0.0;
};

struct McCrosscheck {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

enum class ReportKind { theorem, appendix };

/// Verdicts for one (potential, psi). For theorem reports lhs = E psi(Y - EY)
/// with Y ~ N(0, A); for appendix reports lhs is the Gaussian side of the
/// upper bound (variance 1/alpha). rhs = E psi(X - EX) in both.
struct VerificationReport {
    ReportKind kind = ReportKind::theorem;
    std::string potential;
    std::string psi;
    double A = 0.0;
    double var_x = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool lhs_infinite = false;
    bool rhs_infinite = false;
    double bl2_correction = 0.0;
    std::vector<Bl3Entry> bl3;
    std::optional<double> mad_ratio;
    std::optional<McCrosscheck> mc;
    std::vector<InequalityCheck> checks;

    bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const InequalityCheck& c) { return c.pass; });
    }
    const InequalityCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

namespace detail {

/// psi(x) through the closed form when one is attached, else the measure.
inline double psi_value(const ConvexTest& psi, double x) {
    return psi.closed_form ? psi.closed_form(x) : eval_psi(psi, x);
}

/// E[psi(X - shift)] for X with Lebesgue density `dens`, concentrated around
/// `center` on scale `scale`. The window grows from 12 scale + 10 by doubling
/// until the added shell is negligible; otherwise +inf.
template <class Density>
double expect_psi(const ConvexTest& psi, Density&& dens, double center, double scale, double shift) {
    const quad::Options opt{1e-300, 1e-13, 40, 8000};
    auto f = [&](double x) {
        const double d = dens(x);
        return d > 0.0 ? psi_value(psi, x - shift) * d : 0.0;
    };
    double R = 12.0 * scale + 10.0;
    std::vector<double> breaks;
    for (int k = -8; k <= 8; ++k) breaks.push_back(center + k * scale);
    for (const auto& a : psi.atoms) breaks.push_back(a.location + shift);
    for (double b : psi.density_breaks) breaks.push_back(b + shift);
    std::erase_if(breaks, [&](double b) { return !(b > center - R && b < center + R); });
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    double total = quad::integrate_piecewise(f, center - R, center + R, breaks, opt).value;
    constexpr int max_doublings = 20;
    for (int i = 0; i < max_doublings; ++i) {
        const double shell = quad::integrate(f, center - 2.0 * R, center - R, opt).value +
                             quad::integrate(f, center + R, center + 2.0 * R, opt).value;
        total += shell;
        R *= 2.0;
        if (!std::isfinite(total)) return infinite_marker;
        if (shell == 0.0 || std::abs(shell) <= 1e-15 * std::abs(total)) return total;
    }
    return infinite_marker;
}

/// margin >= -tol, with both sides infinite counting as equality.
inline InequalityCheck make_check(std::string name, double bigger, double smaller, double tol) {
    InequalityCheck c{std::move(name), 0.0, tol, false, "", false};
    if (std::isinf(bigger) && std::isinf(smaller) && bigger > 0.0 && smaller > 0.0) {
        c.note = "both sides infinite";
        c.pass = true;
        return c;
    }
    c.margin = bigger - smaller;
    c.pass = c.margin >= -tol;
    if (std::isinf(bigger) || std::isinf(smaller)) c.note = "one side infinite";
    return c;
}

inline InequalityCheck skipped_check(std::string name, std::string why, double tol) {
    return {std::move(name), 0.0, tol, true, std::move(why), true};
}

} // namespace detail

/// E[psi(Y)], Y ~ N(0, A); +inf when the window diagnostics flag divergence.
inline double moment_lhs(const ConvexTest& psi, double A) {
    if (!(A > 0.0) || !std::isfinite(A)) throw std::invalid_argument("moment_lhs: A must be positive");
    return detail::expect_psi(psi, [A](double x) { return heat_kernel(A, x); }, 0.0, std::sqrt(A), 0.0);
}

/// E[psi(X - EX)] for X ~ mu.
inline double moment_rhs(const ConvexTest& psi, const TransportMap& T) {
    return detail::expect_psi(psi, [&T](double x) { return T.density(x); }, T.mean_mu(), std::sqrt(T.var_mu()),
                              T.mean_mu());
}

/// Sample mean of psi(B(T)) over an ensemble drawn from T.
inline McCrosscheck mc_crosscheck(const ConvexTest& psi, const EmbeddingEnsemble& e, const TransportMap& T) {
    detail::require_same_source(e, T, "mc_crosscheck");
    const auto r = detail::sample_mean(e, [&psi](const EmbeddingSample& s, McEstimate&) {
        return detail::psi_value(psi, s.bt);
    });
    return {r.estimate, r.std_error, r.n};
}

/// The Monte Carlo estimate straddles the quadrature value within 3 SE.
inline InequalityCheck mc_check(const McCrosscheck& mc, double rhs) {
    InequalityCheck c{"mc_crosscheck", 0.0, 0.0, false, "", false};
    if (std::isinf(rhs)) return detail::skipped_check("mc_crosscheck", "quadrature side infinite", 0.0);
    c.tolerance = 3.0 * mc.std_error + 1e-9 * (1.0 + std::abs(rhs));
    c.margin = -std::abs(mc.estimate - rhs);
    c.pass = c.margin >= -c.tolerance;
    return c;
}

/// BL1, BL2, BL3 for every p, the MAD ratio bound and, for psi''(R) finite,
/// the finite-mass bound. Requires a convex potential relative to N(0, A).
inline VerificationReport verify_theorem(const ConvexTest& psi, const TransportMap& T, const std::vector<double>& p_list,
                                         const EmbeddingEnsemble* ensemble = nullptr, const Tolerances& tol = {}) {
    detail::require_convex_gaussian(T, "verify_theorem");
    for (double p : p_list)
        if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("verify_theorem: every p must lie in (1, inf)");

    VerificationReport r;
    r.kind = ReportKind::theorem;
    r.potential = T.label();
    r.psi = psi.label;
    r.A = T.A();
    r.var_x = T.var_mu();
    r.lhs = moment_lhs(psi, r.A);
    r.rhs = moment_rhs(psi, T);
    r.lhs_infinite = std::isinf(r.lhs);
    r.rhs_infinite = std::isinf(r.rhs);
    const double A = r.A, v = detail::clamp_variance(A, r.var_x, "verify_theorem");

    r.checks.push_back(detail::make_check("BL1", r.lhs, r.rhs, tol.bl1));
    r.bl2_correction = bl2_correction(psi, A, v);
    r.checks.push_back(detail::make_check("BL2", r.lhs, r.rhs + r.bl2_correction, tol.bl2));
    for (double p : p_list) {
        const double q = p / (p - 1.0);
        Bl3Entry b{p, q, bl3_constant(psi, A, q), 0.0};
        const std::string name = "BL3(p=" + format_g17(p) + ")";
        if (std::isinf(b.C)) {
            b.upper_correction = infinite_marker;
            r.checks.push_back(detail::skipped_check(name, "C(A, psi, q) is infinite", tol.bl3));
        } else {
            b.upper_correction = b.C * std::pow(A - v, 1.0 / (2.0 * p));
            r.checks.push_back(detail::make_check(name, r.rhs + b.upper_correction, r.lhs, tol.bl3));
        }
        r.bl3.push_back(b);
    }

    const auto bounds = remark_bounds(psi, A, v);
    const double mad = moment_rhs(psi_abs(), T);
    r.mad_ratio = mad / r.var_x;
    r.checks.push_back(detail::make_check("MAD", *r.mad_ratio, bounds.mad_lower, tol.mad));
    if (bounds.finite_mass_bound)
        r.checks.push_back(detail::make_check("remark_mass", r.rhs + *bounds.finite_mass_bound, r.lhs, tol.remark_mass));

    if (ensemble) {
        r.mc = mc_crosscheck(psi, *ensemble, T);
        r.checks.push_back(mc_check(*r.mc, r.rhs));
    }
    return r;
}

/// Builds mu from the slope map, with comparison variance A = 1/alpha.
inline TransportMap appendix_transport(const SlopeMap& k, double alpha) {
    detail::require_positive(alpha, "alpha");
    return build_transport(potential_from_slope_map(k), 1.0 / alpha);
}

/// Upper bound E psi(X - EX) <= E psi(N(0, 1/alpha)), lower bound
/// E psi(N(0, 1/beta)) <= E psi(X - EX) when beta is given, both gated on the
/// declared slope bounds over |x| <= 8; and, ungated, the upper bound with
/// `improved_alpha`. `T` must come from appendix_transport(k, alpha).
inline VerificationReport verify_appendix(const ConvexTest& psi, const SlopeMap& k, const TransportMap& T, double alpha,
                                          std::optional<double> beta = std::nullopt,
                                          std::optional<double> improved_alpha = std::nullopt,
                                          const EmbeddingEnsemble* ensemble = nullptr, const Tolerances& tol = {}) {
    detail::require_positive(alpha, "alpha");
    if (beta) detail::require_positive(*beta, "beta");
    if (improved_alpha) detail::require_positive(*improved_alpha, "improved alpha");
    SlopeMap declared = k;
    declared.alpha = alpha;
    declared.beta = beta;
    const auto slopes = check_slope_bounds(declared, uniform_grid(-8.0, 8.0, 3201));
    if (!slopes.pass())
        throw slope_bound_violation("slope map '" + k.label + "' violates its declared bounds at x = " +
                                    format_g17(slopes.violations.front()) + " (k' in [" +
                                    format_g17(slopes.min_k_prime) + ", " + format_g17(slopes.max_k_prime) + "])");
    if (T.potential().base != MeasureBase::lebesgue || T.label() != k.label ||
        std::abs(T.A() * alpha - 1.0) > 1e-12)
        throw provenance_mismatch("verify_appendix: transport '" + provenance(T) + "' was not built from '" + k.label +
                                  "' with alpha = " + format_g17(alpha));

    VerificationReport r;
    r.kind = ReportKind::appendix;
    r.potential = k.label;
    r.psi = psi.label;
    r.A = 1.0 / alpha;
    r.var_x = T.var_mu();
    r.lhs = moment_lhs(psi, r.A);
    r.rhs = moment_rhs(psi, T);
    r.lhs_infinite = std::isinf(r.lhs);
    r.rhs_infinite = std::isinf(r.rhs);
    r.checks.push_back(detail::make_check("upper(alpha=" + format_g17(alpha) + ")", r.lhs, r.rhs, tol.appendix));
    if (beta)
        r.checks.push_back(detail::make_check("lower(beta=" + format_g17(*beta) + ")", r.rhs,
                                              moment_lhs(psi, 1.0 / *beta), tol.appendix));
    if (improved_alpha)
        r.checks.push_back(detail::make_check("improved(alpha=" + format_g17(*improved_alpha) + ")",
                                              moment_lhs(psi, 1.0 / *improved_alpha), r.rhs, tol.appendix));
    if (ensemble) {
        r.mc = mc_crosscheck(psi, *ensemble, T);
        r.checks.push_back(mc_check(*r.mc, r.rhs));
    }
    return r;
}

/// Builds the transport itself, with the bounds declared on `k`.
inline VerificationReport verify_appendix(const ConvexTest& psi, const SlopeMap& k, double alpha,
                                          std::optional<double> beta = std::nullopt) {
    return verify_appendix(psi, k, appendix_transport(k, alpha), alpha, beta, k.improved_alpha);
}

} // namespace blembed
