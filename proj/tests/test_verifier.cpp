#include <blembed/verifier.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace blembed;
using boost::math::quadrature::gauss_kronrod;

namespace {

std::shared_ptr<const TransportMap> make_map(Potential p, double A) {
    return std::make_shared<const TransportMap>(build_transport(std::move(p), A));
}

// mu for V(x) = |x|, A = 1 has density e^{-|x| - x^2/2} / (2 I) with
// I = int_0^inf e^{-x - x^2/2} dx = e^{1/2} sqrt(2 pi) Phi(-1).
double abs_I() { return std::exp(0.5) * std::sqrt(2.0 * M_PI) * 0.5 * std::erfc(1.0 / std::sqrt(2.0)); }

// The log-mixture law is the Gaussian scale mixture sum_i (w_i / sqrt(kappa_i)) N(0, 1 / kappa_i).
constexpr double mix_p = 0.5, mix_a = 1.0, mix_b = 2.0;
const double mix_q = 0.5 * std::sqrt(2.0);

double mixture_moment(double (*gauss_moment)(double var)) {
    return mix_p / std::sqrt(mix_a) * gauss_moment(1.0 / mix_a) + mix_q / std::sqrt(mix_b) * gauss_moment(1.0 / mix_b);
}

} // namespace

TEST(MomentLhs, ClosedForms) {
    EXPECT_NEAR(moment_lhs(psi_square(), 1.0), 1.0, 1e-12);
    EXPECT_NEAR(moment_lhs(psi_abs(), 1.0), std::sqrt(2.0 / M_PI), 1e-12);
    EXPECT_NEAR(moment_lhs(psi_call(0.0), 4.0), std::sqrt(4.0 / (2.0 * M_PI)), 1e-12);
    // E|Y|^3 = 2 sqrt(2/pi) sigma^3
    EXPECT_NEAR(moment_lhs(psi_power(3.0), 2.0), 2.0 * std::sqrt(2.0 / M_PI) * std::pow(2.0, 1.5), 1e-11);
    EXPECT_NEAR(moment_lhs(psi_affine(-1.0, 3.0), 2.0), -1.0, 1e-12);
}

TEST(MomentLhs, CorridorAgainstQuadratureOracle) {
    const auto psi = psi_corridor(1.0);
    auto f = [&](double x) { return psi.closed_form(x) * heat_kernel(1.5, x); };
    const double oracle = gauss_kronrod<double, 61>::integrate(f, -1.0, 1.0, 15, 1e-14) +
                          gauss_kronrod<double, 61>::integrate(f, 1.0, 40.0, 15, 1e-14) +
                          gauss_kronrod<double, 61>::integrate(f, -40.0, -1.0, 15, 1e-14);
    EXPECT_NEAR(moment_lhs(psi, 1.5), oracle, 1e-11);
}

TEST(MomentLhs, UserMeasureUsesReconstruction) {
    // psi'' = 2 dx: psi = x^2 without a closed form attached
    const auto psi = psi_from_measure({}, {2.0}, 0.0, 0.0, "x^2 via measure");
    EXPECT_FALSE(psi.closed_form);
    EXPECT_NEAR(moment_lhs(psi, 3.0), 3.0, 1e-10);
}

TEST(MomentRhs, ExactTransportCases) {
    EXPECT_NEAR(moment_rhs(psi_square(), build_transport(zero_potential(), 2.0)), 2.0, 1e-9);
    EXPECT_NEAR(moment_rhs(psi_square(), build_transport(quadratic_potential(1.0), 1.0)), 0.5, 1e-9);
    EXPECT_NEAR(moment_rhs(psi_square(), build_transport(linear_potential(1.0), 1.0)), 1.0, 1e-9);
}

TEST(MomentRhs, AbsPotentialClosedForms) {
    const auto T = build_transport(abs_potential(1.0), 1.0);
    const double I = abs_I();
    EXPECT_NEAR(moment_rhs(psi_abs(), T), (1.0 - I) / I, 1e-9);
    EXPECT_NEAR(moment_rhs(psi_square(), T), (2.0 * I - 1.0) / I, 1e-9);
}

TEST(MomentRhs, LogMixtureClosedForms) {
    const auto k = log_mixture_slope_map(mix_p, mix_q, mix_a, mix_b);
    const auto T = appendix_transport(k, k.alpha);
    EXPECT_NEAR(moment_rhs(psi_square(), T), mixture_moment([](double v) { return v; }), 1e-8);
    EXPECT_NEAR(moment_rhs(psi_square(), T), 0.75, 1e-8);
    EXPECT_NEAR(moment_rhs(psi_abs(), T), mixture_moment([](double v) { return std::sqrt(2.0 * v / M_PI); }), 1e-8);
}

TEST(VerifyTheorem, ZeroPotentialIsEquality) {
    const auto T = build_transport(zero_potential(), 1.0);
    for (const auto& psi : {psi_abs(), psi_square(), psi_power(3.0), psi_call(1.0), psi_corridor(1.0)}) {
        const auto r = verify_theorem(psi, T, {1.5, 2.0, 4.0});
        EXPECT_TRUE(r.pass()) << psi.label;
        EXPECT_NEAR(r.find("BL1")->margin, 0.0, 1e-9) << psi.label;
        EXPECT_NEAR(r.find("BL2")->margin, 0.0, 1e-9) << psi.label;
        EXPECT_NEAR(r.bl2_correction, 0.0, 1e-12);
        EXPECT_EQ(r.bl3.size(), 3u);
    }
}

TEST(VerifyTheorem, QuadraticPotentialSquare) {
    const auto T = build_transport(quadratic_potential(1.0), 1.0);
    const auto r = verify_theorem(psi_square(), T, {1.5, 2.0, 4.0});
    EXPECT_NEAR(r.lhs, 1.0, 1e-10);
    EXPECT_NEAR(r.rhs, 0.5, 1e-9);
    auto e1 = [](double s) { return s > 0 ? std::exp(-1.0 / (2.0 * s)) : 0.0; };
    EXPECT_NEAR(r.bl2_correction, (gauss_kronrod<double, 61>::integrate(e1, 0.0, 0.25, 15, 1e-15)), 1e-9);
    EXPECT_LE(r.bl2_correction, 0.5);
    EXPECT_TRUE(r.pass());
    for (const auto& b : r.bl3) {
        EXPECT_TRUE(std::isfinite(b.C));
        EXPECT_NEAR(b.q, b.p / (b.p - 1.0), 1e-15);
    }
    // psi = x^2 has infinite psi''(R): no finite-mass check
    EXPECT_EQ(r.find("remark_mass"), nullptr);
}

TEST(VerifyTheorem, AbsPotentialAbsPsi) {
    const auto T = build_transport(abs_potential(1.0), 1.0);
    const auto r = verify_theorem(psi_abs(), T, {1.5, 2.0, 4.0});
    const double I = abs_I();
    EXPECT_NEAR(r.rhs, (1.0 - I) / I, 1e-9);
    EXPECT_GE(r.find("BL1")->margin, 0.0);
    ASSERT_TRUE(r.mad_ratio);
    EXPECT_NEAR(*r.mad_ratio, (1.0 - I) / (2.0 * I - 1.0), 1e-8);
    EXPECT_GE(*r.mad_ratio, 1.0 / std::sqrt(2.0 * M_PI));
    ASSERT_NE(r.find("remark_mass"), nullptr);
    EXPECT_TRUE(r.find("remark_mass")->pass);
    EXPECT_TRUE(r.pass());
}

TEST(VerifyTheorem, PassFlagsRecomputableFromMargins) {
    const auto T = build_transport(abs_potential(2.0), 2.0);
    const auto r = verify_theorem(psi_power(3.0), T, {1.5, 4.0});
    for (const auto& c : r.checks) EXPECT_EQ(c.pass, c.skipped || c.margin >= -c.tolerance) << c.name;
    EXPECT_DOUBLE_EQ(r.find("BL1")->margin, r.lhs - r.rhs);
    EXPECT_DOUBLE_EQ(r.find("BL2")->margin, r.lhs - r.rhs - r.bl2_correction);
}

TEST(VerifyTheorem, Errors) {
    const auto dw = appendix_transport(cubic_slope_map(), 1.0);
    EXPECT_THROW(verify_theorem(psi_abs(), dw, {2.0}), nonconvex_potential);
    Potential bump{"bump", MeasureBase::gaussian, [](double x) { return -0.25 * x * x; },
                   [](double x) { return -0.5 * x; }, [](double x) { return -0.5 * x; }, false};
    EXPECT_THROW(verify_theorem(psi_abs(), build_transport(bump, 1.0), {2.0}), nonconvex_potential);
    const auto T = build_transport(zero_potential(), 1.0);
    EXPECT_THROW(verify_theorem(psi_abs(), T, {1.0}), std::invalid_argument);
    EXPECT_THROW(verify_theorem(psi_abs(), T, {0.5}), std::invalid_argument);
}

TEST(InfiniteSides, Convention) {
    const double inf = infinite_marker;
    EXPECT_TRUE(detail::make_check("BL1", inf, inf, 1e-8).pass);
    EXPECT_EQ(detail::make_check("BL1", inf, inf, 1e-8).note, "both sides infinite");
    EXPECT_TRUE(detail::make_check("BL1", inf, 3.0, 1e-8).pass);
    EXPECT_FALSE(detail::make_check("BL1", 3.0, inf, 1e-8).pass);
    EXPECT_FALSE(detail::make_check("BL1", 1.0, 1.0 + 1e-7, 1e-8).pass);
    EXPECT_TRUE(detail::make_check("BL1", 1.0, 1.0 + 1e-9, 1e-8).pass);
}

TEST(McCrosscheck, Examples) {
    {
        const ClarkIntegrand c(make_map(zero_potential(), 2.0));
        const auto e = simulate_embedding(c, 20000, 16, 5);
        const auto m = mc_crosscheck(psi_square(), e, c.transport());
        EXPECT_LE(std::abs(m.estimate - 2.0), 3.0 * m.std_error);
        EXPECT_EQ(m.n, 20000u);
    }
    const ClarkIntegrand c(make_map(quadratic_potential(1.0), 1.0));
    const auto e = simulate_embedding(c, 20000, 16, 5);
    const auto m = mc_crosscheck(psi_abs(), e, c.transport());
    EXPECT_LE(std::abs(m.estimate - std::sqrt(1.0 / M_PI)), 3.0 * m.std_error);
    const auto lin = mc_crosscheck(psi_affine(0.0, 1.0), e, c.transport());
    EXPECT_LE(std::abs(lin.estimate), 3.0 * lin.std_error);
    EXPECT_TRUE(mc_check(m, moment_rhs(psi_abs(), c.transport())).pass);

    const auto other = build_transport(quadratic_potential(1.0), 2.0);
    EXPECT_THROW(mc_crosscheck(psi_abs(), e, other), provenance_mismatch);
}

TEST(VerifyTheorem, AttachesMonteCarlo) {
    const ClarkIntegrand c(make_map(abs_potential(1.0), 1.0));
    const auto e = simulate_embedding(c, 20000, 64, 11);
    const auto r = verify_theorem(psi_square(), c.transport(), {2.0}, &e);
    ASSERT_TRUE(r.mc);
    EXPECT_NE(r.find("mc_crosscheck"), nullptr);
    EXPECT_TRUE(r.pass());
    EXPECT_FALSE(verify_theorem(psi_square(), c.transport(), {2.0}).mc);
}

TEST(VerifyAppendix, IdentityMapIsEquality) {
    for (const auto& psi : {psi_abs(), psi_square(), psi_call(1.0)}) {
        const auto r = verify_appendix(psi, identity_slope_map(), 1.0, 1.0);
        EXPECT_TRUE(r.pass()) << psi.label;
        EXPECT_EQ(r.kind, ReportKind::appendix);
        for (const auto& c : r.checks) EXPECT_NEAR(c.margin, 0.0, 1e-9) << psi.label << " " << c.name;
    }
}

TEST(VerifyAppendix, DoubleWellVarianceBelowOne) {
    // oracle: variance of the density e^{-U}, U = (x + x^3)^2 / 2 - log(1 + 3x^2)
    auto dens = [](double x) {
        const double k = x + x * x * x;
        return (1.0 + 3.0 * x * x) * std::exp(-0.5 * k * k);
    };
    const double Z = gauss_kronrod<double, 61>::integrate(dens, -6.0, 6.0, 15, 1e-15);
    const double v = gauss_kronrod<double, 61>::integrate([&](double x) { return x * x * dens(x); }, -6.0, 6.0, 15,
                                                          1e-15) / Z;
    const auto r = verify_appendix(psi_square(), cubic_slope_map(), 1.0);
    EXPECT_NEAR(r.rhs, v, 1e-9);
    EXPECT_NEAR(r.var_x, v, 1e-9);
    EXPECT_LT(v, 1.0);
    EXPECT_TRUE(r.pass());
    EXPECT_EQ(r.checks.size(), 1u);
}

TEST(VerifyAppendix, LogMixtureBounds) {
    const auto k = log_mixture_slope_map(mix_p, mix_q, mix_a, mix_b);
    const auto r = verify_appendix(psi_square(), k, k.alpha, k.beta);
    ASSERT_EQ(r.checks.size(), 3u);
    EXPECT_NEAR(r.checks[0].margin, 4.0 - 0.75, 1e-8);
    EXPECT_NEAR(r.checks[1].margin, 0.75 - 0.5, 1e-8);
    EXPECT_NEAR(r.checks[2].margin, 1.0 - 0.75, 1e-8);
    EXPECT_EQ(r.checks[2].name, "improved(alpha=1)");
    EXPECT_TRUE(r.pass());
}

TEST(VerifyAppendix, SlopeBoundViolations) {
    // k' = 1 + 3x^2 is not >= 2 near 0
    EXPECT_THROW(verify_appendix(psi_square(), cubic_slope_map(), 4.0), slope_bound_violation);
    const auto k = log_mixture_slope_map(mix_p, mix_q, mix_a, mix_b);
    EXPECT_THROW(verify_appendix(psi_square(), k, k.alpha, 1.0), slope_bound_violation);
    const auto T = appendix_transport(k, k.alpha);
    EXPECT_THROW(verify_appendix(psi_square(), cubic_slope_map(), T, 1.0), provenance_mismatch);
}
