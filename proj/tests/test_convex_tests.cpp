#include <blembed/convex_tests.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace blembed;
using boost::math::quadrature::gauss_kronrod;

TEST(EvalPsi, Examples) {
    EXPECT_NEAR(eval_psi(psi_abs(), 3.0), 3.0, 1e-15);
    EXPECT_NEAR(eval_psi(psi_square(), -1.5), 2.25, 1e-12);
    EXPECT_EQ(eval_psi(psi_call(1.0), 0.5), 0.0);
}

TEST(EvalPsi, ReconstructionMatchesClosedForms) {
    for (const auto& psi : {psi_abs(), psi_square(), psi_power(3.0), psi_power(2.5), psi_call(1.0), psi_call(-0.5),
                            psi_call(0.0), psi_corridor(1.0), psi_corridor(0.0), psi_affine(1.0, -2.0)}) {
        for (double x = -10.0; x <= 10.0; x += 0.125)
            EXPECT_NEAR(eval_psi(psi, x), psi.closed_form(x), 1e-9 * std::max(1.0, std::abs(psi.closed_form(x))))
                << psi.label << " at " << x;
        EXPECT_TRUE(psi_convex_on_grid(psi, uniform_grid(-10.0, 10.0, 161))) << psi.label;
    }
}

TEST(EvalPsi, UserMeasure) {
    // psi'' = atom at 1 + (1 + x^2): psi = (x-1)^+ + x^2/2 + x^4/12
    const auto psi = psi_from_measure({{1.0, 1.0}}, {1.0, 0.0, 1.0}, 0.0, 0.0, "mixed");
    for (double x : {-3.0, 0.0, 0.5, 2.0})
        EXPECT_NEAR(eval_psi(psi, x), std::max(x - 1.0, 0.0) + x * x / 2 + std::pow(x, 4) / 12, 1e-12);
    EXPECT_EQ(psi.growth_degree, 2.0);
    EXPECT_THROW(psi_from_measure({{0.0, -1.0}}, {}), std::invalid_argument);
    EXPECT_THROW(psi_from_measure({}, {0.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(psi_from_measure({}, {-1.0, 0.0, 0.5}), std::invalid_argument);
    EXPECT_THROW(psi_power(1.5), std::invalid_argument);
    EXPECT_THROW(psi_corridor(-1.0), std::invalid_argument);
}

TEST(IntegrateAgainstSecondDerivative, Examples) {
    EXPECT_NEAR(integrate_against_second_derivative(psi_abs(), [](double x) { return heat_kernel(1.0, x); }),
                2.0 / std::sqrt(2.0 * M_PI), 1e-15);
    EXPECT_EQ(integrate_against_second_derivative(psi_square(), [](double) { return 1.0; }), infinite_marker);
    EXPECT_EQ(integrate_against_second_derivative(psi_call(1.0), [](double x) { return x * x; }), 1.0);
    EXPECT_EQ(integrate_against_second_derivative(psi_affine(0.0, 1.0), [](double) { return 1.0; }), 0.0);
    // density part: int 6|x| p(1; x) dx = 12 / sqrt(2 pi)
    EXPECT_NEAR(integrate_against_second_derivative(psi_power(3.0), [](double x) { return heat_kernel(1.0, x); }),
                12.0 / std::sqrt(2.0 * M_PI), 1e-12);
    EXPECT_EQ(psi_total_mass(psi_corridor(2.0)), 2.0);
    EXPECT_EQ(psi_total_mass(psi_power(4.0)), infinite_marker);
}

TEST(Bl2Correction, Examples) {
    EXPECT_EQ(bl2_correction(psi_abs(), 1.0, 1.0), 0.0);
    auto p1 = [](double s) { return s > 0 ? std::exp(-1.0 / (2.0 * s)) / std::sqrt(2.0 * M_PI * s) : 0.0; };
    EXPECT_NEAR(bl2_correction(psi_abs(), 1.0, 0.5), (gauss_kronrod<double, 61>::integrate(p1, 0.0, 0.25, 15, 1e-15)),
                1e-14);

    // psi = x^2: int 2 dx p(s; sqrt(x^2 + 1)) = 2 e^{-1/(2s)}, so the correction is int_0^{1/4} e^{-1/(2s)} ds
    auto e1 = [](double s) { return s > 0 ? std::exp(-1.0 / (2.0 * s)) : 0.0; };
    const double oracle = gauss_kronrod<double, 61>::integrate(e1, 0.0, 0.25, 15, 1e-15);
    const double got = bl2_correction(psi_square(), 1.0, 0.5);
    EXPECT_NEAR(got, oracle, 1e-10);
    // Monte Carlo over the heat kernel: drawing x ~ N(0, s) turns p(s; sqrt(x^2+1)) dx
    // into the weight e^{-1/(2s)}; s ~ U(0, 1/4)
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> us(0.0, 0.25);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = 0.25 * std::exp(-1.0 / (2.0 * us(rng)));
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
    EXPECT_LE(std::abs(got - mean), 3.0 * se + 1e-12);
}

TEST(Bl2Correction, MonotoneInVariance) {
    for (const auto& psi : {psi_abs(), psi_square(), psi_call(1.0), psi_power(3.0)}) {
        double prev = 0.0;
        for (double v = 2.0; v >= 0.0; v -= 0.125) {
            const double c = bl2_correction(psi, 2.0, v);
            EXPECT_GE(c, prev - 1e-15) << psi.label << " " << v;
            prev = c;
        }
    }
    EXPECT_THROW(bl2_correction(psi_abs(), 1.0, 1.5), std::invalid_argument);
}

TEST(Bl3Constant, Examples) {
    EXPECT_NEAR(bl3_constant(psi_abs(), 1.0, 2.0), std::pow(3.0, 0.25) * 2.0 / std::sqrt(2.0 * M_PI), 1e-15);
    EXPECT_NEAR(bl3_constant(psi_square(), 1.0, 2.0), std::pow(3.0, 0.25) * 2.0 * std::sqrt(3.0), 1e-11);
    EXPECT_EQ(bl3_constant(psi_affine(1.0, 1.0), 1.0, 2.0), 0.0);
    EXPECT_THROW(bl3_constant(psi_abs(), 1.0, 1.0), std::invalid_argument);
}

TEST(Bl3Constant, LargeQApproachesRemarkCoefficient) {
    for (const auto& psi : {psi_abs(), psi_call(1.0), psi_corridor(1.0)}) {
        const double coeff = psi_total_mass(psi) / std::sqrt(2.0 * M_PI);
        EXPECT_NEAR(bl3_constant(psi, 1.0, 1e4) / coeff, 1.0, 0.01) << psi.label;
    }
}

TEST(RemarkBounds, Examples) {
    const auto r = remark_bounds(psi_abs(), 1.0, 0.75);
    ASSERT_TRUE(r.finite_mass_bound);
    EXPECT_NEAR(*r.finite_mass_bound, 2.0 * 0.5 / std::sqrt(2.0 * M_PI), 1e-15);
    EXPECT_NEAR(r.mad_lower, 0.3989422804014327, 1e-16);
    EXPECT_FALSE(remark_bounds(psi_square(), 1.0, 0.5).finite_mass_bound);
    EXPECT_NEAR(remark_bounds(psi_abs(), 4.0, 1.0).mad_lower, 0.5 / std::sqrt(2.0 * M_PI), 1e-16);
}
