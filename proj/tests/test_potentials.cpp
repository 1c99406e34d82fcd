#include <blembed/potentials.hpp>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace blembed;

namespace {
const double p_mix = 0.5, q_mix = 0.5 * std::sqrt(2.0), a_mix = 1.0, b_mix = 2.0;

double forrem(double x) {
    return -std::log(p_mix * std::exp(-0.5 * a_mix * x * x) + q_mix * std::exp(-0.5 * b_mix * x * x));
}
} // namespace

TEST(BuiltinPotential, Zero) {
    const auto v = builtin_potential("zero");
    for (double x : {-3.0, 0.0, 2.5}) {
        EXPECT_EQ(v.value(x), 0.0);
        EXPECT_EQ(v.left_derivative(x), 0.0);
        EXPECT_EQ(v.right_derivative(x), 0.0);
    }
    EXPECT_TRUE(v.convex);
    EXPECT_EQ(v.base, MeasureBase::gaussian);
}

TEST(BuiltinPotential, DoubleWellMatchesDisplayedFormula) {
    const auto u = builtin_potential("double_well");
    for (double x = -2.0; x <= 2.0; x += 0.1) {
        const double expect = x * x / 2 + std::pow(x, 4) + std::pow(x, 6) / 2 - std::log(1 + 3 * x * x);
        EXPECT_NEAR(u.value(x), expect, 1e-13);
    }
    EXPECT_EQ(u.base, MeasureBase::lebesgue);
    EXPECT_FALSE(u.convex);
    // two wells: U'(0) = 0 with U decreasing just right of the origin
    EXPECT_LT(u.value(0.3), u.value(0.0));
}

TEST(BuiltinPotential, LogMixtureMatchesClosedForm) {
    const auto u = builtin_potential("log_mixture", {{"p", p_mix}, {"q", q_mix}, {"a", a_mix}, {"b", b_mix}});
    EXPECT_NEAR(p_mix / std::sqrt(a_mix) + q_mix / std::sqrt(b_mix), 1.0, 1e-15);
    for (double x = -9.0; x <= 9.0; x += 0.25) EXPECT_NEAR(u.value(x), forrem(x), 1e-12);
    const double h = 1e-6;
    for (double x : {-2.0, -0.4, 0.0, 1.3}) {
        const double fd = (forrem(x + h) - forrem(x - h)) / (2 * h);
        EXPECT_NEAR(u.right_derivative(x), fd, 1e-8);
    }
}

TEST(BuiltinPotential, Errors) {
    EXPECT_THROW(builtin_potential("cosine"), std::invalid_argument);
    EXPECT_THROW(builtin_potential("quadratic", {{"c", 0.0}}), std::invalid_argument);
    EXPECT_THROW(builtin_potential("abs", {{"c", -1.0}}), std::invalid_argument);
    EXPECT_THROW(builtin_potential("log_mixture", {{"p", 0.5}, {"q", 0.5}, {"a", 1.0}, {"b", 2.0}}),
                 std::invalid_argument);
    EXPECT_THROW(builtin_potential("log_mixture", {{"p", 0.5}, {"q", 0.5 * std::sqrt(2.0)}, {"a", 2.0}, {"b", 1.0}}),
                 std::invalid_argument);
    EXPECT_THROW(builtin_potential("log_mixture", {{"p", 0.5}}), std::invalid_argument);
}

TEST(BuiltinPotential, ConvexCatalogueDerivativesMonotone) {
    const auto grid = uniform_grid(-10.0, 10.0, 2001);
    for (const auto& v : {zero_potential(), linear_potential(-2.5), linear_potential(1.0), quadratic_potential(0.3),
                          quadratic_potential(3.0), abs_potential(1.0), abs_potential(4.0)}) {
        EXPECT_TRUE(v.convex) << v.label;
        EXPECT_TRUE(derivatives_monotone_on(v, grid)) << v.label;
        for (double x : grid) EXPECT_GE(v.right_derivative(x) - v.left_derivative(x), -1e-14) << v.label;
    }
}

TEST(BuiltinPotential, AbsKinkDerivatives) {
    const auto v = abs_potential(2.5);
    EXPECT_EQ(v.left_derivative(0.0), -2.5);
    EXPECT_EQ(v.right_derivative(0.0), 2.5);
    EXPECT_EQ(v.left_derivative(1.0), 2.5);
    EXPECT_EQ(v.right_derivative(-1.0), -2.5);
}

TEST(SlopeMapPotential, IdentityGivesStandardGaussianPotential) {
    const auto u = potential_from_slope_map(identity_slope_map());
    for (double x : {-3.0, -0.5, 0.0, 2.0}) {
        EXPECT_NEAR(u.value(x), 0.5 * x * x, 1e-15);
        EXPECT_NEAR(u.right_derivative(x), x, 1e-15);
    }
    EXPECT_TRUE(u.convex);
}

TEST(SlopeMapPotential, CubicReproducesDoubleWell) {
    const auto u = potential_from_slope_map(cubic_slope_map(1.0));
    const auto dw = double_well_potential();
    for (double x = -3.0; x <= 3.0; x += 0.05) {
        EXPECT_NEAR(u.value(x), dw.value(x), 1e-10 * std::max(1.0, std::abs(dw.value(x))));
        EXPECT_NEAR(u.right_derivative(x), dw.right_derivative(x), 1e-10 * std::max(1.0, std::abs(dw.value(x))));
    }
    EXPECT_FALSE(u.convex);
}

TEST(SlopeMapPotential, ScaledMapIsGaussianWithHalfVariance) {
    const auto u = potential_from_slope_map(scaled_slope_map(std::sqrt(2.0)));
    for (double x : {-2.0, 0.0, 0.7}) EXPECT_NEAR(u.value(x), x * x - 0.5 * std::log(2.0), 1e-14);
    EXPECT_TRUE(u.convex);
}

TEST(SlopeMapPotential, RejectsNonIncreasingMap) {
    SlopeMap bad{"bad", [](double x) { return x * x * x; }, [](double x) { return 3 * x * x; },
                 [](double x) { return 6 * x; }, 1.0, std::nullopt, std::nullopt};
    EXPECT_THROW(potential_from_slope_map(bad), slope_bound_violation);
}

TEST(LogMixtureSlopeMap, ValueAtOriginAndQuadratureOracle) {
    const auto k = log_mixture_slope_map(p_mix, q_mix, a_mix, b_mix);
    EXPECT_EQ(k.k(0.0), 0.0);
    EXPECT_NEAR(k.alpha, p_mix * p_mix, 1e-15);
    ASSERT_TRUE(k.beta);
    EXPECT_NEAR(*k.beta, b_mix, 1e-15);

    // Oracle: F_mu(x) by quadrature of e^{-U}/sqrt(2 pi), then Boost's normal quantile.
    auto dens = [](double y) { return std::exp(-forrem(y)) / std::sqrt(2 * M_PI); };
    boost::math::normal_distribution<double> nd;
    for (double x : {-2.0, -0.3, 1.0, 2.5}) {
        const double F = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(dens, -60.0, x, 20, 1e-15);
        EXPECT_NEAR(k.k(x), boost::math::quantile(nd, F), 1e-11) << x;
    }
    // odd map
    for (double x : {0.4, 3.0}) EXPECT_NEAR(k.k(-x), -k.k(x), 1e-15);
}

TEST(LogMixtureSlopeMap, DerivativeBoundsOnWideGrid) {
    const auto k = log_mixture_slope_map(p_mix, q_mix, a_mix, b_mix);
    const auto grid = uniform_grid(-8.0, 8.0, 1601);
    const auto rep = check_slope_bounds(k, grid);
    EXPECT_TRUE(rep.pass());
    EXPECT_GE(rep.min_k_prime, p_mix - 1e-10);
    EXPECT_LE(rep.max_k_prime, std::sqrt(b_mix) + 1e-10);
    // derivative agrees with finite differences of k
    const double h = 1e-5;
    for (double x : {-5.0, -1.0, 0.0, 0.8, 4.0}) {
        EXPECT_NEAR(k.k_prime(x), (k.k(x + h) - k.k(x - h)) / (2 * h), 1e-7);
        EXPECT_NEAR(k.k_second(x), (k.k_prime(x + h) - k.k_prime(x - h)) / (2 * h), 1e-6);
    }
}

TEST(LogMixtureSlopeMap, ReproducesClosedFormPotential) {
    const auto u = potential_from_slope_map(log_mixture_slope_map(p_mix, q_mix, a_mix, b_mix));
    const auto closed = builtin_potential("log_mixture", {{"p", p_mix}, {"q", q_mix}, {"a", a_mix}, {"b", b_mix}});
    double worst = 0.0, worst_d = 0.0;
    for (double x = -8.0; x <= 8.0; x += 0.01) {
        worst = std::max(worst, std::abs(u.value(x) - forrem(x)));
        worst_d = std::max(worst_d, std::abs(u.right_derivative(x) - closed.right_derivative(x)));
    }
    EXPECT_LE(worst, 1e-10);
    EXPECT_LE(worst_d, 1e-8);
}

TEST(LogMixtureSlopeMap, Errors) {
    EXPECT_THROW(log_mixture_slope_map(0.5, 0.5, 1.0, 2.0), std::invalid_argument);
    EXPECT_THROW(log_mixture_slope_map(0.5, 0.5 * std::sqrt(2.0), 2.0, 2.0), std::invalid_argument);
    EXPECT_THROW(log_mixture_slope_map(0.5, 0.5 * std::sqrt(2.0), -1.0, 2.0), std::invalid_argument);
}

TEST(CheckSlopeBounds, Examples) {
    const std::vector<double> three{-1.0, 0.0, 1.0};
    const auto id = check_slope_bounds(identity_slope_map(), three);
    EXPECT_EQ(id.min_k_prime, 1.0);
    EXPECT_EQ(id.max_k_prime, 1.0);
    EXPECT_TRUE(id.pass());

    const auto cubic = check_slope_bounds(cubic_slope_map(1.0), uniform_grid(-5.0, 5.0, 1001));
    EXPECT_NEAR(cubic.min_k_prime, 1.0, 1e-15);
    EXPECT_NEAR(cubic.argmin, 0.0, 1e-12);
    EXPECT_TRUE(cubic.pass());

    auto strict = identity_slope_map();
    strict.alpha = 1.21;
    const auto rep = check_slope_bounds(strict, three);
    EXPECT_EQ(rep.violations.size(), 3u);
    EXPECT_FALSE(rep.pass());
    EXPECT_THROW(check_slope_bounds(strict, std::vector<double>{}), std::invalid_argument);
}

TEST(MixtureSlopeMap, AcceptsGeneralAtomList) {
    // three atoms with sum w/sqrt(kappa) = 1
    const std::vector<MixtureAtom> atoms{{0.25, 1.0}, {0.5, 4.0}, {1.5, 9.0}};
    const auto k = mixture_slope_map(atoms, "mix3");
    const auto rep = check_slope_bounds(k, uniform_grid(-6.0, 6.0, 601));
    EXPECT_LE(rep.max_k_prime, 3.0 + 1e-10);
    const auto u = potential_from_slope_map(k);
    const auto closed = log_mixture_potential(atoms);
    for (double x = -5.0; x <= 5.0; x += 0.5) EXPECT_NEAR(u.value(x), closed.value(x), 1e-10);
}
