#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>
#include <vector>

namespace blembed::quad {

struct Options {
    double abs_tol = 0.0;
    double rel_tol = 1e-12;
    /// Bisection depth after which a panel is no longer refined.
    int max_depth = 30;
    int max_panels = 4000;
};

struct Result {
    double value = 0.0;
    double abs_error = 0.0;
    int panels = 0;
    int deepest_level = 0;
    bool converged = false;
};

namespace detail {

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
inline constexpr std::array<double, 11> kronrod_nodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.000000000000000000000000000000000};

inline constexpr std::array<double, 11> kronrod_weights = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077600725054970, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};

// Gauss weights for kronrod_nodes[1], [3], [5], [7], [9].
inline constexpr std::array<double, 5> gauss_weights = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Panel {
    double a, b, value, error;
    int depth;
    bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gk21(F& f, double a, double b, int depth) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(center);
    double kronrod = fc * kronrod_weights[10];
    double gauss = 0.0;
    double abs_sum = std::abs(kronrod);
    std::array<double, 10> lo{}, hi{};
    for (int j = 0; j < 10; ++j) {
        const double dx = half * kronrod_nodes[j];
        lo[j] = f(center - dx);
        hi[j] = f(center + dx);
        kronrod += kronrod_weights[j] * (lo[j] + hi[j]);
        abs_sum += kronrod_weights[j] * (std::abs(lo[j]) + std::abs(hi[j]));
        if (j % 2 == 1) gauss += gauss_weights[j / 2] * (lo[j] + hi[j]);
    }
    const double mean = 0.5 * kronrod;
    double asc = kronrod_weights[10] * std::abs(fc - mean);
    for (int j = 0; j < 10; ++j)
        asc += kronrod_weights[j] * (std::abs(lo[j] - mean) + std::abs(hi[j] - mean));

    const double result = kronrod * half;
    double err = std::abs((kronrod - gauss) * half);
    const double resasc = asc * std::abs(half);
    const double resabs = abs_sum * std::abs(half);
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * resabs, err);
    return {a, b, result, err, depth};
}

} // namespace detail

/// Globally adaptive Gauss-Kronrod (21-point) integration on a finite [a, b].
/// Panels with the largest error estimate are bisected until the summed error
/// meets max(abs_tol, rel_tol * |I|).
template <class F>
Result integrate(F&& f, double a, double b, const Options& opt = {}) {
    Result out;
    if (a == b) {
        out.converged = true;
        return out;
    }
    if (!std::isfinite(a) || !std::isfinite(b)) throw std::invalid_argument("quad::integrate: infinite bounds");
    const double sign = a < b ? 1.0 : -1.0;
    if (a > b) std::swap(a, b);

    std::priority_queue<detail::Panel> heap;
    std::vector<detail::Panel> frozen;
    heap.push(detail::gk21(f, a, b, 0));
    auto totals = [&] {
        double v = 0.0, e = 0.0;
        auto copy = heap;
        while (!copy.empty()) {
            v += copy.top().value;
            e += copy.top().error;
            copy.pop();
        }
        for (const auto& p : frozen) {
            v += p.value;
            e += p.error;
        }
        return std::pair{v, e};
    };

    double value = heap.top().value, error = heap.top().error;
    int panels = 1;
    while (!heap.empty()) {
        if (error <= std::max(opt.abs_tol, opt.rel_tol * std::abs(value))) {
            out.converged = true;
            break;
        }
        if (panels >= opt.max_panels) break;
        const detail::Panel worst = heap.top();
        heap.pop();
        if (worst.depth >= opt.max_depth) {
            frozen.push_back(worst);
            continue;
        }
        const double mid = 0.5 * (worst.a + worst.b);
        const auto left = detail::gk21(f, worst.a, mid, worst.depth + 1);
        const auto right = detail::gk21(f, mid, worst.b, worst.depth + 1);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        out.deepest_level = std::max(out.deepest_level, worst.depth + 1);
        heap.push(left);
        heap.push(right);
        ++panels;
    }
    // Re-sum to shed the drift of the running totals.
    auto [v, e] = totals();
    if (!out.converged) out.converged = e <= std::max(opt.abs_tol, opt.rel_tol * std::abs(v));
    out.value = sign * v;
    out.abs_error = e;
    out.panels = panels;
    return out;
}

/// Integral over [a, b] split at the given interior breakpoints (kinks,
/// atoms). Breakpoints outside (a, b) are ignored.
template <class F>
Result integrate_piecewise(F&& f, double a, double b, std::vector<double> breaks, const Options& opt = {}) {
    std::erase_if(breaks, [&](double x) { return !(x > a && x < b); });
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    Result total;
    total.converged = true;
    double lo = a;
    breaks.push_back(b);
    for (double hi : breaks) {
        const auto r = integrate(f, lo, hi, opt);
        total.value += r.value;
        total.abs_error += r.abs_error;
        total.panels += r.panels;
        total.deepest_level = std::max(total.deepest_level, r.deepest_level);
        total.converged = total.converged && r.converged;
        lo = hi;
    }
    return total;
}

/// Gauss-Hermite rule normalised for E[f(Z)], Z ~ N(0, 1): nodes are
/// probabilists' abscissae and the weights sum to one.
struct HermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    template <class F>
    double expectation(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
        return s;
    }
};

/// Newton iteration on orthonormal Hermite polynomials with the classical
/// asymptotic starting guesses.
inline HermiteRule gauss_hermite(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: n must be positive");
    const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
    std::vector<double> x(n), w(n);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1) - 1.85575 * std::pow(2.0 * n + 1, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(double(n), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[i - 2];
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(double(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-14 * std::max(1.0, std::abs(z))) break;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = w[n - 1 - i] = 2.0 / (pp * pp);
    }
    HermiteRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    double total = 0.0;
    // Ascending order, small weights first when summing.
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = std::numbers::sqrt2 * x[n - 1 - i];
        rule.weights[i] = w[n - 1 - i] / std::sqrt(std::numbers::pi);
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    std::vector<std::size_t> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rule.weights[a] < rule.weights[b]; });
    for (auto i : order) total += rule.weights[i];
    for (auto& wi : rule.weights) wi /= total;
    return rule;
}

} // namespace blembed::quad
