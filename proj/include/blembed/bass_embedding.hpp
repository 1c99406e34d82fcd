#pragma once

#include "ensemble.hpp"
#include "errors.hpp"
#include "philox.hpp"
#include "quadrature.hpp"
#include "transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace blembed {

struct ClarkOptions {
    int hermite_nodes = 64;
    int s_rows = 256;
    int y_cols = 1024;
    double y_half_width = 8.0;
    /// Table points of g' per y-grid step. The table lattice contains the
    /// y grid, so each row is a discrete Gaussian convolution of the table.
    int table_refinement = 8;
    /// The table extends at least this far on both sides.
    double g_prime_table_half_width = 20.0;
};

/// a(s, y) = E[g'(y + sqrt(1 - s) Z)], the integrand in Clark's
/// representation g(W_1) = E g(W_1) + int_0^1 a(s, W_s) dW_s.
///
/// value() is a direct Gauss-Hermite evaluation with the exact g'.
/// grid_value() interpolates a precomputed s-by-y tensor table, which is what
/// the path simulation uses.
class ClarkIntegrand {
public:
    explicit ClarkIntegrand(std::shared_ptr<const TransportMap> transport, ClarkOptions opt = {})
        : T_(std::move(transport)), opt_(opt), rule_(quad::gauss_hermite(opt.hermite_nodes)) {
        if (!T_) throw std::invalid_argument("ClarkIntegrand needs a transport map");
        if (opt_.s_rows < 2 || opt_.y_cols < 2 || opt_.table_refinement < 1 ||
            !(opt_.g_prime_table_half_width >= opt_.y_half_width))
            throw std::invalid_argument("ClarkIntegrand grid needs at least two points per axis");
        build_tables();
    }

    const TransportMap& transport() const { return *T_; }
    std::shared_ptr<const TransportMap> transport_ptr() const { return T_; }
    const ClarkOptions& options() const { return opt_; }
    double mean_g() const { return mean_g_; }

    /// Direct evaluation by adaptive quadrature of the exact g'.
    double value(double s, double y) const {
        check_s(s);
        const double w = 1.0 - s;
        if (w < 1e-6) return T_->g_prime(y);
        const double r = std::sqrt(w);
        quad::Options o;
        o.abs_tol = 1e-13;
        o.rel_tol = 1e-12;
        return quad::integrate([&](double z) { return T_->g_prime(y + r * z) * heat_kernel(1.0, z); }, -12.0, 12.0, o)
            .value;
    }

    double grid_value(double s, double y) const {
        check_s(s);
        const auto [i, w] = row_of(s);
        return row_value(i, w, y);
    }

    /// Row index and interpolation weight of s. Rows sit at
    /// s = 1 - (1 - u)^2 for uniform u, denser towards s = 1 where a(s, .)
    /// sharpens to g'.
    std::pair<int, double> row_of(double s) const {
        const int R = opt_.s_rows;
        const double ps = (1.0 - std::sqrt(std::max(0.0, 1.0 - s))) * (R - 1);
        const int i = std::min(int(ps), R - 2);
        return {i, std::min(ps - i, 1.0)};
    }

    static double row_s(int i, int rows) {
        const double u = 1.0 - double(i) / (rows - 1);
        return 1.0 - u * u;
    }

    /// Bilinear lookup with a precomputed row index and weight; y outside the
    /// grid falls back to convolving the g' table directly.
    double row_value(int i, double ws, double y) const {
        const double py = (y + opt_.y_half_width) * y_scale_;
        if (!(py >= 0.0) || py > opt_.y_cols - 1) {
            const double s0 = row_s(i, opt_.s_rows);
            const double s = s0 + ws * (row_s(i + 1, opt_.s_rows) - s0);
            return linear_convolution(std::sqrt(std::max(0.0, 1.0 - s)), y);
        }
        const int j = std::min(int(py), opt_.y_cols - 2);
        const double wy = py - j;
        const double* r0 = &grid_[std::size_t(i) * opt_.y_cols + j];
        const double* r1 = r0 + opt_.y_cols;
        const double a0 = r0[0] + wy * (r0[1] - r0[0]);
        const double a1 = r1[0] + wy * (r1[1] - r1[0]);
        return a0 + ws * (a1 - a0);
    }

    /// min and max of g' over the tabulated range.
    std::pair<double, double> g_prime_range() const {
        const auto [lo, hi] = std::minmax_element(gp_.begin(), gp_.end());
        return {*lo, *hi};
    }

private:
    static void check_s(double s) {
        if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("Clark integrand: s must lie in [0, 1]");
    }

    double table_node(std::size_t k) const { return table_lo_ + double(k) * h_; }

    /// E[L(y + sigma Z)] for the piecewise linear interpolant L of the g'
    /// table, held constant beyond its ends. Exact segment by segment.
    double linear_convolution(double sigma, double y) const {
        const std::size_t n = gp_.size();
        const double p = (y - table_lo_) / h_;
        if (sigma <= 0.0) {
            if (p <= 0.0) return gp_.front();
            if (p >= double(n - 1)) return gp_.back();
            const std::size_t k = std::size_t(p);
            return gp_[k] + (p - double(k)) * (gp_[k + 1] - gp_[k]);
        }
        const double reach = 10.0 * sigma / h_;
        const std::size_t k0 = std::size_t(std::clamp(std::floor(p - reach), 0.0, double(n - 1)));
        const std::size_t k1 = std::size_t(std::clamp(std::ceil(p + reach), 0.0, double(n - 1)));
        double t_prev = (table_node(k0) - y) / sigma;
        double cdf_prev = std_normal_cdf(t_prev), pdf_prev = heat_kernel(1.0, t_prev);
        double sum = gp_[k0] * cdf_prev;
        for (std::size_t k = k0; k < k1; ++k) {
            const double t = (table_node(k + 1) - y) / sigma;
            const double cdf = std_normal_cdf(t), pdf = heat_kernel(1.0, t);
            const double slope = (gp_[k + 1] - gp_[k]) / h_;
            const double c0 = gp_[k] + slope * (y - table_node(k));
            sum += c0 * (cdf - cdf_prev) + slope * sigma * (pdf_prev - pdf);
            t_prev = t;
            cdf_prev = cdf;
            pdf_prev = pdf;
        }
        return sum + gp_[k1] * std_normal_sf(t_prev);
    }

    void build_tables() {
        const int m = opt_.table_refinement;
        const double hy = 2.0 * opt_.y_half_width / (opt_.y_cols - 1);
        h_ = hy / m;
        const auto off = std::size_t(std::ceil((opt_.g_prime_table_half_width - opt_.y_half_width) / h_));
        table_lo_ = -opt_.y_half_width - double(off) * h_;
        const std::size_t n = 2 * off + std::size_t(m) * (opt_.y_cols - 1) + 1;
        gp_.resize(n);
        for (std::size_t k = 0; k < n; ++k) gp_[k] = T_->g_prime(table_node(k));

        y_scale_ = 1.0 / hy;
        grid_.resize(std::size_t(opt_.s_rows) * opt_.y_cols);
        std::vector<double> w;
        for (int i = 0; i < opt_.s_rows; ++i) {
            const double sigma = std::sqrt(std::max(0.0, 1.0 - row_s(i, opt_.s_rows)));
            double* row = &grid_[std::size_t(i) * opt_.y_cols];
            const auto reach = std::size_t(std::ceil(10.0 * sigma / h_));
            if (sigma < 2.0 * h_ || reach > off) {
                for (int j = 0; j < opt_.y_cols; ++j)
                    row[j] = linear_convolution(sigma, -opt_.y_half_width + j * hy);
                continue;
            }
            // trapezoid rule on the table lattice with normalized weights
            w.resize(reach + 1);
            double total = 0.0;
            for (std::size_t d = 0; d <= reach; ++d) {
                const double x = double(d) * h_ / sigma;
                w[d] = std::exp(-0.5 * x * x);
                total += d == 0 ? w[d] : 2.0 * w[d];
            }
            for (double& v : w) v /= total;
            for (int j = 0; j < opt_.y_cols; ++j) {
                const double* c = &gp_[off + std::size_t(m) * j];
                double acc = w[0] * c[0];
                for (std::size_t d = 1; d <= reach; ++d) acc += w[d] * (c[d] + *(c - d));
                row[j] = acc;
            }
        }
        mean_g_ = rule_.expectation([this](double z) { return T_->g(z); });
    }

    std::shared_ptr<const TransportMap> T_;
    ClarkOptions opt_;
    quad::HermiteRule rule_;
    std::vector<double> gp_;
    double h_ = 0.0;
    double table_lo_ = 0.0;
    std::vector<double> grid_;
    double y_scale_ = 0.0;
    double mean_g_ = 0.0;
};

enum class TimeRule { trapezoid, left_endpoint };

/// Worker count: hardware concurrency, capped by BL_EMBED_THREADS when set.
inline unsigned embedding_threads() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BL_EMBED_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap >= 1) n = std::min<unsigned>(n, unsigned(cap));
    }
    return n;
}

/// Simulates W on the grid {i / n_steps}, T = int_0^1 a(s, W_s)^2 ds and
/// B(T) = g(W_1) - E g(W_1) for every integrand in `cs` over the same
/// Brownian paths. Increments for path k, steps 2j and 2j+1 are the normal
/// pair keyed by (seed, k, j), so each ensemble depends neither on how paths
/// are split across threads nor on which other integrands share the run.
inline std::vector<EmbeddingEnsemble> simulate_embeddings(std::span<const ClarkIntegrand* const> cs,
                                                          std::size_t n_paths, int n_steps, std::uint64_t seed,
                                                          TimeRule rule = TimeRule::trapezoid, unsigned threads = 0) {
    if (n_paths < 1) throw std::invalid_argument("simulate_embedding: n_paths must be at least 1");
    if (n_steps < 16) throw std::invalid_argument("simulate_embedding: n_steps must be at least 16");
    std::vector<EmbeddingEnsemble> out(cs.size());
    for (std::size_t m = 0; m < cs.size(); ++m) {
        if (!cs[m]) throw std::invalid_argument("simulate_embedding: null integrand");
        auto& e = out[m];
        e.n_steps = n_steps;
        e.seed = seed;
        e.A = cs[m]->transport().A();
        e.mean_g = cs[m]->mean_g();
        e.source = provenance(cs[m]->transport());
        e.samples.resize(n_paths);
    }

    std::vector<int> row(n_steps + 1);
    std::vector<double> row_w(n_steps + 1);
    for (std::size_t m = 0; m < cs.size(); ++m)
        if (cs[m]->options().s_rows != cs[0]->options().s_rows)
            throw std::invalid_argument("simulate_embeddings: integrands must share the s grid");
    if (!cs.empty())
        for (int i = 0; i <= n_steps; ++i) std::tie(row[i], row_w[i]) = cs[0]->row_of(double(i) / n_steps);
    const double h = 1.0 / n_steps, sqrt_h = std::sqrt(h);
    const double w_first = rule == TimeRule::trapezoid ? 0.5 : 1.0;
    const double w_last = rule == TimeRule::trapezoid ? 0.5 : 0.0;

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        std::vector<double> path(n_steps + 1);
        for (std::size_t k = lo; k < hi; ++k) {
            path[0] = 0.0;
            for (int j = 0; 2 * j < n_steps; ++j) {
                const auto z = normal_pair(seed, k, std::uint32_t(j));
                path[2 * j + 1] = path[2 * j] + sqrt_h * z[0];
                if (2 * j + 2 <= n_steps) path[2 * j + 2] = path[2 * j + 1] + sqrt_h * z[1];
            }
            for (std::size_t m = 0; m < cs.size(); ++m) {
                const ClarkIntegrand& c = *cs[m];
                double a = c.row_value(row[0], row_w[0], 0.0);
                double acc = w_first * a * a;
                for (int i = 1; i < n_steps; ++i) {
                    a = c.row_value(row[i], row_w[i], path[i]);
                    acc += a * a;
                }
                a = c.row_value(row[n_steps], row_w[n_steps], path[n_steps]);
                acc += w_last * a * a;
                auto& s = out[m].samples[k];
                s.T = acc * h;
                s.w1 = path[n_steps];
                s.bt = c.transport().g(s.w1) - out[m].mean_g;
            }
        }
    };

    unsigned nt = threads ? threads : embedding_threads();
    nt = unsigned(std::min<std::size_t>(nt, n_paths));
    if (nt <= 1) {
        run_range(0, n_paths);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n_paths + nt - 1) / nt;
        for (unsigned t = 0; t < nt; ++t) {
            const std::size_t lo = std::min(n_paths, t * chunk), hi = std::min(n_paths, lo + chunk);
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    for (auto& e : out)
        for (const auto& s : e.samples)
            if (s.T > e.A) ++e.clamp_count;
    return out;
}

inline EmbeddingEnsemble simulate_embedding(const ClarkIntegrand& c, std::size_t n_paths, int n_steps,
                                            std::uint64_t seed, TimeRule rule = TimeRule::trapezoid,
                                            unsigned threads = 0) {
    const ClarkIntegrand* one[] = {&c};
    return std::move(simulate_embeddings(one, n_paths, n_steps, seed, rule, threads).front());
}

/// Time-discretization allowance for T: 2 sqrt(A) / n_steps.
inline double discretization_budget(const EmbeddingEnsemble& e) { return 2.0 * std::sqrt(e.A) / e.n_steps; }

struct WaldCheck {
    double mean_T = 0.0;
    double std_error = 0.0;
    double bias_budget = 0.0;
    double var_x = 0.0;
    bool pass = false;
};

/// E[T] = var(X): passes iff |mean T - var_x| <= 3 SE + 2 sqrt(A) / n_steps.
inline WaldCheck wald_check(const EmbeddingEnsemble& e, double var_x) {
    if (e.empty()) throw std::invalid_argument("wald_check: empty ensemble");
    WaldCheck out;
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        const double d = e.samples[i].T - mean;
        mean += d / double(i + 1);
        m2 += d * (e.samples[i].T - mean);
    }
    out.mean_T = mean;
    out.std_error = e.size() > 1 ? std::sqrt(m2 / double(e.size() - 1) / double(e.size())) : 0.0;
    out.bias_budget = discretization_budget(e);
    out.var_x = var_x;
    out.pass = std::abs(mean - var_x) <= 3.0 * out.std_error + out.bias_budget;
    return out;
}

struct TBoundCheck {
    double max_T = 0.0;
    double bound = 0.0;
    std::size_t violation_count = 0;
    bool pass = false;
};

/// T <= A: passes iff max T <= A (1 + 1e-9) + 2 sqrt(A) / n_steps.
inline TBoundCheck t_bound_check(const EmbeddingEnsemble& e) {
    if (e.empty()) throw std::invalid_argument("t_bound_check: empty ensemble");
    TBoundCheck out;
    out.bound = e.A * (1.0 + 1e-9) + discretization_budget(e);
    out.max_T = -std::numeric_limits<double>::infinity();
    for (const auto& s : e.samples) {
        out.max_T = std::max(out.max_T, s.T);
        if (s.T > out.bound) ++out.violation_count;
    }
    out.pass = out.violation_count == 0;
    return out;
}

struct LawCheck {
    double ks_distance = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

namespace detail {
inline void require_same_source(const EmbeddingEnsemble& e, const TransportMap& T, const char* op) {
    if (e.source != provenance(T))
        throw provenance_mismatch(std::string(op) + ": ensemble was drawn from '" + e.source + "', not '" +
                                  provenance(T) + "'");
}
} // namespace detail

/// Two-sided KS distance between bt + E g and F_mu; passes at the 1% level,
/// 1.63 / sqrt(n).
inline LawCheck embedded_law_check(const EmbeddingEnsemble& e, const TransportMap& T) {
    if (e.empty()) throw std::invalid_argument("embedded_law_check: empty ensemble");
    detail::require_same_source(e, T, "embedded_law_check");
    std::vector<double> xs;
    xs.reserve(e.size());
    for (const auto& s : e.samples) xs.push_back(s.bt + e.mean_g);
    std::sort(xs.begin(), xs.end());
    const double n = double(xs.size());
    LawCheck out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = T.mu_cdf(xs[i]);
        out.ks_distance = std::max({out.ks_distance, F - double(i) / n, double(i + 1) / n - F});
    }
    out.threshold = 1.63 / std::sqrt(n);
    out.pass = out.ks_distance <= out.threshold;
    return out;
}

} // namespace blembed
