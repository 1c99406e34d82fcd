#pragma once

#include "bass_embedding.hpp"
#include "config.hpp"
#include "local_time.hpp"
#include "verifier.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace blembed {

enum class Command { run, embed, verify, sandwich, appendix };

inline const char* command_name(Command c) {
    switch (c) {
    case Command::run: return "run";
    case Command::embed: return "embed";
    case Command::verify: return "verify";
    case Command::sandwich: return "sandwich";
    case Command::appendix: return "appendix";
    }
    return "?";
}

struct SandwichPoint {
    double x = 0.0;
    double est1 = 0.0;
    McEstimate mc;
    /// (p, est2_upper) pairs
    std::vector<std::pair<double, double>> est2;
};

struct EmbeddingChecks {
    WaldCheck wald;
    TBoundCheck t_bound;
    LawCheck law;
};

/// Everything computed for one configured potential.
struct PotentialResult {
    std::string label;
    /// slope-map entry verified through the appendix bounds
    bool appendix = false;
    std::string provenance;
    double A = 0.0;
    double mean_x = 0.0;
    double var_x = 0.0;
    std::shared_ptr<const TransportMap> transport;
    std::optional<EmbeddingEnsemble> ensemble;
    std::optional<EmbeddingChecks> embedding;
    std::optional<SlopeBoundReport> slopes;
    std::optional<SlopeMap> slope_map;
    std::vector<SandwichPoint> sandwich;
    std::vector<VerificationReport> reports;
    /// Embedding, slope and sandwich verdicts in InequalityCheck form.
    std::vector<InequalityCheck> checks;
    /// Why a command did not apply to this potential.
    std::string skipped;

    bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        for (const auto& r : reports)
            if (!r.pass()) return false;
        return true;
    }
};

struct ExperimentResult {
    Command command = Command::run;
    ExperimentConfig config;
    std::vector<PotentialResult> potentials;

    bool pass() const {
        for (const auto& p : potentials)
            if (!p.pass()) return false;
        return true;
    }
};

namespace detail {

inline bool simulates(Command c) { return c == Command::run || c == Command::embed || c == Command::sandwich; }

inline InequalityCheck upper_check(std::string name, double value, double bound) {
    return {std::move(name), bound - value, 0.0, false, "", value <= bound};
}

inline std::vector<InequalityCheck> embedding_checks(const EmbeddingChecks& c) {
    std::vector<InequalityCheck> out;
    const double wald_tol = 3.0 * c.wald.std_error + c.wald.bias_budget;
    out.push_back({"wald", -std::abs(c.wald.mean_T - c.wald.var_x), wald_tol, false, "", c.wald.pass});
    out.push_back(upper_check("t_bound", c.t_bound.max_T, c.t_bound.bound));
    out.push_back(upper_check("ks", c.law.ks_distance, c.law.threshold));
    return out;
}

/// est1 <= MC gap + 3 SE and MC gap <= est2(p) + 3 SE for every p.
inline std::vector<InequalityCheck> sandwich_checks(const SandwichPoint& s) {
    std::vector<InequalityCheck> out;
    const std::string at = "(x=" + format_g17(s.x) + ")";
    const double se3 = 3.0 * s.mc.std_error;
    out.push_back({"sandwich_lower" + at, s.mc.estimate - s.est1, se3, false, "", s.mc.estimate - s.est1 >= -se3});
    for (const auto& [p, e2] : s.est2)
        out.push_back({"sandwich_upper" + at + "(p=" + format_g17(p) + ")", e2 - s.mc.estimate, se3, false, "",
                       e2 - s.mc.estimate >= -se3});
    return out;
}

inline std::string file_stem(std::size_t index, const std::string& label) {
    std::string out = std::to_string(index) + "_";
    for (char ch : label) out += std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' ? ch : '_';
    return out;
}

} // namespace detail

/// Builds, simulates and verifies as the command requires. Throws
/// config_error when the configuration cannot be realised; performs no I/O.
inline ExperimentResult run_experiment(const ExperimentConfig& config, Command command) {
    validate_config(config, detail::simulates(command));
    ExperimentResult res;
    res.command = command;
    res.config = config;

    std::vector<ConvexTest> psis;
    for (const auto& s : config.psis) psis.push_back(psi_from_spec(s));

    for (const auto& spec : config.potentials) {
        PotentialResult pr;
        pr.appendix = spec.slope_map;
        try {
            if (spec.slope_map) {
                pr.slope_map = slope_map_from_spec(spec);
                pr.transport = std::make_shared<const TransportMap>(
                    build_transport(potential_from_slope_map(*pr.slope_map), 1.0 / pr.slope_map->alpha,
                                    config.quadrature_tol));
            } else {
                pr.transport = std::make_shared<const TransportMap>(
                    build_transport(potential_from_spec(spec), config.A, config.quadrature_tol));
            }
        } catch (const divergent_normalizer& e) {
            throw config_error(std::string("potential '") + spec.family + "': " + e.what());
        } catch (const slope_bound_violation& e) {
            throw config_error(std::string("potential '") + spec.family + "': " + e.what());
        } catch (const std::invalid_argument& e) {
            throw config_error(std::string("potential '") + spec.family + "': " + e.what());
        }
        pr.label = pr.transport->label();
        pr.provenance = provenance(*pr.transport);
        pr.A = pr.transport->A();
        pr.mean_x = pr.transport->mean_mu();
        pr.var_x = pr.transport->var_mu();
        if (command == Command::sandwich && pr.appendix)
            pr.skipped = "the local-time sandwich needs a convex Gaussian-tilt potential";
        if (command == Command::appendix && !pr.appendix) pr.skipped = "not a slope-map potential";
        res.potentials.push_back(std::move(pr));
    }

    if (detail::simulates(command)) {
        std::vector<std::unique_ptr<ClarkIntegrand>> integrands;
        std::vector<const ClarkIntegrand*> ptrs;
        std::vector<std::size_t> owner;
        for (std::size_t i = 0; i < res.potentials.size(); ++i) {
            if (!res.potentials[i].skipped.empty()) continue;
            integrands.push_back(std::make_unique<ClarkIntegrand>(res.potentials[i].transport));
            ptrs.push_back(integrands.back().get());
            owner.push_back(i);
        }
        auto ensembles = simulate_embeddings(ptrs, config.n_paths, config.n_steps, config.seed);
        for (std::size_t m = 0; m < owner.size(); ++m) {
            auto& pr = res.potentials[owner[m]];
            pr.ensemble = std::move(ensembles[m]);
            pr.embedding = EmbeddingChecks{wald_check(*pr.ensemble, pr.var_x), t_bound_check(*pr.ensemble),
                                           embedded_law_check(*pr.ensemble, *pr.transport)};
            for (auto& c : detail::embedding_checks(*pr.embedding)) pr.checks.push_back(std::move(c));
        }
    }

    for (auto& pr : res.potentials) {
        if (!pr.skipped.empty()) continue;
        if (pr.appendix && (command == Command::run || command == Command::verify || command == Command::appendix)) {
            pr.slopes = check_slope_bounds(*pr.slope_map, uniform_grid(-8.0, 8.0, 3201));
            InequalityCheck c{"slope_bounds", pr.slopes->pass() ? 0.0 : -1.0, 0.0, false, "", pr.slopes->pass()};
            if (!pr.slopes->pass()) c.note = "k' leaves [sqrt(alpha), sqrt(beta)] on |x| <= 8";
            pr.checks.push_back(c);
            if (!pr.slopes->pass()) continue;
        }
        const bool with_mc = command == Command::run;
        if (command == Command::run || command == Command::verify || command == Command::appendix) {
            for (const auto& psi : psis) {
                const EmbeddingEnsemble* e = with_mc ? &*pr.ensemble : nullptr;
                if (pr.appendix) {
                    const auto& k = *pr.slope_map;
                    pr.reports.push_back(verify_appendix(psi, k, *pr.transport, k.alpha, k.beta, k.improved_alpha, e));
                } else {
                    pr.reports.push_back(verify_theorem(psi, *pr.transport, config.p_list, e));
                }
            }
        }
        if (!pr.appendix && (command == Command::run || command == Command::sandwich)) {
            for (double x : config.sandwich_x) {
                SandwichPoint s;
                s.x = x;
                s.est1 = est1_lower(x, pr.A, pr.var_x);
                s.mc = local_time_gap_mc(*pr.ensemble, x, pr.A);
                for (double p : config.p_list) s.est2.emplace_back(p, est2_upper(x, pr.A, pr.var_x, p));
                for (auto& c : detail::sandwich_checks(s)) pr.checks.push_back(std::move(c));
                pr.sandwich.push_back(std::move(s));
            }
        }
    }
    return res;
}

namespace detail {

inline json num(double v) { return format_g17(v); }

inline json to_json(const InequalityCheck& c) {
    json j{{"name", c.name}, {"margin", num(c.margin)}, {"tolerance", num(c.tolerance)}, {"pass", c.pass}};
    if (c.skipped) j["skipped"] = true;
    if (!c.note.empty()) j["note"] = c.note;
    return j;
}

inline json checks_json(const std::vector<InequalityCheck>& cs) {
    json out = json::array();
    for (const auto& c : cs) out.push_back(to_json(c));
    return out;
}

} // namespace detail

inline json to_json(const VerificationReport& r) {
    using detail::num;
    json j{{"kind", r.kind == ReportKind::theorem ? "theorem" : "appendix"},
           {"potential", r.potential},
           {"psi", r.psi},
           {"A", num(r.A)},
           {"var_x", num(r.var_x)},
           {"lhs", num(r.lhs)},
           {"rhs", num(r.rhs)},
           {"lhs_infinite", r.lhs_infinite},
           {"rhs_infinite", r.rhs_infinite}};
    if (r.kind == ReportKind::theorem) {
        j["bl2_correction"] = num(r.bl2_correction);
        json bl3 = json::array();
        for (const auto& b : r.bl3)
            bl3.push_back({{"p", num(b.p)}, {"q", num(b.q)}, {"C", num(b.C)}, {"upper_correction", num(b.upper_correction)}});
        j["bl3"] = bl3;
    }
    if (r.mad_ratio) j["mad_ratio"] = num(*r.mad_ratio);
    if (r.mc) j["mc_crosscheck"] = {{"estimate", num(r.mc->estimate)}, {"std_error", num(r.mc->std_error)}, {"n", r.mc->n}};
    j["checks"] = detail::checks_json(r.checks);
    j["pass"] = r.pass();
    return j;
}

/// The full report; numbers as %.17g strings. The echoed config omits the
/// output directory so that a report does not depend on where it is written.
inline json report_json(const ExperimentResult& res) {
    using detail::num;
    json config = to_json(res.config);
    config.erase("output_dir");
    json pots = json::array();
    for (const auto& pr : res.potentials) {
        json p{{"label", pr.label},
               {"route", pr.appendix ? "appendix" : "theorem"},
               {"provenance", pr.provenance},
               {"A", num(pr.A)},
               {"mean_x", num(pr.mean_x)},
               {"var_x", num(pr.var_x)}};
        if (!pr.skipped.empty()) p["skipped"] = pr.skipped;
        if (pr.embedding) {
            const auto& e = *pr.embedding;
            p["embedding"] = {{"n_paths", pr.ensemble->size()},
                              {"n_steps", pr.ensemble->n_steps},
                              {"seed", pr.ensemble->seed},
                              {"mean_T", num(e.wald.mean_T)},
                              {"std_error_T", num(e.wald.std_error)},
                              {"bias_budget", num(e.wald.bias_budget)},
                              {"max_T", num(e.t_bound.max_T)},
                              {"T_bound", num(e.t_bound.bound)},
                              {"T_above_A", pr.ensemble->clamp_count},
                              {"ks_distance", num(e.law.ks_distance)},
                              {"ks_threshold", num(e.law.threshold)}};
        }
        if (pr.slopes && pr.slope_map) {
            json s{{"alpha", num(pr.slope_map->alpha)},
                   {"min_k_prime", num(pr.slopes->min_k_prime)},
                   {"max_k_prime", num(pr.slopes->max_k_prime)}};
            if (pr.slope_map->beta) s["beta"] = num(*pr.slope_map->beta);
            if (pr.slope_map->improved_alpha) s["improved_alpha"] = num(*pr.slope_map->improved_alpha);
            p["slope_bounds"] = s;
        }
        if (!pr.sandwich.empty()) {
            json sw = json::array();
            for (const auto& s : pr.sandwich) {
                json e2 = json::array();
                for (const auto& [pp, v] : s.est2) e2.push_back({{"p", num(pp)}, {"est2", num(v)}});
                sw.push_back({{"x", num(s.x)},
                              {"est1", num(s.est1)},
                              {"mc", num(s.mc.estimate)},
                              {"mc_std_error", num(s.mc.std_error)},
                              {"est2", e2}});
            }
            p["sandwich"] = sw;
        }
        p["checks"] = detail::checks_json(pr.checks);
        json reps = json::array();
        for (const auto& r : pr.reports) reps.push_back(to_json(r));
        p["reports"] = reps;
        p["pass"] = pr.pass();
        pots.push_back(p);
    }
    return json{{"command", command_name(res.command)},
                {"config", config},
                {"potentials", pots},
                {"pass", res.pass()}};
}

/// One row per (potential, psi, p). Appendix rows repeat the p-free
/// margins and leave the theorem columns empty.
inline std::string summary_csv(const ExperimentResult& res) {
    std::string out = "potential,route,psi,p,A,var_x,lhs,rhs,bl1_margin,bl2_margin,bl3_C,bl3_margin,mad_margin,"
                      "upper_margin,lower_margin,improved_margin,mc_estimate,mc_std_error,pass\n";
    auto margin_of = [](const VerificationReport& r, const std::string& prefix) -> std::string {
        for (const auto& c : r.checks)
            if (c.name.rfind(prefix, 0) == 0) return c.skipped ? "skipped" : format_g17(c.margin);
        return "";
    };
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        return q + "\"";
    };
    for (const auto& pr : res.potentials)
        for (const auto& r : pr.reports)
            for (std::size_t i = 0; i < res.config.p_list.size(); ++i) {
                const double p = res.config.p_list[i];
                const bool th = r.kind == ReportKind::theorem;
                std::string bl3_C, bl3_margin;
                if (th) {
                    bl3_C = format_g17(r.bl3[i].C);
                    bl3_margin = margin_of(r, "BL3(p=" + format_g17(p) + ")");
                }
                out += quote(pr.label) + ',' + (th ? "theorem" : "appendix") + ',' + quote(r.psi) + ',' + format_g17(p) +
                       ',' + format_g17(r.A) + ',' + format_g17(r.var_x) + ',' + format_g17(r.lhs) + ',' +
                       format_g17(r.rhs) + ',' + margin_of(r, "BL1") + ',' + margin_of(r, "BL2") + ',' + bl3_C + ',' +
                       bl3_margin + ',' + margin_of(r, "MAD") + ',' + margin_of(r, "upper(") + ',' +
                       margin_of(r, "lower(") + ',' + margin_of(r, "improved(") + ',' +
                       (r.mc ? format_g17(r.mc->estimate) : "") + ',' + (r.mc ? format_g17(r.mc->std_error) : "") +
                       ',' + (r.pass() ? "true" : "false") + '\n';
            }
    return out;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

inline std::string transport_plot_csv(const PotentialResult& pr) {
    std::string out = "x,g,g_prime,sqrt_A\n";
    const double sa = std::sqrt(pr.A);
    for (double x : uniform_grid(-4.0, 4.0, 161)) {
        const auto pt = pr.transport->evaluate(x);
        out += format_g17(x) + ',' + format_g17(pt.value) + ',' + format_g17(pt.slope) + ',' + format_g17(sa) + '\n';
    }
    return out;
}

inline std::string sandwich_plot_csv(const PotentialResult& pr, const std::vector<double>& p_list) {
    std::string out = "x,est1,mc,mc_std_error";
    for (double p : p_list) out += ",est2_p" + format_g17(p);
    out += '\n';
    for (const auto& s : pr.sandwich) {
        out += format_g17(s.x) + ',' + format_g17(s.est1) + ',' + format_g17(s.mc.estimate) + ',' +
               format_g17(s.mc.std_error);
        for (const auto& [p, v] : s.est2) out += ',' + format_g17(v);
        out += '\n';
    }
    return out;
}

inline std::string margins_plot_csv(const ExperimentResult& res) {
    std::string out = "potential,psi,check,margin,tolerance,pass\n";
    auto row = [&out](const std::string& pot, const std::string& psi, const InequalityCheck& c) {
        std::string name = c.name;
        for (char& ch : name)
            if (ch == ',') ch = ';';
        out += pot + ',' + psi + ',' + name + ',' + format_g17(c.margin) + ',' + format_g17(c.tolerance) + ',' +
               (c.pass ? "true" : "false") + '\n';
    };
    for (std::size_t i = 0; i < res.potentials.size(); ++i) {
        const auto& pr = res.potentials[i];
        const std::string pot = file_stem(i, pr.label);
        for (const auto& c : pr.checks) row(pot, "", c);
        for (const auto& r : pr.reports) {
            std::string psi = r.psi;
            for (char& ch : psi)
                if (ch == ',') ch = ';';
            for (const auto& c : r.checks) row(pot, psi, c);
        }
    }
    return out;
}

} // namespace detail

/// Writes report.json, summary.csv, ensemble.csv (the first simulated
/// potential; every potential also goes to ensembles/<index>_<label>.csv)
/// and plotdata/*.csv under `dir`.
inline void write_outputs(const ExperimentResult& res, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "plotdata");
    detail::write_text(dir / "report.json", report_json(res).dump(2) + "\n");
    const bool has_reports = std::any_of(res.potentials.begin(), res.potentials.end(),
                                         [](const PotentialResult& p) { return !p.reports.empty(); });
    if (has_reports) detail::write_text(dir / "summary.csv", summary_csv(res));

    bool first = true;
    for (std::size_t i = 0; i < res.potentials.size(); ++i) {
        const auto& pr = res.potentials[i];
        const std::string stem = detail::file_stem(i, pr.label);
        detail::write_text(dir / "plotdata" / ("transport_" + stem + ".csv"), detail::transport_plot_csv(pr));
        if (!pr.sandwich.empty())
            detail::write_text(dir / "plotdata" / ("sandwich_" + stem + ".csv"),
                               detail::sandwich_plot_csv(pr, res.config.p_list));
        if (!pr.ensemble) continue;
        if (first) write_ensemble_csv(*pr.ensemble, (dir / "ensemble.csv").string());
        first = false;
        fs::create_directories(dir / "ensembles");
        write_ensemble_csv(*pr.ensemble, (dir / "ensembles" / (stem + ".csv")).string());
    }
    if (has_reports || std::any_of(res.potentials.begin(), res.potentials.end(),
                                   [](const PotentialResult& p) { return !p.checks.empty(); }))
        detail::write_text(dir / "plotdata" / "margins.csv", detail::margins_plot_csv(res));
}

} // namespace blembed
