#pragma once

#include "convex_tests.hpp"
#include "errors.hpp"
#include "potentials.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace blembed {

using json = nlohmann::ordered_json;

/// A potential entry: a Gaussian-tilt family (theorem route) or a slope map
/// (appendix route, variance fixed by alpha).
struct PotentialSpec {
    bool slope_map = false;
    std::string family;
    ParamMap params;
    /// Explicit mixture atoms for the "mixture" slope-map family.
    std::vector<MixtureAtom> atoms;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> improved_alpha;
};

struct PsiSpec {
    /// abs, square, power, call, corridor, affine or measure
    std::string kind;
    std::vector<double> params;
    std::vector<PsiAtom> atoms;
    std::vector<double> density_poly_coeffs;
    std::string label;
};

struct ExperimentConfig {
    std::vector<PotentialSpec> potentials;
    double A = 1.0;
    std::vector<PsiSpec> psis;
    std::vector<double> p_list{1.5, 2.0, 4.0};
    std::size_t n_paths = 100000;
    int n_steps = 2048;
    std::uint64_t seed = 42;
    double quadrature_tol = 1e-10;
    std::string output_dir = "out";
    /// Levels x of the local-time sandwich curves.
    std::vector<double> sandwich_x{0.0, 0.5, 1.0, 2.0};
};

namespace detail {

inline double number_at(const json& j, const std::string& where) {
    if (!j.is_number()) throw config_error(where + ": expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw config_error(where + ": expected a finite number");
    return v;
}

inline std::vector<double> numbers_at(const json& j, const std::string& where) {
    if (!j.is_array()) throw config_error(where + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number_at(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

inline std::uint64_t unsigned_at(const json& j, const std::string& where) {
    if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<std::int64_t>() < 0))
        throw config_error(where + ": expected a nonnegative integer");
    return j.get<std::uint64_t>();
}

inline void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) throw config_error(where + ": unknown key '" + k + "'");
    }
}

inline ParamMap params_at(const json& j, const std::string& where) {
    if (!j.is_object()) throw config_error(where + ": expected an object of numbers");
    ParamMap out;
    for (const auto& [k, v] : j.items()) out[k] = number_at(v, where + "." + k);
    return out;
}

inline PotentialSpec parse_potential(const json& j, const std::string& where) {
    if (!j.is_object()) throw config_error(where + ": expected an object");
    PotentialSpec s;
    if (j.contains("slope_map")) {
        only_keys(j, {"slope_map"}, where);
        const json& k = j["slope_map"];
        const std::string w = where + ".slope_map";
        if (!k.is_object()) throw config_error(w + ": expected an object");
        only_keys(k, {"family", "params", "atoms", "alpha", "beta", "improved_alpha"}, w);
        s.slope_map = true;
        if (!k.contains("family") || !k["family"].is_string()) throw config_error(w + ".family: expected a string");
        s.family = k["family"].get<std::string>();
        if (k.contains("params")) s.params = params_at(k["params"], w + ".params");
        if (k.contains("atoms")) {
            const json& a = k["atoms"];
            if (!a.is_array()) throw config_error(w + ".atoms: expected an array of [weight, kappa]");
            for (std::size_t i = 0; i < a.size(); ++i) {
                const auto pair = numbers_at(a[i], w + ".atoms[" + std::to_string(i) + "]");
                if (pair.size() != 2) throw config_error(w + ".atoms[" + std::to_string(i) + "]: expected [weight, kappa]");
                s.atoms.push_back({pair[0], pair[1]});
            }
        }
        if (k.contains("alpha")) s.alpha = number_at(k["alpha"], w + ".alpha");
        if (k.contains("beta")) s.beta = number_at(k["beta"], w + ".beta");
        if (k.contains("improved_alpha")) s.improved_alpha = number_at(k["improved_alpha"], w + ".improved_alpha");
        return s;
    }
    only_keys(j, {"family", "params"}, where);
    if (!j.contains("family") || !j["family"].is_string())
        throw config_error(where + ": expected {\"family\": ..., \"params\": {...}} or {\"slope_map\": {...}}");
    s.family = j["family"].get<std::string>();
    if (j.contains("params")) s.params = params_at(j["params"], where + ".params");
    // the appendix examples are slope-map potentials whichever way they are named
    if (s.family == "double_well" || s.family == "log_mixture") s.slope_map = true;
    return s;
}

inline PsiSpec parse_psi(const json& j, const std::string& where) {
    PsiSpec s;
    if (j.is_string()) {
        s.kind = j.get<std::string>();
        if (s.kind != "abs" && s.kind != "square") throw config_error(where + ": unknown psi '" + s.kind + "'");
        return s;
    }
    if (!j.is_object()) throw config_error(where + ": expected a string or an object");
    for (const char* kind : {"power", "call", "corridor"})
        if (j.contains(kind)) {
            only_keys(j, {kind}, where);
            s.kind = kind;
            s.params = {number_at(j[kind], where + "." + kind)};
            return s;
        }
    if (j.contains("affine")) {
        only_keys(j, {"affine"}, where);
        s.kind = "affine";
        s.params = numbers_at(j["affine"], where + ".affine");
        if (s.params.size() != 2) throw config_error(where + ".affine: expected [a, b] for a + b x");
        return s;
    }
    only_keys(j, {"atoms", "density_poly_coeffs", "value_at_zero", "slope_at_zero", "label"}, where);
    if (!j.contains("atoms") && !j.contains("density_poly_coeffs"))
        throw config_error(where + ": expected abs, square, power, call, corridor, affine or a psi'' measure");
    s.kind = "measure";
    s.params = {0.0, 0.0};
    if (j.contains("atoms")) {
        const json& a = j["atoms"];
        if (!a.is_array()) throw config_error(where + ".atoms: expected an array of [location, mass]");
        for (std::size_t i = 0; i < a.size(); ++i) {
            const auto pair = numbers_at(a[i], where + ".atoms[" + std::to_string(i) + "]");
            if (pair.size() != 2) throw config_error(where + ".atoms[" + std::to_string(i) + "]: expected [location, mass]");
            s.atoms.push_back({pair[0], pair[1]});
        }
    }
    if (j.contains("density_poly_coeffs"))
        s.density_poly_coeffs = numbers_at(j["density_poly_coeffs"], where + ".density_poly_coeffs");
    if (j.contains("value_at_zero")) s.params[0] = number_at(j["value_at_zero"], where + ".value_at_zero");
    if (j.contains("slope_at_zero")) s.params[1] = number_at(j["slope_at_zero"], where + ".slope_at_zero");
    if (j.contains("label")) {
        if (!j["label"].is_string()) throw config_error(where + ".label: expected a string");
        s.label = j["label"].get<std::string>();
    }
    return s;
}

} // namespace detail

/// Builds the test function; config_error on invalid parameters.
inline ConvexTest psi_from_spec(const PsiSpec& s) {
    try {
        if (s.kind == "abs") return psi_abs();
        if (s.kind == "square") return psi_square();
        if (s.kind == "power") return psi_power(s.params.at(0));
        if (s.kind == "call") return psi_call(s.params.at(0));
        if (s.kind == "corridor") return psi_corridor(s.params.at(0));
        if (s.kind == "affine") return psi_affine(s.params.at(0), s.params.at(1));
        if (s.kind == "measure")
            return psi_from_measure(s.atoms, s.density_poly_coeffs, s.params.at(0), s.params.at(1),
                                    s.label.empty() ? "measure" : s.label);
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("psi: ") + e.what());
    }
    throw config_error("psi: unknown kind '" + s.kind + "'");
}

/// Slope map of a slope-map entry, with any declared bound overrides applied.
inline SlopeMap slope_map_from_spec(const PotentialSpec& s) {
    if (!s.slope_map) throw config_error("potential '" + s.family + "' is not a slope map");
    SlopeMap k;
    try {
        using detail::param;
        if (s.family == "identity") k = identity_slope_map();
        else if (s.family == "scaled") k = scaled_slope_map(param(s.params, "c"));
        else if (s.family == "cubic" || s.family == "double_well") k = cubic_slope_map(param(s.params, "c", 1.0));
        else if (s.family == "log_mixture")
            k = log_mixture_slope_map(param(s.params, "p"), param(s.params, "q"), param(s.params, "a"),
                                      param(s.params, "b"));
        else if (s.family == "mixture") k = mixture_slope_map(s.atoms);
        else throw config_error("unknown slope-map family '" + s.family + "'");
    } catch (const std::invalid_argument& e) {
        throw config_error("slope map '" + s.family + "': " + e.what());
    }
    if (s.alpha) k.alpha = *s.alpha;
    if (s.beta) k.beta = *s.beta;
    if (s.improved_alpha) k.improved_alpha = *s.improved_alpha;
    if (!(k.alpha > 0.0)) throw config_error("slope map '" + s.family + "': alpha must be positive");
    if (k.beta && !(*k.beta >= k.alpha)) throw config_error("slope map '" + s.family + "': beta must be >= alpha");
    return k;
}

/// Gaussian-tilt potential of a theorem entry.
inline Potential potential_from_spec(const PotentialSpec& s) {
    if (s.slope_map) throw config_error("potential '" + s.family + "' is a slope map");
    try {
        return builtin_potential(s.family, s.params);
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("potential: ") + e.what());
    }
}

inline ExperimentConfig parse_config(const json& j) {
    if (!j.is_object()) throw config_error("config: expected a JSON object");
    detail::only_keys(j,
                      {"potentials", "A", "psis", "p_list", "n_paths", "n_steps", "seed", "quadrature_tol",
                       "output_dir", "sandwich_x"},
                      "config");
    ExperimentConfig c;
    if (j.contains("potentials")) {
        if (!j["potentials"].is_array()) throw config_error("potentials: expected an array");
        for (std::size_t i = 0; i < j["potentials"].size(); ++i)
            c.potentials.push_back(detail::parse_potential(j["potentials"][i], "potentials[" + std::to_string(i) + "]"));
    }
    if (j.contains("A")) c.A = detail::number_at(j["A"], "A");
    if (j.contains("psis")) {
        if (!j["psis"].is_array()) throw config_error("psis: expected an array");
        for (std::size_t i = 0; i < j["psis"].size(); ++i)
            c.psis.push_back(detail::parse_psi(j["psis"][i], "psis[" + std::to_string(i) + "]"));
    }
    if (j.contains("p_list")) c.p_list = detail::numbers_at(j["p_list"], "p_list");
    if (j.contains("n_paths")) c.n_paths = detail::unsigned_at(j["n_paths"], "n_paths");
    if (j.contains("n_steps")) {
        const auto n = detail::unsigned_at(j["n_steps"], "n_steps");
        if (n > (1u << 24)) throw config_error("n_steps: too large");
        c.n_steps = int(n);
    }
    if (j.contains("seed")) c.seed = detail::unsigned_at(j["seed"], "seed");
    if (j.contains("quadrature_tol")) c.quadrature_tol = detail::number_at(j["quadrature_tol"], "quadrature_tol");
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string()) throw config_error("output_dir: expected a string");
        c.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("sandwich_x")) c.sandwich_x = detail::numbers_at(j["sandwich_x"], "sandwich_x");
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot read config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Checks everything that does not need a built transport. `simulate` adds
/// the path-count requirement.
inline void validate_config(const ExperimentConfig& c, bool simulate) {
    if (c.potentials.empty()) throw config_error("config: no potentials (give \"potentials\" or --matrix default)");
    if (c.psis.empty()) throw config_error("config: no psis");
    if (!(c.A > 0.0)) throw config_error("A: must be positive");
    if (c.p_list.empty()) throw config_error("p_list: must not be empty");
    for (double p : c.p_list)
        if (!(p > 1.0)) throw config_error("p_list: every p must be > 1");
    if (simulate && c.n_paths < 1) throw config_error("n_paths: must be at least 1");
    if (simulate && c.n_steps < 16) throw config_error("n_steps: must be at least 16");
    if (!(c.quadrature_tol > 0.0 && c.quadrature_tol < 1e-3)) throw config_error("quadrature_tol: must lie in (0, 1e-3)");
    if (c.output_dir.empty()) throw config_error("output_dir: must not be empty");
    for (const auto& s : c.potentials) s.slope_map ? (void)slope_map_from_spec(s) : (void)potential_from_spec(s);
    for (const auto& s : c.psis) (void)psi_from_spec(s);
}

inline json to_json(const PotentialSpec& s) {
    json params = json::object();
    for (const auto& [k, v] : s.params) params[k] = v;
    if (!s.slope_map) return json{{"family", s.family}, {"params", params}};
    json k{{"family", s.family}, {"params", params}};
    if (!s.atoms.empty()) {
        json atoms = json::array();
        for (const auto& a : s.atoms) atoms.push_back({a.weight, a.kappa});
        k["atoms"] = atoms;
    }
    if (s.alpha) k["alpha"] = *s.alpha;
    if (s.beta) k["beta"] = *s.beta;
    if (s.improved_alpha) k["improved_alpha"] = *s.improved_alpha;
    return json{{"slope_map", k}};
}

inline json to_json(const PsiSpec& s) {
    if (s.kind == "abs" || s.kind == "square") return s.kind;
    if (s.kind == "affine") return json{{"affine", s.params}};
    if (s.kind != "measure") return json{{s.kind, s.params.at(0)}};
    json atoms = json::array();
    for (const auto& a : s.atoms) atoms.push_back({a.location, a.mass});
    json out{{"atoms", atoms}, {"density_poly_coeffs", s.density_poly_coeffs}, {"value_at_zero", s.params.at(0)},
             {"slope_at_zero", s.params.at(1)}};
    if (!s.label.empty()) out["label"] = s.label;
    return out;
}

inline json to_json(const ExperimentConfig& c) {
    json pots = json::array(), psis = json::array();
    for (const auto& s : c.potentials) pots.push_back(to_json(s));
    for (const auto& s : c.psis) psis.push_back(to_json(s));
    return json{{"potentials", pots},
                {"A", c.A},
                {"psis", psis},
                {"p_list", c.p_list},
                {"n_paths", c.n_paths},
                {"n_steps", c.n_steps},
                {"seed", c.seed},
                {"quadrature_tol", c.quadrature_tol},
                {"output_dir", c.output_dir},
                {"sandwich_x", c.sandwich_x}};
}

/// {zero, linear(1), quadratic(1), abs(1), double well, log-mixture} x
/// {|x|, x^2, |x|^3, (x-1)^+, corridor(1)}.
inline void apply_default_matrix(ExperimentConfig& c) {
    c.potentials = {{false, "zero", {}, {}, {}, {}, {}},
                    {false, "linear", {{"c", 1.0}}, {}, {}, {}, {}},
                    {false, "quadratic", {{"c", 1.0}}, {}, {}, {}, {}},
                    {false, "abs", {{"c", 1.0}}, {}, {}, {}, {}},
                    {true, "cubic", {{"c", 1.0}}, {}, {}, {}, {}},
                    {true, "log_mixture", {{"p", 0.5}, {"q", 0.5 * std::sqrt(2.0)}, {"a", 1.0}, {"b", 2.0}}, {}, {}, {}, {}}};
    c.psis = {{"abs", {}, {}, {}, ""},
              {"square", {}, {}, {}, ""},
              {"power", {3.0}, {}, {}, ""},
              {"call", {1.0}, {}, {}, ""},
              {"corridor", {1.0}, {}, {}, ""}};
}

} // namespace blembed
