#pragma once

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "game.hpp"
#include "market_model.hpp"
#include "pde.hpp"
#include "simulate.hpp"

namespace mmv {

using nlohmann::json;

enum class ExperimentKind { closed_form, pde, simulate, verify, fk_compare };

inline const char* kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::closed_form: return "closed-form";
        case ExperimentKind::pde: return "pde";
        case ExperimentKind::simulate: return "simulate";
        case ExperimentKind::verify: return "verify";
        default: return "fk-compare";
    }
}

inline ExperimentKind kind_from_name(const std::string& s) {
    if (s == "closed-form") return ExperimentKind::closed_form;
    if (s == "pde") return ExperimentKind::pde;
    if (s == "simulate") return ExperimentKind::simulate;
    if (s == "verify") return ExperimentKind::verify;
    if (s == "fk-compare") return ExperimentKind::fk_compare;
    throw std::invalid_argument("kind must be one of closed-form|pde|simulate|verify|fk-compare, got '" +
                                s + "'");
}

struct SimulateOptions {
    Measure measure = Measure::q_eta;
    std::string strategy = "saddle";  // saddle | observable | zero | custom
    double pi_scale = 1.0;            // used when strategy = custom (scaled saddle)
    std::string eta = "saddle";       // saddle | zero | shift=<v>
    StorageMode storage = StorageMode::terminal_only;
};

struct VerifyOptions {
    std::vector<double> eta_shifts{-0.3, -0.1, 0.1, 0.3};
    std::vector<double> pi_scales{0.5, 1.5, 2.0};
};

struct ProbeOptions {
    std::vector<double> rs;  // empty -> defaults around the stationary mean
    std::vector<double> ts;
};

// One experiment, fully resolved: model parameters, initial state, grid and
// Monte Carlo settings, and the options of the selected experiment kind.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::verify;
    VasicekParams params;
    double horizon = 1.0;
    GameState init{1.0, 1.0, 0.03, 0.0};
    PdeGrid grid;
    bool grid_range_given = false;
    McConfig mc;
    bool seed_given = false;
    SimulateOptions sim;
    VerifyOptions verify;
    ProbeOptions probes;
    std::string out_dir = "out";

    double stationary_mean() const { return params.theta_bar / params.alpha; }
    double stationary_sd() const { return params.sigma_bar / std::sqrt(2.0 * params.alpha); }

    MarketModel model() const { return vasicek_to_model(params, horizon); }
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                                const std::string& section) {
    std::string unknown;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) unknown += (unknown.empty() ? "" : ", ") + section + it.key();
    if (!unknown.empty()) throw std::invalid_argument("unknown config keys: " + unknown);
}

inline double require_number(const json& j, const std::string& key, const std::string& section) {
    if (!j.contains(key)) throw std::invalid_argument("missing config key: " + section + key);
    if (!j[key].is_number()) throw std::invalid_argument(section + key + " must be a number");
    return j[key].get<double>();
}

}  // namespace detail

// Parses and validates a config document.  Unknown keys anywhere are errors
// (listed by name), as are invalid parameter values; error messages name the
// offending field.
inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    detail::reject_unknown_keys(
        j, {"kind", "model", "init", "grid", "mc", "simulate", "verify", "probes", "out_dir"}, "");

    if (!j.contains("kind")) throw std::invalid_argument("missing config key: kind");
    cfg.kind = kind_from_name(j["kind"].get<std::string>());
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();

    if (!j.contains("model")) throw std::invalid_argument("missing config section: model");
    {
        const json& m = j["model"];
        detail::reject_unknown_keys(m, {"lambda", "sigma", "theta_bar", "alpha", "sigma_bar", "horizon"},
                                    "model.");
        cfg.params.lambda = detail::require_number(m, "lambda", "model.");
        cfg.params.theta_bar = detail::require_number(m, "theta_bar", "model.");
        cfg.params.alpha = detail::require_number(m, "alpha", "model.");
        cfg.params.sigma_bar = detail::require_number(m, "sigma_bar", "model.");
        cfg.horizon = detail::require_number(m, "horizon", "model.");
        if (!(cfg.params.alpha > 0.0)) throw std::invalid_argument("model.alpha must be positive");
        if (cfg.params.sigma_bar < 0.0) throw std::invalid_argument("model.sigma_bar must be non-negative");
        if (!(cfg.horizon > 0.0)) throw std::invalid_argument("model.horizon must be positive");
        if (!m.contains("sigma")) throw std::invalid_argument("missing config key: model.sigma");
        if (m["sigma"].is_number()) {
            double s = m["sigma"].get<double>();
            if (!(s > 0.0)) throw std::invalid_argument("model.sigma must be positive");
            cfg.params.sigma_t = SigmaCurve(s);
        } else if (m["sigma"].is_array()) {
            std::vector<double> ts, vs;
            for (const auto& pair : m["sigma"]) {
                if (!pair.is_array() || pair.size() != 2)
                    throw std::invalid_argument("model.sigma table entries must be [t, sigma] pairs");
                ts.push_back(pair[0].get<double>());
                vs.push_back(pair[1].get<double>());
            }
            try {
                cfg.params.sigma_t = SigmaCurve(ts, vs);
            } catch (const std::invalid_argument& e) {
                throw std::invalid_argument(std::string("model.sigma: ") + e.what());
            }
        } else {
            throw std::invalid_argument("model.sigma must be a number or a [t, sigma] table");
        }
    }

    if (j.contains("init")) {
        const json& in = j["init"];
        detail::reject_unknown_keys(in, {"x0", "y0", "r0", "t0"}, "init.");
        if (in.contains("x0")) cfg.init.x = in["x0"].get<double>();
        if (in.contains("y0")) cfg.init.y = in["y0"].get<double>();
        if (in.contains("r0")) cfg.init.r = in["r0"].get<double>();
        if (in.contains("t0")) cfg.init.t = in["t0"].get<double>();
        if (!(cfg.init.y > 0.0)) throw std::invalid_argument("init.y0 must be positive");
        if (cfg.init.t < 0.0 || cfg.init.t >= cfg.horizon)
            throw std::invalid_argument("init.t0 must lie in [0, horizon)");
    }

    if (j.contains("grid")) {
        const json& g = j["grid"];
        detail::reject_unknown_keys(g, {"r_min", "r_max", "n_r", "n_t", "theta", "boundary", "upwind"},
                                    "grid.");
        if (g.contains("r_min") != g.contains("r_max"))
            throw std::invalid_argument("grid.r_min and grid.r_max must be given together");
        if (g.contains("r_min")) {
            cfg.grid.r_min = g["r_min"].get<double>();
            cfg.grid.r_max = g["r_max"].get<double>();
            cfg.grid_range_given = true;
        }
        if (g.contains("n_r")) cfg.grid.n_r = g["n_r"].get<int>();
        if (g.contains("n_t")) cfg.grid.n_t = g["n_t"].get<int>();
        if (g.contains("theta")) cfg.grid.theta = g["theta"].get<double>();
        if (g.contains("upwind")) cfg.grid.upwind = g["upwind"].get<bool>();
        if (g.contains("boundary")) {
            std::string b = g["boundary"].get<std::string>();
            if (b == "linearity")
                cfg.grid.boundary = BoundaryKind::linearity;
            else if (b == "dirichlet-closed-form")
                cfg.grid.boundary = BoundaryKind::dirichlet_closed_form;
            else
                throw std::invalid_argument(
                    "grid.boundary must be 'linearity' or 'dirichlet-closed-form', got '" + b + "'");
        }
    }
    if (!cfg.grid_range_given) {
        if (cfg.params.sigma_bar > 0.0) {
            // default truncation: six stationary standard deviations around
            // the stationary mean of the rate
            double m = cfg.stationary_mean(), s = cfg.stationary_sd();
            cfg.grid.r_min = m - 6.0 * s;
            cfg.grid.r_max = m + 6.0 * s;
        } else {
            cfg.grid.r_min = cfg.init.r - 0.5;
            cfg.grid.r_max = cfg.init.r + 0.5;
        }
    }

    if (j.contains("mc")) {
        const json& m = j["mc"];
        detail::reject_unknown_keys(m, {"paths", "dt", "seed", "antithetic", "storage"}, "mc.");
        if (m.contains("paths")) cfg.mc.n_paths = m["paths"].get<std::int64_t>();
        if (m.contains("dt")) cfg.mc.dt = m["dt"].get<double>();
        if (m.contains("antithetic")) cfg.mc.antithetic = m["antithetic"].get<bool>();
        if (m.contains("storage")) {
            std::string s = m["storage"].get<std::string>();
            if (s == "full")
                cfg.mc.storage = StorageMode::full;
            else if (s == "terminal-only")
                cfg.mc.storage = StorageMode::terminal_only;
            else
                throw std::invalid_argument("mc.storage must be 'full' or 'terminal-only'");
        }
        if (m.contains("seed")) {
            cfg.mc.seed = m["seed"].get<std::uint64_t>();
            cfg.seed_given = true;
        }
    }

    if (j.contains("simulate")) {
        const json& s = j["simulate"];
        detail::reject_unknown_keys(s, {"measure", "strategy", "pi_scale", "eta", "storage"}, "simulate.");
        if (s.contains("measure")) {
            std::string ms = s["measure"].get<std::string>();
            if (ms == "p")
                cfg.sim.measure = Measure::p;
            else if (ms == "q-eta")
                cfg.sim.measure = Measure::q_eta;
            else
                throw std::invalid_argument("simulate.measure must be 'p' or 'q-eta'");
        }
        if (s.contains("strategy")) cfg.sim.strategy = s["strategy"].get<std::string>();
        if (s.contains("pi_scale")) cfg.sim.pi_scale = s["pi_scale"].get<double>();
        if (s.contains("eta")) cfg.sim.eta = s["eta"].get<std::string>();
        if (s.contains("storage")) {
            std::string st = s["storage"].get<std::string>();
            cfg.sim.storage = (st == "full") ? StorageMode::full : StorageMode::terminal_only;
        }
    }

    if (j.contains("verify")) {
        const json& v = j["verify"];
        detail::reject_unknown_keys(v, {"eta_shifts", "pi_scales"}, "verify.");
        if (v.contains("eta_shifts")) cfg.verify.eta_shifts = v["eta_shifts"].get<std::vector<double>>();
        if (v.contains("pi_scales")) cfg.verify.pi_scales = v["pi_scales"].get<std::vector<double>>();
    }

    if (j.contains("probes")) {
        const json& p = j["probes"];
        detail::reject_unknown_keys(p, {"rs", "ts"}, "probes.");
        if (p.contains("rs")) cfg.probes.rs = p["rs"].get<std::vector<double>>();
        if (p.contains("ts")) cfg.probes.ts = p["ts"].get<std::vector<double>>();
    }

    cfg.grid.validate();
    try {
        cfg.mc.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("mc: ") + e.what());
    }

    return cfg;
}

// Enforced at run time, after any command-line seed override has been
// applied: experiments that draw random numbers must carry an explicit seed
// (there is no wall-clock fallback).
inline void require_seed(const ExperimentConfig& cfg) {
    const bool needs_seed = cfg.kind == ExperimentKind::simulate || cfg.kind == ExperimentKind::verify ||
                            cfg.kind == ExperimentKind::fk_compare;
    if (needs_seed && !cfg.seed_given)
        throw std::invalid_argument(
            "mc.seed is required (seeds are never defaulted from the clock); set it in the config or "
            "with --seed");
}

// Built-in example parameter set (used by the command line when no config
// file is supplied): mean-reverting rate around 2% with one-year horizon.
// No seed is set; random experiments still demand one explicitly.
inline ExperimentConfig default_config() {
    json j{{"kind", "verify"},
           {"model",
            {{"lambda", 0.2},
             {"sigma", 0.3},
             {"theta_bar", 0.02},
             {"alpha", 1.0},
             {"sigma_bar", 0.1},
             {"horizon", 1.0}}},
           {"init", {{"x0", 1.0}, {"y0", 1.0}, {"r0", 0.03}, {"t0", 0.0}}}};
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

// Fully-resolved echo of the configuration (defaults filled in); this is what
// the run manifest stores, and feeding it back through parse_config
// reproduces the identical experiment.
inline json config_to_json(const ExperimentConfig& cfg) {
    json m{{"lambda", cfg.params.lambda},
           {"theta_bar", cfg.params.theta_bar},
           {"alpha", cfg.params.alpha},
           {"sigma_bar", cfg.params.sigma_bar},
           {"horizon", cfg.horizon}};
    if (cfg.params.sigma_t.is_constant()) {
        m["sigma"] = cfg.params.sigma_t.constant_value();
    } else {
        json table = json::array();
        for (std::size_t i = 0; i < cfg.params.sigma_t.times().size(); ++i)
            table.push_back({cfg.params.sigma_t.times()[i], cfg.params.sigma_t.values()[i]});
        m["sigma"] = table;
    }
    json j{{"kind", kind_name(cfg.kind)},
           {"out_dir", cfg.out_dir},
           {"model", m},
           {"init", {{"x0", cfg.init.x}, {"y0", cfg.init.y}, {"r0", cfg.init.r}, {"t0", cfg.init.t}}},
           {"grid",
            {{"r_min", cfg.grid.r_min},
             {"r_max", cfg.grid.r_max},
             {"n_r", cfg.grid.n_r},
             {"n_t", cfg.grid.n_t},
             {"theta", cfg.grid.theta},
             {"boundary",
              cfg.grid.boundary == BoundaryKind::linearity ? "linearity" : "dirichlet-closed-form"},
             {"upwind", cfg.grid.upwind}}},
           {"mc",
            {{"paths", cfg.mc.n_paths},
             {"dt", cfg.mc.dt},
             {"seed", cfg.mc.seed},
             {"antithetic", cfg.mc.antithetic},
             {"storage", cfg.mc.storage == StorageMode::full ? "full" : "terminal-only"}}},
           {"simulate",
            {{"measure", cfg.sim.measure == Measure::p ? "p" : "q-eta"},
             {"strategy", cfg.sim.strategy},
             {"pi_scale", cfg.sim.pi_scale},
             {"eta", cfg.sim.eta},
             {"storage", cfg.sim.storage == StorageMode::full ? "full" : "terminal-only"}}},
           {"verify", {{"eta_shifts", cfg.verify.eta_shifts}, {"pi_scales", cfg.verify.pi_scales}}}};
    if (!cfg.probes.rs.empty() || !cfg.probes.ts.empty())
        j["probes"] = {{"rs", cfg.probes.rs}, {"ts", cfg.probes.ts}};
    return j;
}

}  // namespace mmv
