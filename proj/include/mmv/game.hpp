#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "market_model.hpp"
#include "simulate.hpp"
#include "value_surface.hpp"
#include "vasicek_closed_form.hpp"

namespace mmv {

// ---------------------------------------------------------------------------
// Pointwise operator evaluator
// ---------------------------------------------------------------------------

// Full derivative bundle of the candidate value function V at one state.
// Under the linear ansatz V = H x + G y, the second derivatives in x and y
// vanish structurally; they are still carried so the operator below can spell
// out every term of its definition.
struct ValueDerivs {
    double v_t = 0.0, v_x = 0.0, v_y = 0.0, v_r = 0.0;
    double v_xx = 0.0, v_yy = 0.0, v_rr = 0.0;
    double v_xy = 0.0, v_xr = 0.0, v_yr = 0.0;
};

inline ValueDerivs ansatz_derivs(const SurfaceDerivs& d, const GameState& s) {
    ValueDerivs v;
    v.v_t = d.h_t * s.x + d.g_t * s.y;
    v.v_x = d.h;
    v.v_y = d.g;
    v.v_r = d.h_r * s.x + d.g_r * s.y;
    v.v_xx = 0.0;
    v.v_yy = 0.0;
    v.v_rr = d.h_rr * s.x + d.g_rr * s.y;
    v.v_xy = 0.0;
    v.v_xr = d.h_r;
    v.v_yr = d.g_r;
    return v;
}

// The controlled generator applied to V, written out term by term:
//   L^{pi,eta} V = V_t + (pi sigma (lambda + eta) + r x) V_x + eta^2 y V_y
//                + (mu_bar + sigma_bar eta) V_r
//                + 1/2 pi^2 sigma^2 V_xx + 1/2 eta^2 y^2 V_yy + 1/2 sigma_bar^2 V_rr
//                + pi sigma eta y V_xy + pi sigma sigma_bar V_xr + eta sigma_bar y V_yr.
// Used only for pointwise algebraic checks of the saddle conditions, never
// for solving.
inline double hjbi_operator(const ValueDerivs& v, const MarketModel& m, const GameState& s, double pi,
                            double eta) {
    const double sigma = m.sigma(s.t);
    const double lambda = m.lambda(s.r);
    const double mu = m.mu_bar(s.r);
    const double sb = m.sigma_bar(s.r);
    return v.v_t + (pi * sigma * (lambda + eta) + s.r * s.x) * v.v_x + eta * eta * s.y * v.v_y +
           (mu + sb * eta) * v.v_r + 0.5 * pi * pi * sigma * sigma * v.v_xx +
           0.5 * eta * eta * s.y * s.y * v.v_yy + 0.5 * sb * sb * v.v_rr +
           pi * sigma * eta * s.y * v.v_xy + pi * sigma * sb * v.v_xr + eta * sb * s.y * v.v_yr;
}

// First-order conditions of the pointwise min-max, differentiated analytically.
inline double hjbi_foc_eta(const ValueDerivs& v, const MarketModel& m, const GameState& s, double pi,
                           double eta) {
    const double sigma = m.sigma(s.t);
    const double sb = m.sigma_bar(s.r);
    return pi * sigma * v.v_x + 2.0 * eta * s.y * v.v_y + sb * v.v_r + eta * s.y * s.y * v.v_yy +
           pi * sigma * s.y * v.v_xy + sb * s.y * v.v_yr;
}

inline double hjbi_foc_pi(const ValueDerivs& v, const MarketModel& m, const GameState& s, double pi,
                          double eta) {
    const double sigma = m.sigma(s.t);
    const double lambda = m.lambda(s.r);
    const double sb = m.sigma_bar(s.r);
    return sigma * (lambda + eta) * v.v_x + pi * sigma * sigma * v.v_xx + sigma * eta * s.y * v.v_xy +
           sigma * sb * v.v_xr;
}

// ---------------------------------------------------------------------------
// Saddle assembly
// ---------------------------------------------------------------------------

// Everything needed to run and check the game at a fixed initial state.  c0
// is the conserved combination 2 G(r0,t0) y0 + H(r0,t0) x0 that the pathwise
// identity and the observable strategy are built on.
struct SaddleSpec {
    ValueSurface surface;
    MarketModel model;
    GameState init;
    double c0 = 0.0;
};

inline SaddleSpec make_saddle_spec(ValueSurface surface, MarketModel model, GameState init) {
    SaddleSpec spec;
    spec.c0 = 2.0 * surface.g(init.r, init.t) * init.y + surface.h(init.r, init.t) * init.x;
    spec.surface = std::move(surface);
    spec.model = std::move(model);
    spec.init = init;
    return spec;
}

inline StrategyField saddle_strategy(const SaddleSpec& spec) {
    ValueSurface surface = spec.surface;
    MarketModel model = spec.model;
    return StrategyField{[surface, model](const GameState& s) { return pi_star(s, surface, model); },
                         "saddle"};
}

inline AdversaryField saddle_adversary(const SaddleSpec& spec) {
    ValueSurface surface = spec.surface;
    MarketModel model = spec.model;
    return AdversaryField{[surface, model](double r, double t) { return eta_star(r, t, surface, model); },
                          "saddle"};
}

inline StrategyField scaled_strategy(const SaddleSpec& spec, double scale) {
    ValueSurface surface = spec.surface;
    MarketModel model = spec.model;
    char buf[32];
    std::snprintf(buf, sizeof buf, "scale=%g", scale);
    return StrategyField{
        [surface, model, scale](const GameState& s) { return scale * pi_star(s, surface, model); }, buf};
}

inline AdversaryField shifted_adversary(const SaddleSpec& spec, double shift) {
    ValueSurface surface = spec.surface;
    MarketModel model = spec.model;
    char buf[32];
    std::snprintf(buf, sizeof buf, "shift=%g", shift);
    return AdversaryField{[surface, model, shift](double r, double t) {
                              return eta_star(r, t, surface, model) + shift;
                          },
                          buf};
}

inline StrategyField zero_strategy() {
    return StrategyField{[](const GameState&) { return 0.0; }, "zero"};
}

inline AdversaryField zero_adversary() {
    return AdversaryField{[](double, double) { return 0.0; }, "zero"};
}

// The saddle investment rewritten without the unobservable density state:
// substituting 2 y G = c0 - H x (the conserved identity) into pi* gives
//   pi_hat*(x, r, t) = [c0 - H x] [ (lambda/sigma)(1/H)
//                      + (sigma_bar/sigma)(H_r/H^2 - G_r/(G H)) ]
//                      - x (sigma_bar/sigma)(H_r/H),
// a feedback rule in the observable pair (x, r) only.  The y component of
// the state argument is deliberately never read.
inline StrategyField observable_strategy(const SaddleSpec& spec) {
    ValueSurface surface = spec.surface;
    MarketModel model = spec.model;
    const double c0 = spec.c0;
    auto pi = [surface, model, c0](const GameState& s) {
        double sigma = model.sigma(s.t);
        double h = surface.h(s.r, s.t);
        double g = surface.g(s.r, s.t);
        double h_r = surface.h_r(s.r, s.t);
        double g_r = surface.g_r(s.r, s.t);
        double lambda = model.lambda(s.r);
        double sb = model.sigma_bar(s.r);
        double bracket = (lambda / sigma) / h + (sb / sigma) * (h_r / (h * h) - g_r / (g * h));
        return (c0 - h * s.x) * bracket - s.x * (sb / sigma) * (h_r / h);
    };
    return StrategyField{pi, "observable"};
}

// ---------------------------------------------------------------------------
// Pathwise reduction identity
// ---------------------------------------------------------------------------

// Deviation of the conserved combination along simulated saddle paths:
//   D_t = 2 G(r_t, t) Y_t + H(r_t, t) X_t - c0,
// which vanishes identically in the continuous-time game and shrinks with
// the step size for the discretized paths.
struct ReductionReport {
    double max_abs = 0.0;           // over all paths and stored steps
    double terminal_max_abs = 0.0;  // over terminal states only
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
};

inline ReductionReport check_reduction_identity(const PathBundle& paths, const SaddleSpec& spec) {
    if (paths.strategy_source != "saddle" || paths.eta_source != "saddle")
        throw std::invalid_argument("check_reduction_identity: bundle was not generated at the saddle");
    if (paths.measure != Measure::p)
        throw std::invalid_argument("check_reduction_identity: bundle must be simulated under P");
    if (!paths.full_storage())
        throw std::invalid_argument("check_reduction_identity: needs full path storage");
    ReductionReport rep;
    rep.n_paths = paths.n_paths();
    rep.n_steps = paths.n_columns() - 1;
    const std::size_t last = paths.n_columns() - 1;
    for (std::size_t i = 0; i < paths.n_paths(); ++i) {
        for (std::size_t k = 0; k <= last; ++k) {
            double t = paths.times[k];
            double r = paths.r(i, k);
            double d = 2.0 * spec.surface.g(r, t) * paths.y(i, k) + spec.surface.h(r, t) * paths.x(i, k) -
                       spec.c0;
            double a = std::abs(d);
            if (a > rep.max_abs) rep.max_abs = a;
            if (k == last && a > rep.terminal_max_abs) rep.terminal_max_abs = a;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Saddle inequality verification
// ---------------------------------------------------------------------------

struct Perturbations {
    std::vector<double> eta_shifts{-0.3, -0.1, 0.1, 0.3};
    std::vector<double> pi_scales{0.5, 1.5, 2.0};
};

struct SaddleVerdict {
    enum class Outcome { pass, fail, inconclusive };
    std::string description;
    double perturbation = 0.0;
    Estimate j;         // objective under the perturbed control
    Estimate diff;      // common-random-number paired J_perturbed - J_star
    double margin = 0.0;  // signed distance into the allowed region, in objective units
    Outcome outcome = Outcome::inconclusive;

    const char* outcome_name() const {
        switch (outcome) {
            case Outcome::pass: return "pass";
            case Outcome::fail: return "fail";
            default: return "inconclusive";
        }
    }
};

struct GameReport {
    Estimate j_star;
    double value_surface = 0.0;  // H x0 + G y0 at the initial state
    double value_gap_se = 0.0;   // |j_star - value_surface| in SE units
    std::vector<SaddleVerdict> eta_verdicts;
    std::vector<SaddleVerdict> pi_verdicts;

    bool all_pass() const {
        for (const auto& v : eta_verdicts)
            if (v.outcome != SaddleVerdict::Outcome::pass) return false;
        for (const auto& v : pi_verdicts)
            if (v.outcome != SaddleVerdict::Outcome::pass) return false;
        return true;
    }
    bool any_inconclusive() const {
        for (const auto& v : eta_verdicts)
            if (v.outcome == SaddleVerdict::Outcome::inconclusive) return true;
        for (const auto& v : pi_verdicts)
            if (v.outcome == SaddleVerdict::Outcome::inconclusive) return true;
        return false;
    }
};

namespace detail {

// A paired inequality test is only meaningful if its confidence band is
// narrow relative to the objective scale; otherwise "within 3 SE" would pass
// vacuously and the verdict must be "inconclusive" instead.  The budget is
// 2% of |J*| (with a tiny absolute floor for J* near zero).
inline double resolution_budget(double j_star) { return 0.02 * std::abs(j_star) + 1e-9; }

inline SaddleVerdict judge(std::string description, double perturbation, const Estimate& j,
                           const Estimate& diff, double j_star, bool upper_bound) {
    SaddleVerdict v;
    v.description = std::move(description);
    v.perturbation = perturbation;
    v.j = j;
    v.diff = diff;
    const double band = 3.0 * diff.se;
    const bool resolvable = band <= resolution_budget(j_star);
    if (upper_bound) {
        // claim: J_perturbed <= J_star (up to noise), i.e. diff <= band
        v.margin = band - diff.value;
        if (diff.value > band)
            v.outcome = SaddleVerdict::Outcome::fail;
        else
            v.outcome = resolvable ? SaddleVerdict::Outcome::pass : SaddleVerdict::Outcome::inconclusive;
    } else {
        // claim: J_perturbed >= J_star (up to noise), i.e. diff >= -band
        v.margin = diff.value + band;
        if (diff.value < -band)
            v.outcome = SaddleVerdict::Outcome::fail;
        else
            v.outcome = resolvable ? SaddleVerdict::Outcome::pass : SaddleVerdict::Outcome::inconclusive;
    }
    return v;
}

}  // namespace detail

// Estimates J at the saddle and under each perturbation with common random
// numbers, then checks the two-sided saddle property:
//   J^{pi*, eta*+delta} <= J^{pi*, eta*}   for every eta-shift delta,
//   J^{c pi*, eta*}    >= J^{pi*, eta*}   for every pi-scaling c.
// Each verdict carries the paired SE; estimates too noisy to resolve the
// inequality are reported as inconclusive rather than passing.
inline GameReport verify_saddle(const SaddleSpec& spec, const Perturbations& perturbations,
                                const McConfig& cfg) {
    if (perturbations.eta_shifts.empty() || perturbations.pi_scales.empty())
        throw std::invalid_argument("verify_saddle: need at least one eta-shift and one pi-scaling");

    GameReport report;
    StrategyField pi_saddle = saddle_strategy(spec);
    AdversaryField eta_saddle = saddle_adversary(spec);
    PathBundle star = simulate(spec.model, pi_saddle, eta_saddle, spec.init, cfg, Measure::q_eta);
    report.j_star = estimate_objective(star, ObjectiveMethod::direct);
    report.value_surface = value_function(spec.init, spec.surface);
    report.value_gap_se = (report.j_star.se > 0.0)
                              ? std::abs(report.j_star.value - report.value_surface) / report.j_star.se
                              : 0.0;

    for (double shift : perturbations.eta_shifts) {
        char desc[48];
        std::snprintf(desc, sizeof desc, "eta shift %+g", shift);
        PathBundle pert =
            simulate(spec.model, pi_saddle, shifted_adversary(spec, shift), spec.init, cfg, Measure::q_eta);
        Estimate j = estimate_objective(pert, ObjectiveMethod::direct);
        Estimate diff = paired_difference(pert, star);
        report.eta_verdicts.push_back(
            detail::judge(desc, shift, j, diff, report.j_star.value, /*upper_bound=*/true));
    }
    for (double scale : perturbations.pi_scales) {
        char desc[48];
        std::snprintf(desc, sizeof desc, "pi scale %g", scale);
        PathBundle pert =
            simulate(spec.model, scaled_strategy(spec, scale), eta_saddle, spec.init, cfg, Measure::q_eta);
        Estimate j = estimate_objective(pert, ObjectiveMethod::direct);
        Estimate diff = paired_difference(pert, star);
        report.pi_verdicts.push_back(
            detail::judge(desc, scale, j, diff, report.j_star.value, /*upper_bound=*/false));
    }
    return report;
}

}  // namespace mmv
