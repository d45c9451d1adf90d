// Command-line front end: portfolio-game experiments with a mean-reverting
// short rate.  Subcommands cover the closed-form tables, the
// finite-difference solve of the reduced equations, Monte Carlo simulation
// of the controlled system, saddle-point verification, and the
// PDE-vs-path-integral cross-check.
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure,
// 3 inconclusive verification.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mmv/config.hpp"
#include "mmv/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"monotone mean-variance portfolio game under a stochastic short rate"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "config file (JSON)");
    app.add_option("--out", out_dir, "output directory (default from config, else 'out')");
    auto* seed_opt = app.add_option("--seed", seed, "master seed for random experiments");

    auto* cmd_closed = app.add_subcommand("closed-form", "tabulate B1, A1, A2, H, G over time");
    auto* cmd_pde = app.add_subcommand("pde", "solve the reduced equations on a grid");
    auto* cmd_sim = app.add_subcommand("simulate", "simulate the controlled system");
    auto* cmd_verify = app.add_subcommand("verify", "check the saddle inequalities by simulation");
    auto* cmd_fk = app.add_subcommand("fk-compare", "compare grid solutions with path-integral estimates");
    // let --config/--out/--seed be written after the subcommand as well
    for (CLI::App* sub : {cmd_closed, cmd_pde, cmd_sim, cmd_verify, cmd_fk}) sub->fallthrough();

    double r_min = 0, r_max = 0, theta = 0.5;
    int nr = 0, nt = 0;
    std::string boundary;
    auto* o_rmin = cmd_pde->add_option("--r-min", r_min, "left edge of the rate grid");
    auto* o_rmax = cmd_pde->add_option("--r-max", r_max, "right edge of the rate grid");
    auto* o_nr = cmd_pde->add_option("--nr", nr, "spatial nodes");
    auto* o_nt = cmd_pde->add_option("--nt", nt, "time steps");
    auto* o_theta = cmd_pde->add_option("--theta", theta, "implicitness weight (0.5 = trapezoidal)");
    auto* o_boundary = cmd_pde->add_option("--boundary", boundary,
                                           "boundary treatment: linearity | dirichlet-closed-form");

    std::int64_t paths = 0;
    double dt = 0;
    std::string measure, strategy, eta;
    auto* o_paths = cmd_sim->add_option("--paths", paths, "number of Monte Carlo paths");
    auto* o_dt = cmd_sim->add_option("--dt", dt, "time step (years)");
    auto* o_measure = cmd_sim->add_option("--measure", measure, "sampling measure: p | q-eta");
    auto* o_strategy =
        cmd_sim->add_option("--strategy", strategy, "investment rule: saddle | observable | zero | custom");
    double pi_scale = 1.0;
    auto* o_pi_scale = cmd_sim->add_option("--pi-scale", pi_scale, "scaling for --strategy custom");
    auto* o_eta = cmd_sim->add_option("--eta", eta, "adversary: saddle | zero | shift=<v>");

    std::vector<double> eta_shifts, pi_scales;
    std::int64_t v_paths = 0;
    double v_dt = 0;
    auto* o_eta_shifts =
        cmd_verify->add_option("--eta-shifts", eta_shifts, "constant shifts added to the saddle adversary");
    auto* o_pi_scales =
        cmd_verify->add_option("--pi-scales", pi_scales, "multiplicative scalings of the saddle strategy");
    auto* o_v_paths = cmd_verify->add_option("--paths", v_paths, "number of Monte Carlo paths");
    auto* o_v_dt = cmd_verify->add_option("--dt", v_dt, "time step (years)");

    std::int64_t f_paths = 0;
    double f_dt = 0;
    auto* o_f_paths = cmd_fk->add_option("--paths", f_paths, "number of Monte Carlo paths");
    auto* o_f_dt = cmd_fk->add_option("--dt", f_dt, "time step (years)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints the help text or the parse error
        return code == 0 ? 0 : mmv::kExitValidation;
    }

    try {
        mmv::ExperimentConfig cfg =
            config_path.empty() ? mmv::default_config() : mmv::load_config(config_path);

        if (cmd_closed->parsed()) cfg.kind = mmv::ExperimentKind::closed_form;
        if (cmd_pde->parsed()) cfg.kind = mmv::ExperimentKind::pde;
        if (cmd_sim->parsed()) cfg.kind = mmv::ExperimentKind::simulate;
        if (cmd_verify->parsed()) cfg.kind = mmv::ExperimentKind::verify;
        if (cmd_fk->parsed()) cfg.kind = mmv::ExperimentKind::fk_compare;

        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed_opt->count()) {
            cfg.mc.seed = seed;
            cfg.seed_given = true;
        }

        if (o_rmin->count() != o_rmax->count())
            throw std::invalid_argument("--r-min and --r-max must be given together");
        if (o_rmin->count()) {
            cfg.grid.r_min = r_min;
            cfg.grid.r_max = r_max;
            cfg.grid_range_given = true;
        }
        if (o_nr->count()) cfg.grid.n_r = nr;
        if (o_nt->count()) cfg.grid.n_t = nt;
        if (o_theta->count()) cfg.grid.theta = theta;
        if (o_boundary->count()) {
            if (boundary == "linearity")
                cfg.grid.boundary = mmv::BoundaryKind::linearity;
            else if (boundary == "dirichlet-closed-form")
                cfg.grid.boundary = mmv::BoundaryKind::dirichlet_closed_form;
            else
                throw std::invalid_argument("--boundary must be 'linearity' or 'dirichlet-closed-form'");
        }
        cfg.grid.validate();

        if (o_paths->count()) cfg.mc.n_paths = paths;
        if (o_dt->count()) cfg.mc.dt = dt;
        if (o_v_paths->count()) cfg.mc.n_paths = v_paths;
        if (o_v_dt->count()) cfg.mc.dt = v_dt;
        if (o_f_paths->count()) cfg.mc.n_paths = f_paths;
        if (o_f_dt->count()) cfg.mc.dt = f_dt;
        cfg.mc.validate();

        if (o_measure->count()) {
            if (measure == "p")
                cfg.sim.measure = mmv::Measure::p;
            else if (measure == "q-eta")
                cfg.sim.measure = mmv::Measure::q_eta;
            else
                throw std::invalid_argument("--measure must be 'p' or 'q-eta'");
        }
        if (o_strategy->count()) cfg.sim.strategy = strategy;
        if (o_pi_scale->count()) cfg.sim.pi_scale = pi_scale;
        if (o_eta->count()) cfg.sim.eta = eta;
        if (o_eta_shifts->count()) cfg.verify.eta_shifts = eta_shifts;
        if (o_pi_scales->count()) cfg.verify.pi_scales = pi_scales;

        return mmv::run(cfg);
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return mmv::kExitValidation;
    } catch (const std::domain_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return mmv::kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return mmv::kExitNumerical;
    }
}
