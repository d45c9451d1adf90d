#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mmv/market_model.hpp"
#include "mmv/pde.hpp"
#include "mmv/simulate.hpp"
#include "mmv/vasicek_closed_form.hpp"

using namespace mmv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

VasicekParams default_params() {
    VasicekParams p;
    p.lambda = 0.2;
    p.sigma_t = SigmaCurve(0.3);
    p.theta_bar = 0.02;
    p.alpha = 1.0;
    p.sigma_bar = 0.1;
    return p;
}

MarketModel default_model() { return vasicek_to_model(default_params(), 1.0); }

StrategyField constant_strategy(double level) {
    return StrategyField{[level](const GameState&) { return level; }, "constant"};
}

AdversaryField constant_adversary(double level) {
    return AdversaryField{[level](double, double) { return level; }, "constant"};
}

McConfig small_config(std::int64_t n_paths, double dt, std::uint64_t seed,
                      StorageMode storage = StorageMode::terminal_only) {
    McConfig cfg;
    cfg.n_paths = n_paths;
    cfg.dt = dt;
    cfg.seed = seed;
    cfg.antithetic = true;
    cfg.storage = storage;
    return cfg;
}

}  // namespace

TEST_CASE("simulation configuration is validated") {
    McConfig cfg;
    cfg.n_paths = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.n_paths = 7;  // odd with antithetic pairing
    cfg.antithetic = true;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.n_paths = 8;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.dt = 0.01;
    CHECK_NOTHROW(cfg.validate());

    MarketModel m = default_model();
    GameState init{1.0, 1.0, 0.03, 0.0};
    SECTION("bad initial states and empty fields are refused") {
        McConfig ok = small_config(4, 0.1, 1);
        GameState bad_y{1.0, 0.0, 0.03, 0.0};
        CHECK_THROWS_AS(simulate(m, constant_strategy(0.0), constant_adversary(0.0), bad_y, ok, Measure::p),
                        std::invalid_argument);
        GameState late{1.0, 1.0, 0.03, 1.0};
        CHECK_THROWS_AS(simulate(m, constant_strategy(0.0), constant_adversary(0.0), late, ok, Measure::p),
                        std::invalid_argument);
        StrategyField empty;
        CHECK_THROWS_AS(simulate(m, empty, constant_adversary(0.0), init, ok, Measure::p),
                        std::invalid_argument);
    }
}

TEST_CASE("all three states are driven by one shared Brownian increment") {
    MarketModel m = default_model();
    GameState init{1.0, 1.0, 0.03, 0.0};
    McConfig cfg = small_config(2, 0.1, 99, StorageMode::full);
    cfg.antithetic = false;
    PathBundle paths =
        simulate(m, constant_strategy(1.0), constant_adversary(0.4), init, cfg, Measure::p);

    double sigma = 0.3, lambda = 0.2, sigma_bar = 0.1, eta = 0.4;
    double dt = paths.dt, sqdt = std::sqrt(dt);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t k = 0; k + 1 < paths.n_columns(); ++k) {
            double xk = paths.x(i, k), rk = paths.r(i, k), yk = paths.y(i, k);
            // invert each Euler update for the Gaussian draw it consumed
            double z_from_x = (paths.x(i, k + 1) - xk - (sigma * lambda + rk * xk) * dt) / (sigma * sqdt);
            double z_from_r = (paths.r(i, k + 1) - rk - (0.02 - rk) * dt) / (sigma_bar * sqdt);
            double z_from_y =
                (std::log(paths.y(i, k + 1) / yk) + 0.5 * eta * eta * dt) / (eta * sqdt);
            CHECK_THAT(z_from_x, WithinAbs(z_from_r, 1e-10));
            CHECK_THAT(z_from_y, WithinAbs(z_from_r, 1e-10));
        }
    }
}

TEST_CASE("the auxiliary process is frozen when the adversary is inactive") {
    MarketModel m = default_model();
    GameState init{1.0, 1.0, 0.03, 0.0};
    PathBundle paths = simulate(m, constant_strategy(0.7), constant_adversary(0.0), init,
                                small_config(64, 0.05, 3), Measure::p);
    for (std::size_t i = 0; i < paths.n_paths(); ++i) CHECK(paths.terminal_y(i) == 1.0);

    GameState other{1.0, 0.8, 0.03, 0.0};
    PathBundle paths2 = simulate(m, constant_strategy(0.7), constant_adversary(0.0), other,
                                 small_config(64, 0.05, 3), Measure::p);
    for (std::size_t i = 0; i < paths2.n_paths(); ++i)
        CHECK_THAT(paths2.terminal_y(i), WithinRel(0.8, 1e-15));
}

TEST_CASE("the density process is a martingale under P") {
    MarketModel m = default_model();
    VasicekSolution cf(default_params(), 1.0);
    GameState init{1.0, 1.0, 0.03, 0.0};
    AdversaryField saddle{[cf](double, double t) { return cf.eta_star(t); }, "saddle"};
    PathBundle paths =
        simulate(m, constant_strategy(0.0), saddle, init, small_config(20000, 0.01, 17), Measure::p);
    std::vector<double> ys(paths.n_paths());
    for (std::size_t i = 0; i < paths.n_paths(); ++i) ys[i] = paths.terminal_y(i);
    Estimate e = detail::reduce(ys, paths.antithetic);
    CHECK_THAT(e.value, WithinAbs(1.0, 3.0 * e.se));
    CHECK(e.se < 0.01);
}

TEST_CASE("runs are reproducible and seeds decorrelate") {
    MarketModel m = default_model();
    GameState init{1.0, 1.0, 0.03, 0.0};
    McConfig cfg = small_config(256, 0.02, 123);
    auto run = [&](std::uint64_t seed) {
        McConfig c = cfg;
        c.seed = seed;
        return simulate(m, constant_strategy(1.0), constant_adversary(0.1), init, c, Measure::p);
    };
    PathBundle a = run(123), b = run(123), c = run(124);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    CHECK(a.r == b.r);
    CHECK_FALSE(a.x == c.x);
}

TEST_CASE("path blocks are stable in the path count") {
    MarketModel m = default_model();
    GameState init{1.0, 1.0, 0.03, 0.0};
    PathBundle small = simulate(m, constant_strategy(1.0), constant_adversary(0.1), init,
                                small_config(4096, 0.05, 5), Measure::p);
    PathBundle big = simulate(m, constant_strategy(1.0), constant_adversary(0.1), init,
                              small_config(8192, 0.05, 5), Measure::p);
    for (std::size_t i = 0; i < 4096; ++i) {
        REQUIRE(small.terminal_x(i) == big.terminal_x(i));
        REQUIRE(small.terminal_r(i) == big.terminal_r(i));
    }
}

TEST_CASE("antithetic partner mirrors the Gaussian draw") {
    MarketModel m = default_model();
    GameState init{1.0, 1.0, 0.03, 0.0};
    McConfig cfg = small_config(2, 0.1, 7, StorageMode::full);
    PathBundle paths =
        simulate(m, constant_strategy(0.0), constant_adversary(0.0), init, cfg, Measure::p);
    double dt = paths.dt;
    double up = paths.r(0, 1) - 0.03 - (0.02 - 0.03) * dt;
    double dn = paths.r(1, 1) - 0.03 - (0.02 - 0.03) * dt;
    CHECK_THAT(up, WithinAbs(-dn, 1e-15));
}

TEST_CASE("terminal-only and full storage agree on the endpoints") {
    MarketModel m = default_model();
    GameState init{1.0, 1.0, 0.03, 0.0};
    PathBundle lean = simulate(m, constant_strategy(1.0), constant_adversary(0.2), init,
                               small_config(128, 0.02, 31), Measure::q_eta);
    PathBundle full = simulate(m, constant_strategy(1.0), constant_adversary(0.2), init,
                               small_config(128, 0.02, 31, StorageMode::full), Measure::q_eta);
    REQUIRE(lean.n_columns() == 2);
    REQUIRE(full.n_columns() == 51);
    CHECK(full.full_storage());
    CHECK_FALSE(lean.full_storage());
    for (std::size_t i = 0; i < 128; ++i) {
        REQUIRE(lean.terminal_x(i) == full.terminal_x(i));
        REQUIRE(lean.terminal_y(i) == full.terminal_y(i));
        REQUIRE(lean.terminal_r(i) == full.terminal_r(i));
    }
    CHECK(lean.times.front() == 0.0);
    CHECK(lean.times.back() == 1.0);
}

TEST_CASE("simulation may start mid-horizon") {
    MarketModel m = default_model();
    GameState init{2.0, 1.0, 0.05, 0.4};
    PathBundle paths = simulate(m, constant_strategy(0.5), constant_adversary(0.1), init,
                                small_config(8, 0.05, 2, StorageMode::full), Measure::p);
    CHECK(paths.times.front() == 0.4);
    CHECK_THAT(paths.times.back(), WithinAbs(1.0, 1e-12));
    CHECK(paths.x(0, 0) == 2.0);
    CHECK(paths.n_columns() == 13);  // 12 steps over the remaining 0.6
}

TEST_CASE("objective estimation modes and their preconditions") {
    MarketModel m = default_model();
    VasicekSolution cf(default_params(), 1.0);
    GameState init{1.0, 1.0, 0.03, 0.0};
    StrategyField pi_star_field{[cf](const GameState& s) { return cf.pi_star(s); }, "saddle"};
    AdversaryField eta_star_field{[cf](double, double t) { return cf.eta_star(t); }, "saddle"};

    PathBundle p_paths =
        simulate(m, pi_star_field, eta_star_field, init, small_config(2000, 0.01, 11), Measure::p);
    PathBundle q_paths =
        simulate(m, pi_star_field, eta_star_field, init, small_config(2000, 0.01, 11), Measure::q_eta);

    SECTION("method must match the sampling measure") {
        CHECK_THROWS_AS(estimate_objective(p_paths, ObjectiveMethod::direct), std::invalid_argument);
        CHECK_THROWS_AS(estimate_objective(q_paths, ObjectiveMethod::importance), std::invalid_argument);
        CHECK_NOTHROW(estimate_objective(p_paths, ObjectiveMethod::importance));
        CHECK_NOTHROW(estimate_objective(q_paths, ObjectiveMethod::direct));
    }

    SECTION("the inferred method matches the explicit one") {
        Estimate a = estimate_objective(q_paths);
        Estimate b = estimate_objective(q_paths, ObjectiveMethod::direct);
        CHECK(a.value == b.value);
        CHECK(a.se == b.se);
    }

    SECTION("with an inactive adversary the reweighting is the identity") {
        PathBundle flat = simulate(m, pi_star_field, constant_adversary(0.0), init,
                                   small_config(512, 0.02, 13), Measure::p);
        Estimate e = estimate_objective(flat, ObjectiveMethod::importance);
        double mean_x = 0.0;
        for (std::size_t i = 0; i < flat.n_paths(); ++i) mean_x += flat.terminal_x(i);
        mean_x /= static_cast<double>(flat.n_paths());
        CHECK_THAT(e.value, WithinAbs(-mean_x - 1.0, 1e-12));
    }
}

TEST_CASE("direct sampling of the saddle objective reproduces the game value") {
    MarketModel m = default_model();
    VasicekSolution cf(default_params(), 1.0);
    GameState init{1.0, 1.0, 0.03, 0.0};
    StrategyField pi_star_field{[cf](const GameState& s) { return cf.pi_star(s); }, "saddle"};
    AdversaryField eta_star_field{[cf](double, double t) { return cf.eta_star(t); }, "saddle"};
    PathBundle q_paths = simulate(m, pi_star_field, eta_star_field, init,
                                  small_config(20000, 1.0 / 500.0, 29), Measure::q_eta);
    Estimate e = estimate_objective(q_paths);
    double v = cf.h(0.03, 0.0) * 1.0 + cf.g(0.0) * 1.0;
    INFO("estimate " << e.value << " +- " << e.se << " vs " << v);
    CHECK_THAT(e.value, WithinAbs(v, 4.0 * e.se));
}

TEST_CASE("direct and importance-weighted estimates agree") {
    MarketModel m = default_model();
    VasicekSolution cf(default_params(), 1.0);
    GameState init{1.0, 1.0, 0.03, 0.0};
    StrategyField pi_star_field{[cf](const GameState& s) { return cf.pi_star(s); }, "saddle"};
    AdversaryField eta_star_field{[cf](double, double t) { return cf.eta_star(t); }, "saddle"};
    McConfig cfg = small_config(20000, 1.0 / 250.0, 41);
    PathBundle qp = simulate(m, pi_star_field, eta_star_field, init, cfg, Measure::q_eta);
    PathBundle pp = simulate(m, pi_star_field, eta_star_field, init, cfg, Measure::p);
    Estimate direct = estimate_objective(qp);
    Estimate importance = estimate_objective(pp);
    double joint = std::sqrt(direct.se * direct.se + importance.se * importance.se);
    CHECK_THAT(direct.value, WithinAbs(importance.value, 4.0 * joint));
}

TEST_CASE("paired differences demand common random numbers") {
    MarketModel m = default_model();
    GameState init{1.0, 1.0, 0.03, 0.0};
    PathBundle a = simulate(m, constant_strategy(1.0), constant_adversary(0.1), init,
                            small_config(64, 0.05, 5), Measure::q_eta);
    PathBundle b = simulate(m, constant_strategy(1.0), constant_adversary(0.1), init,
                            small_config(64, 0.05, 6), Measure::q_eta);
    CHECK_THROWS_AS(paired_difference(a, b), std::invalid_argument);
    Estimate zero = paired_difference(a, a);
    CHECK(zero.value == 0.0);
    CHECK(zero.se == 0.0);
}

TEST_CASE("path-integral estimator for F") {
    McConfig cfg = small_config(2000, 1.0 / 500.0, 51);

    SECTION("at expiry it is exactly one with zero error") {
        Estimate e = feynman_kac_f(default_model(), 0.03, 1.0, cfg);
        CHECK(e.value == 1.0);
        CHECK(e.se == 0.0);
    }

    SECTION("queries beyond the horizon are rejected") {
        CHECK_THROWS_AS(feynman_kac_f(default_model(), 0.03, 1.5, cfg), std::invalid_argument);
    }

    SECTION("deterministic constant-drift model integrates exactly") {
        // mu_bar = c, sigma_bar = 0: the potential along the path is affine in
        // s, so the trapezoid rule is exact and F = exp(-c (T-t)^2 / 2).
        MarketModel m;
        m.lambda = [](double) { return 0.2; };
        m.sigma = SigmaCurve(0.3);
        m.mu_bar = [](double) { return 0.1; };
        m.sigma_bar = [](double) { return 0.0; };
        m.horizon = 1.0;
        Estimate e = feynman_kac_f(m, 0.07, 0.0, cfg);
        CHECK_THAT(e.value, WithinRel(std::exp(-0.05), 1e-12));
        // every path returns the identical value; the SE is summation rounding
        CHECK(e.se <= 1e-12);
    }

    SECTION("rate-free potential gives a zero-variance estimate") {
        MarketModel m;
        m.lambda = [](double) { return 0.0; };
        m.sigma = SigmaCurve(0.3);
        m.mu_bar = [](double) { return 0.0; };
        m.sigma_bar = [](double) { return 0.1; };
        m.horizon = 1.0;
        Estimate e = feynman_kac_f(m, 0.0, 0.0, cfg);
        CHECK_THAT(e.value, WithinAbs(std::exp(1.0 / 600.0), 1e-7));
        CHECK(e.se <= 1e-12);
    }

    SECTION("affine specialization agrees with the generic driver") {
        // The two branches discretize the same expectation (exact-in-drift
        // steps vs Euler), so they must agree statistically.
        MarketModel affine = default_model();
        MarketModel generic = affine;
        generic.vasicek.reset();  // force the generic code path
        McConfig c = small_config(20000, 1.0 / 200.0, 77);
        Estimate a = feynman_kac_f(affine, 0.05, 0.5, c);
        Estimate g = feynman_kac_f(generic, 0.05, 0.5, c);
        double joint = std::sqrt(a.se * a.se + g.se * g.se);
        CHECK_THAT(a.value, WithinAbs(g.value, 4.0 * joint + 1e-5 * std::abs(g.value)));
    }

    SECTION("matches the closed form at a mid-grid probe") {
        VasicekSolution cf(default_params(), 1.0);
        McConfig c = small_config(20000, 1.0 / 200.0, 61);
        Estimate e = feynman_kac_f(default_model(), 0.0, 0.5, c);
        double ref = -std::exp(0.0 * 0.5) / cf.h(0.0, 0.5);
        INFO("estimate " << e.value << " +- " << e.se << " vs " << ref);
        CHECK_THAT(e.value, WithinAbs(ref, 4.0 * std::max(e.se, 1e-9 * std::abs(ref))));
    }
}

TEST_CASE("path-integral estimator for G") {
    VasicekParams params = default_params();
    MarketModel m = default_model();
    VasicekSolution cf(params, 1.0);
    McConfig cfg = small_config(2000, 1.0 / 500.0, 71);

    SECTION("analytic field: time-only potential, zero variance") {
        Estimate e = feynman_kac_g(m, cf, 0.03, 0.0, cfg);
        CHECK(e.se == 0.0);
        CHECK_THAT(e.value, WithinRel(-cf.a2(0.0), 1e-6));
    }

    SECTION("collapsed estimate equals the full path loop") {
        // With constant coefficients the potential never reads the rate, so
        // explicitly running the path driver must give the identical number.
        McConfig c = small_config(8, 1.0 / 50.0, 71);
        Estimate fast = feynman_kac_g(m, cf, 0.03, 0.25, c);
        auto kappa = [&](double, double s) { return cf.b1(s); };
        Estimate loop = detail::feynman_kac_g_impl(m, kappa, 0.03, 0.25, c);
        CHECK(fast.value == loop.value);
        CHECK(loop.se == 0.0);
    }

    SECTION("at expiry the expectation is exactly one") {
        Estimate e = feynman_kac_g(m, cf, 0.03, 1.0, cfg);
        CHECK(e.value == 1.0);
        CHECK(e.se == 0.0);
    }

    SECTION("finite-difference field reproduces the same value") {
        PdeGrid grid;
        double sd = 0.1 / std::sqrt(2.0);
        grid.r_min = 0.02 - 6.0 * sd;
        grid.r_max = 0.02 + 6.0 * sd;
        grid.n_r = 200;
        grid.n_t = 200;
        PdeSolution sol = solve_f(m, grid);
        McConfig c = small_config(2000, 1.0 / 100.0, 81);
        Estimate e = feynman_kac_g(m, sol, 0.03, 0.0, c);
        CHECK_THAT(e.value, WithinAbs(-cf.a2(0.0), 1e-3));

        SECTION("start points off the grid are rejected") {
            CHECK_THROWS_AS(feynman_kac_g(m, sol, grid.r_max + 0.1, 0.0, c), std::out_of_range);
        }

        SECTION("an unsolved field is rejected") {
            PdeSolution empty;
            CHECK_THROWS_AS(feynman_kac_g(m, empty, 0.03, 0.0, c), std::invalid_argument);
        }
    }
}
