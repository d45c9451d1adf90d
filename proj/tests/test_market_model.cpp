#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mmv/market_model.hpp"

using namespace mmv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinULP;

TEST_CASE("constant volatility curve") {
    SigmaCurve s(0.3);
    CHECK(s.is_constant());
    CHECK(s(0.0) == 0.3);
    CHECK(s(0.7) == 0.3);
    CHECK_THROWS_AS(SigmaCurve(0.0), std::invalid_argument);
    CHECK_THROWS_AS(SigmaCurve(-0.1), std::invalid_argument);
}

TEST_CASE("tabulated volatility curve interpolates linearly and clamps") {
    SigmaCurve s({0.0, 0.5, 1.0}, {0.2, 0.4, 0.3});
    CHECK(!s.is_constant());
    CHECK(s(0.0) == 0.2);
    CHECK_THAT(s(0.25), WithinAbs(0.3, 1e-15));
    CHECK(s(0.5) == 0.4);
    CHECK_THAT(s(0.75), WithinAbs(0.35, 1e-15));
    CHECK(s(-1.0) == 0.2);   // clamped before the first knot
    CHECK(s(2.0) == 0.3);    // clamped after the last knot
    CHECK_THROWS_AS(SigmaCurve({0.0, 0.0}, {0.2, 0.3}), std::invalid_argument);   // non-increasing times
    CHECK_THROWS_AS(SigmaCurve({0.0, 1.0}, {0.2, 0.0}), std::invalid_argument);   // non-positive value
    CHECK_THROWS_AS(SigmaCurve({0.0}, {0.2}), std::invalid_argument);             // too few knots
}

TEST_CASE("mean-reverting model coefficients") {
    VasicekParams p;
    p.lambda = 0.2;
    p.sigma_t = SigmaCurve(0.3);
    p.theta_bar = 0.02;
    p.alpha = 1.0;
    p.sigma_bar = 0.1;
    MarketModel m = vasicek_to_model(p, 1.0);

    CHECK(m.mu_bar(0.05) == 0.02 - 1.0 * 0.05);
    CHECK(m.sigma_bar(-3.0) == 0.1);
    CHECK(m.sigma_bar(7.0) == 0.1);
    CHECK(m.lambda(0.41) == 0.2);
    CHECK(m.sigma(0.3) == 0.3);
    CHECK(m.horizon == 1.0);
    REQUIRE(m.vasicek.has_value());

    SECTION("zero market price of risk") {
        VasicekParams q;
        q.lambda = 0.0;
        q.sigma_t = SigmaCurve(1.0);
        q.theta_bar = 0.0;
        q.alpha = 0.5;
        q.sigma_bar = 0.2;
        MarketModel mz = vasicek_to_model(q, 1.0);
        CHECK(mz.lambda(0.123) == 0.0);
    }

    SECTION("coefficient evaluation is pure (bit-identical across calls)") {
        for (double r : {-0.7, 0.0, 0.033, 2.5}) {
            double a = m.mu_bar(r), b = m.mu_bar(r);
            CHECK(a == b);
            CHECK(m.sigma_bar(r) == m.sigma_bar(r));
        }
    }

    SECTION("drift is exactly affine") {
        std::mt19937 gen(42);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (int k = 0; k < 100; ++k) {
            double r1 = dist(gen), r2 = dist(gen);
            CHECK_THAT(m.mu_bar(r1) - m.mu_bar(r2), WithinULP(-p.alpha * (r1 - r2), 4));
        }
    }
}

TEST_CASE("model construction rejects bad parameters") {
    VasicekParams p;
    p.lambda = 0.2;
    p.sigma_t = SigmaCurve(0.3);
    p.theta_bar = 0.02;
    p.alpha = 1.0;
    p.sigma_bar = 0.1;
    CHECK_THROWS_AS(vasicek_to_model(p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(vasicek_to_model(p, -1.0), std::invalid_argument);
    p.alpha = 0.0;
    CHECK_THROWS_AS(vasicek_to_model(p, 1.0), std::invalid_argument);
    p.alpha = -1.0;
    CHECK_THROWS_AS(vasicek_to_model(p, 1.0), std::invalid_argument);
    p.alpha = 1.0;
    p.sigma_bar = -0.1;
    CHECK_THROWS_AS(vasicek_to_model(p, 1.0), std::invalid_argument);
}

TEST_CASE("validation of the mean-reverting model") {
    VasicekParams p;
    p.lambda = 0.2;
    p.sigma_t = SigmaCurve(0.3);
    p.theta_bar = 0.02;
    p.alpha = 1.0;
    p.sigma_bar = 0.1;
    MarketModel m = vasicek_to_model(p, 1.0);
    ModelValidationReport rep = validate_model(m, -1.0, 1.0, 1e-4);

    CHECK(rep.ellipticity_ok);
    CHECK_THAT(rep.min_sigma_bar_sq, WithinAbs(0.01, 1e-15));
    // |mu_bar'| = alpha everywhere: an affine drift never saturates, so it is
    // flagged as unbounded -- advisory only, the report still counts as ok.
    CHECK(rep.drift_flagged_unbounded);
    CHECK(rep.ok());
    CHECK_THAT(rep.lipschitz_mu_bar, WithinAbs(1.0, 1e-9));
    CHECK(rep.sigma_positive);
}

TEST_CASE("validation flags a degenerate rate volatility") {
    MarketModel m;
    m.lambda = [](double) { return 0.2; };
    m.sigma = SigmaCurve(0.3);
    m.mu_bar = [](double r) { return std::tanh(r); };
    m.sigma_bar = [](double) { return 0.0; };
    m.horizon = 1.0;
    ModelValidationReport rep = validate_model(m, -5.0, 5.0, 1e-8);
    CHECK_FALSE(rep.ellipticity_ok);
    CHECK_FALSE(rep.ok());
    CHECK_FALSE(rep.messages.empty());
}

TEST_CASE("validation passes a bounded smooth model") {
    MarketModel m;
    m.lambda = [](double) { return 0.2; };
    m.sigma = SigmaCurve(0.3);
    m.mu_bar = [](double r) { return std::tanh(r); };
    m.sigma_bar = [](double) { return 0.1; };
    m.horizon = 1.0;
    ModelValidationReport rep = validate_model(m, -5.0, 5.0, 1e-8);
    CHECK(rep.ellipticity_ok);
    CHECK(rep.sigma_positive);
    CHECK_FALSE(rep.drift_flagged_unbounded);  // tanh saturates inside the range
    CHECK(rep.ok());
    CHECK(rep.lipschitz_mu_bar <= 1.0 + 1e-6);
}

TEST_CASE("validation precondition") {
    VasicekParams p;
    p.lambda = 0.0;
    p.sigma_t = SigmaCurve(1.0);
    p.theta_bar = 0.0;
    p.alpha = 1.0;
    p.sigma_bar = 0.1;
    MarketModel m = vasicek_to_model(p, 1.0);
    CHECK_THROWS_AS(validate_model(m, 1.0, -1.0, 1e-8), std::invalid_argument);
}
