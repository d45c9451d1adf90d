#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmv {

// Deterministic volatility curve sigma(t): either a positive constant or a
// piecewise-linear interpolation of (t, sigma) knots.  Evaluation outside the
// knot range clamps to the nearest endpoint.
class SigmaCurve {
public:
    SigmaCurve() : constant_(0.0) {}

    explicit SigmaCurve(double constant) : constant_(constant) {
        if (!(constant > 0.0)) throw std::invalid_argument("SigmaCurve: constant volatility must be positive");
    }

    SigmaCurve(std::vector<double> times, std::vector<double> values)
        : times_(std::move(times)), values_(std::move(values)) {
        if (times_.size() != values_.size() || times_.size() < 2)
            throw std::invalid_argument("SigmaCurve: need at least two (t, sigma) knots");
        for (std::size_t i = 1; i < times_.size(); ++i)
            if (!(times_[i] > times_[i - 1]))
                throw std::invalid_argument("SigmaCurve: knot times must be strictly increasing");
        for (double v : values_)
            if (!(v > 0.0)) throw std::invalid_argument("SigmaCurve: volatility values must be positive");
    }

    bool is_constant() const { return times_.empty(); }

    double operator()(double t) const {
        if (times_.empty()) return constant_;
        if (t <= times_.front()) return values_.front();
        if (t >= times_.back()) return values_.back();
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t j = static_cast<std::size_t>(it - times_.begin());
        double w = (t - times_[j - 1]) / (times_[j] - times_[j - 1]);
        return (1.0 - w) * values_[j - 1] + w * values_[j];
    }

    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& values() const { return values_; }
    double constant_value() const { return constant_; }

private:
    double constant_ = 0.0;
    std::vector<double> times_;   // empty when constant
    std::vector<double> values_;
};

// Parameters of the mean-reverting short-rate model
//   dr = (theta_bar - alpha r) dt + sigma_bar dW
// together with the (constant) market price of risk and the asset volatility
// curve.  sigma_bar = 0 degenerates to a deterministic rate and is allowed.
struct VasicekParams {
    double lambda = 0.0;
    SigmaCurve sigma_t{0.3};
    double theta_bar = 0.0;
    double alpha = 0.0;
    double sigma_bar = 0.0;
};

// General market with one risky asset and a stochastic short rate, both
// driven by the same Brownian motion:
//   dS/S = (r + sigma(t) lambda(r)) dt + sigma(t) dW
//   dr   = mu_bar(r) dt + sigma_bar(r) dW
struct MarketModel {
    std::function<double(double)> lambda;     // market price of risk, function of r
    SigmaCurve sigma;                         // asset volatility sigma(t) > 0
    std::function<double(double)> mu_bar;     // short-rate drift
    std::function<double(double)> sigma_bar;  // short-rate volatility (>= 0)
    double horizon = 1.0;                     // terminal time T

    // Set when the model was built from VasicekParams; lets numerical kernels
    // use the affine structure (precomputed per-step coefficients) without
    // changing results.
    std::optional<VasicekParams> vasicek;
};

// Controlled state at time t: wealth x, auxiliary (density) process y > 0,
// short rate r.
struct GameState {
    double x = 0.0;
    double y = 1.0;
    double r = 0.0;
    double t = 0.0;
};

inline MarketModel vasicek_to_model(const VasicekParams& p, double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("vasicek_to_model: horizon must be positive");
    if (!(p.alpha > 0.0)) throw std::invalid_argument("vasicek_to_model: alpha must be positive");
    if (p.sigma_bar < 0.0) throw std::invalid_argument("vasicek_to_model: sigma_bar must be non-negative");
    MarketModel m;
    double lam = p.lambda, theta = p.theta_bar, alpha = p.alpha, sbar = p.sigma_bar;
    m.lambda = [lam](double) { return lam; };
    m.sigma = p.sigma_t;
    m.mu_bar = [theta, alpha](double r) { return theta - alpha * r; };
    m.sigma_bar = [sbar](double) { return sbar; };
    m.horizon = horizon;
    m.vasicek = p;
    return m;
}

// Diagnostics from validate_model.  "Lipschitz" entries are finite-difference
// estimates of the largest slope over the probed rate range.  The drift flag
// marks a drift that still grows at the edges of the range (so it cannot be
// bounded on all of R); it is advisory and does not make ok() fail, since the
// mean-reverting affine drift is exactly of that kind and is handled by the
// closed-form theory anyway.
struct ModelValidationReport {
    bool ellipticity_ok = false;
    double min_sigma_bar_sq = 0.0;
    double lipschitz_mu_bar = 0.0;
    double lipschitz_sigma_bar = 0.0;
    double lipschitz_sigma_lambda = 0.0;
    bool drift_flagged_unbounded = false;
    bool sigma_positive = false;
    std::vector<std::string> messages;

    bool ok() const { return ellipticity_ok && sigma_positive; }
};

// Probe the model coefficients on [r_lo, r_hi] x [0, T].  epsilon is the
// uniform-ellipticity floor demanded of sigma_bar(r)^2; pass epsilon = 0 to
// accept a degenerate (deterministic) rate.
inline ModelValidationReport validate_model(const MarketModel& model, double r_lo, double r_hi,
                                            double epsilon) {
    if (!(r_hi > r_lo)) throw std::invalid_argument("validate_model: need r_lo < r_hi");
    const int n = 2001;
    const double dr = (r_hi - r_lo) / (n - 1);
    ModelValidationReport rep;

    rep.min_sigma_bar_sq = std::numeric_limits<double>::infinity();
    double prev_mu = 0.0, prev_sb = 0.0, prev_sl = 0.0;
    double edge_slope = 0.0;  // steepest |mu_bar'| on the outer 10% of the range
    const double inner_lo = r_lo + 0.10 * (r_hi - r_lo);
    const double inner_hi = r_hi - 0.10 * (r_hi - r_lo);
    for (int i = 0; i < n; ++i) {
        double r = r_lo + i * dr;
        double mu = model.mu_bar(r);
        double sb = model.sigma_bar(r);
        double sl = sb * model.lambda(r);
        if (!std::isfinite(mu) || !std::isfinite(sb) || !std::isfinite(sl)) {
            rep.messages.push_back("non-finite coefficient at r = " + std::to_string(r));
            return rep;
        }
        rep.min_sigma_bar_sq = std::min(rep.min_sigma_bar_sq, sb * sb);
        if (i > 0) {
            double slope_mu = std::abs(mu - prev_mu) / dr;
            rep.lipschitz_mu_bar = std::max(rep.lipschitz_mu_bar, slope_mu);
            rep.lipschitz_sigma_bar = std::max(rep.lipschitz_sigma_bar, std::abs(sb - prev_sb) / dr);
            rep.lipschitz_sigma_lambda = std::max(rep.lipschitz_sigma_lambda, std::abs(sl - prev_sl) / dr);
            if (r <= inner_lo || r > inner_hi) edge_slope = std::max(edge_slope, slope_mu);
        }
        prev_mu = mu;
        prev_sb = sb;
        prev_sl = sl;
    }
    rep.ellipticity_ok = rep.min_sigma_bar_sq >= epsilon;
    if (!rep.ellipticity_ok)
        rep.messages.push_back("sigma_bar^2 falls below the ellipticity floor on the probed range");

    // A drift that is bounded on all of R must flatten out eventually.  If the
    // slope near the edges of the probed range is still a sizable fraction of
    // the peak slope (as for an affine drift, where it never decays), flag the
    // drift as unbounded.  Saturating drifts like tanh pass.
    rep.drift_flagged_unbounded =
        rep.lipschitz_mu_bar > 1e-12 && edge_slope > 0.5 * rep.lipschitz_mu_bar;
    if (rep.drift_flagged_unbounded)
        rep.messages.push_back(
            "mu_bar does not saturate inside the probed range; treating it as unbounded");

    rep.sigma_positive = true;
    for (int k = 0; k <= 400; ++k) {
        double t = model.horizon * k / 400.0;
        if (!(model.sigma(t) > 0.0)) {
            rep.sigma_positive = false;
            rep.messages.push_back("sigma(t) is not positive at t = " + std::to_string(t));
            break;
        }
    }
    return rep;
}

}  // namespace mmv
