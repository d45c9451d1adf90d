#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "market_model.hpp"

namespace mmv {

// The value function of the game is linear in the controlled states,
//   V(x, y, r, t) = H(r, t) x + G(r, t) y,
// so a solution is fully described by the two coefficient surfaces H, G and
// their r-derivatives.  Surfaces may come from closed-form evaluation or from
// a finite-difference grid (tagged by provenance).
struct ValueSurface {
    enum class Provenance { closed_form, pde_grid };

    std::function<double(double r, double t)> h;
    std::function<double(double r, double t)> g;
    std::function<double(double r, double t)> h_r;
    std::function<double(double r, double t)> g_r;
    Provenance provenance = Provenance::closed_form;
};

inline double value_function(const GameState& s, const ValueSurface& v) {
    return v.h(s.r, s.t) * s.x + v.g(s.r, s.t) * s.y;
}

// Worst-case drift at the saddle: eta* = -lambda(r) - sigma_bar(r) H_r/H.
// Independent of (x, y); in the mean-reverting closed form it reduces to
// -lambda - sigma_bar B1(t).
inline double eta_star(double r, double t, const ValueSurface& v, const MarketModel& model) {
    double h = v.h(r, t);
    if (h == 0.0) throw std::runtime_error("eta_star: H vanished at the query point");
    return -model.lambda(r) - model.sigma_bar(r) * v.h_r(r, t) / h;
}

// Optimal investment at state (x, y, r, t):
//   pi* = 2 y G [ (lambda/sigma)(1/H) + (sigma_bar/sigma)(H_r/H^2 - G_r/(G H)) ]
//         - x (sigma_bar/sigma) (H_r/H).
inline double pi_star(const GameState& s, const ValueSurface& v, const MarketModel& model) {
    double sigma = model.sigma(s.t);
    if (!(sigma > 0.0)) throw std::runtime_error("pi_star: sigma(t) must be positive");
    double h = v.h(s.r, s.t);
    double g = v.g(s.r, s.t);
    if (h == 0.0 || g == 0.0) throw std::runtime_error("pi_star: degenerate surface (H or G is zero)");
    double h_r = v.h_r(s.r, s.t);
    double g_r = v.g_r(s.r, s.t);
    double lambda = model.lambda(s.r);
    double sigma_bar = model.sigma_bar(s.r);
    double bracket = (lambda / sigma) / h + (sigma_bar / sigma) * (h_r / (h * h) - g_r / (g * h));
    return 2.0 * s.y * g * bracket - s.x * (sigma_bar / sigma) * (h_r / h);
}

// The maximizing drift for an arbitrary investment level pi (before
// specializing pi = pi*):
//   eta*(pi) = -sigma H pi / (2 y G) - sigma_bar (x H_r + 2 y G_r) / (2 y G).
// At pi = pi* this collapses to the (x, y)-free eta* above.
inline double eta_star_of_pi(double pi, const GameState& s, const ValueSurface& v,
                             const MarketModel& model) {
    if (!(s.y > 0.0)) throw std::runtime_error("eta_star_of_pi: requires y > 0");
    double h = v.h(s.r, s.t);
    double g = v.g(s.r, s.t);
    if (g == 0.0) throw std::runtime_error("eta_star_of_pi: G vanished at the query point");
    double h_r = v.h_r(s.r, s.t);
    double g_r = v.g_r(s.r, s.t);
    double sigma = model.sigma(s.t);
    double sigma_bar = model.sigma_bar(s.r);
    double denom = 2.0 * s.y * g;
    return -(sigma * h * pi + sigma_bar * (s.x * h_r + 2.0 * s.y * g_r)) / denom;
}

}  // namespace mmv
