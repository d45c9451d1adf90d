#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "market_model.hpp"
#include "matrix.hpp"
#include "tridiagonal.hpp"
#include "value_surface.hpp"
#include "vasicek_closed_form.hpp"

namespace mmv {

// Boundary treatment for the truncated rate domain.  "linearity" imposes
// F_rr = 0 with a one-sided first derivative at the edge rows; the Dirichlet
// alternative pins edge values to the closed-form solution and is available
// only when the model carries mean-reverting parameters.
enum class BoundaryKind { linearity, dirichlet_closed_form };

struct PdeGrid {
    double r_min = 0.0;
    double r_max = 0.0;
    int n_r = 400;  // spatial nodes
    int n_t = 400;  // time steps
    BoundaryKind boundary = BoundaryKind::linearity;
    double theta = 0.5;  // implicitness weight of the time scheme
    bool upwind = false;

    void validate() const {
        if (!(r_min < r_max)) throw std::invalid_argument("PdeGrid: need r_min < r_max");
        if (n_r < 3) throw std::invalid_argument("PdeGrid: need at least 3 spatial nodes");
        if (n_t < 1) throw std::invalid_argument("PdeGrid: need at least 1 time step");
        if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("PdeGrid: theta must lie in [0,1]");
    }

    double dr() const { return (r_max - r_min) / (n_r - 1); }
    double r_at(int i) const { return r_min + i * dr(); }
};

// Grids of the reduced solution chain.  Row n holds time t_n = n * T / n_t;
// the march runs backward from the terminal row.  f_r_over_f is the
// logarithmic r-derivative of F (central differences, one-sided second-order
// at the edges), stored once so the G-solve and any simulator query use the
// identical field.
struct PdeSolution {
    PdeGrid grid;
    double horizon = 0.0;
    Matrix f_grid;
    Matrix f_r_over_f;
    Matrix h_grid;            // filled by reconstruct_h
    Matrix h_r_over_h;        // (T - t) - F_r/F, same layout
    Matrix g_grid;            // filled by solve_g
    Matrix g_r_grid;          // central-difference G_r, filled by solve_g

    double t_at(int n) const { return horizon * n / grid.n_t; }

    // Bilinear interpolation of a stored field at (r, t); throws when the
    // query leaves the grid rectangle.
    double sample(const Matrix& field, double r, double t) const {
        if (field.empty()) throw std::runtime_error("PdeSolution: field not computed yet");
        const double tol_r = 1e-9 * (grid.r_max - grid.r_min);
        const double tol_t = 1e-9 * horizon;
        if (r < grid.r_min - tol_r || r > grid.r_max + tol_r)
            throw std::out_of_range("PdeSolution: rate query outside the grid");
        if (t < -tol_t || t > horizon + tol_t)
            throw std::out_of_range("PdeSolution: time query outside [0, T]");
        double u = std::clamp((r - grid.r_min) / dr_, 0.0, static_cast<double>(grid.n_r - 1));
        double v = std::clamp(t / dt_, 0.0, static_cast<double>(grid.n_t));
        int i = std::min(static_cast<int>(u), grid.n_r - 2);
        int n = std::min(static_cast<int>(v), grid.n_t - 1);
        double wu = u - i, wv = v - n;
        return (1 - wv) * ((1 - wu) * field(n, i) + wu * field(n, i + 1)) +
               wv * ((1 - wu) * field(n + 1, i) + wu * field(n + 1, i + 1));
    }

    double sample_f(double r, double t) const { return sample(f_grid, r, t); }
    double sample_f_r_over_f(double r, double t) const { return sample(f_r_over_f, r, t); }
    double sample_h(double r, double t) const { return sample(h_grid, r, t); }
    double sample_h_r_over_h(double r, double t) const { return sample(h_r_over_h, r, t); }
    double sample_g(double r, double t) const { return sample(g_grid, r, t); }
    double sample_g_r(double r, double t) const { return sample(g_r_grid, r, t); }

    double dr_ = 0.0;  // cached spacings for the samplers
    double dt_ = 0.0;
};

// Zeroth-order coefficient of the F-equation:
//   phi(r, t) = 1/2 sigma_bar(r)^2 (T-t)^2 - (T-t) (mu_bar(r) - sigma_bar(r) lambda(r)).
inline double potential_phi(double r, double t, const MarketModel& model) {
    double tau = model.horizon - t;
    double sb = model.sigma_bar(r);
    return 0.5 * sb * sb * tau * tau - tau * (model.mu_bar(r) - sb * model.lambda(r));
}

namespace detail {

// One backward theta-step for a generic reaction-advection-diffusion row
// operator A u = c u + b u_r + 1/2 s2 u_rr:
//   (I - theta dt A_n) u^n = (I + (1-theta) dt A_{n+1}) u^{n+1}.
// Coefficient arrays are per-node; b and c may depend on the time level.
// Rows 0 and n_r-1 either use the one-sided linearity operator or are pinned
// to supplied Dirichlet values.
struct ThetaStepper {
    int n_r;
    double dr, dt, theta;
    bool upwind;
    std::vector<double> lower, diag, upper, rhs;
    TridiagonalSolver solver;

    ThetaStepper(int n_r_, double dr_, double dt_, double theta_, bool upwind_)
        : n_r(n_r_), dr(dr_), dt(dt_), theta(theta_), upwind(upwind_),
          lower(n_r_), diag(n_r_), upper(n_r_), rhs(n_r_) {}

    // Writes the action coefficients of A at node i into (lo, di, up).
    void row(int i, const std::vector<double>& b, const std::vector<double>& c,
             const std::vector<double>& s2, double& lo, double& di, double& up) const {
        if (i == 0) {
            // linearity edge: u_rr = 0, one-sided u_r
            lo = 0.0;
            di = c[0] - b[0] / dr;
            up = b[0] / dr;
            return;
        }
        if (i == n_r - 1) {
            lo = -b[i] / dr;
            di = c[i] + b[i] / dr;
            up = 0.0;
            return;
        }
        double diff = 0.5 * s2[i] / (dr * dr);
        lo = diff;
        di = c[i] - 2.0 * diff;
        up = diff;
        if (upwind) {
            double bp = std::max(b[i], 0.0), bm = std::min(b[i], 0.0);
            lo += -bm / dr;
            di += (bm - bp) / dr;
            up += bp / dr;
        } else {
            lo += -b[i] / (2.0 * dr);
            up += b[i] / (2.0 * dr);
        }
    }

    // Advances u from level n+1 to level n.  b_new/c_new are the level-n
    // coefficients, b_old/c_old the level-(n+1) ones.  dirichlet, when
    // non-null, supplies {u(r_min, t_n), u(r_max, t_n)}.
    void step(std::vector<double>& u, const std::vector<double>& b_new,
              const std::vector<double>& c_new, const std::vector<double>& b_old,
              const std::vector<double>& c_old, const std::vector<double>& s2,
              const double* dirichlet) {
        for (int i = 0; i < n_r; ++i) {
            double lo, di, up;
            row(i, b_old, c_old, s2, lo, di, up);
            double left = (i > 0) ? u[i - 1] : 0.0;
            double right = (i < n_r - 1) ? u[i + 1] : 0.0;
            double w = 1.0 - theta;
            rhs[i] = u[i] + w * dt * (lo * left + di * u[i] + up * right);
        }
        for (int i = 0; i < n_r; ++i) {
            double lo, di, up;
            row(i, b_new, c_new, s2, lo, di, up);
            lower[i] = -theta * dt * lo;
            diag[i] = 1.0 - theta * dt * di;
            upper[i] = -theta * dt * up;
        }
        if (dirichlet) {
            lower[0] = 0.0;
            diag[0] = 1.0;
            upper[0] = 0.0;
            rhs[0] = dirichlet[0];
            lower[n_r - 1] = 0.0;
            diag[n_r - 1] = 1.0;
            upper[n_r - 1] = 0.0;
            rhs[n_r - 1] = dirichlet[1];
        }
        solver.solve(lower, diag, upper, rhs);
        u = rhs;
    }
};

// Log-derivative of a grid row: central differences inside, second-order
// one-sided at the edges, divided by the field value.
inline void log_derivative_row(const double* u, int n, double dr, double* out) {
    out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dr) / u[0];
    for (int i = 1; i < n - 1; ++i) out[i] = (u[i + 1] - u[i - 1]) / (2.0 * dr) / u[i];
    out[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dr) / u[n - 1];
}

inline std::unique_ptr<VasicekSolution> closed_form_for_boundary(const MarketModel& model) {
    if (!model.vasicek)
        throw std::invalid_argument(
            "pde: dirichlet-closed-form boundary requires a model built from VasicekParams");
    return std::make_unique<VasicekSolution>(*model.vasicek, model.horizon);
}

}  // namespace detail

// Backward solve of the linear equation for F,
//   F_t + phi F + [mu_bar - sigma_bar lambda - sigma_bar^2 (T-t)] F_r
//       + 1/2 sigma_bar^2 F_rr = 0,     F(r, T) = 1,
// on the truncated grid.  The (T-t) factor in the transport coefficient is
// evaluated at the marching time of each level.  Positivity of F is enforced
// after every step.
inline PdeSolution solve_f(const MarketModel& model, const PdeGrid& grid) {
    grid.validate();
    PdeSolution sol;
    sol.grid = grid;
    sol.horizon = model.horizon;
    sol.dr_ = grid.dr();
    sol.dt_ = model.horizon / grid.n_t;

    const int n_r = grid.n_r, n_t = grid.n_t;
    std::vector<double> mu(n_r), sb(n_r), s2(n_r), lam(n_r);
    for (int i = 0; i < n_r; ++i) {
        double r = grid.r_at(i);
        mu[i] = model.mu_bar(r);
        sb[i] = model.sigma_bar(r);
        s2[i] = sb[i] * sb[i];
        lam[i] = model.lambda(r);
        if (!(s2[i] > 0.0))
            throw std::invalid_argument("solve_f: sigma_bar vanishes on the grid (degenerate diffusion)");
    }

    std::unique_ptr<VasicekSolution> cf;
    if (grid.boundary == BoundaryKind::dirichlet_closed_form)
        cf = detail::closed_form_for_boundary(model);
    auto f_exact = [&](double r, double t) {
        // F = -e^{r (T-t)} / H from the closed form
        return -std::exp(r * (model.horizon - t)) / cf->h(r, t);
    };

    auto coeffs_at = [&](double t, std::vector<double>& b, std::vector<double>& c) {
        double tau = model.horizon - t;
        for (int i = 0; i < n_r; ++i) {
            b[i] = mu[i] - sb[i] * lam[i] - s2[i] * tau;
            c[i] = 0.5 * s2[i] * tau * tau - tau * (mu[i] - sb[i] * lam[i]);
        }
    };

    sol.f_grid = Matrix(n_t + 1, n_r, 1.0);  // terminal row and workspace
    std::vector<double> u(n_r, 1.0);
    std::vector<double> b_old(n_r), c_old(n_r), b_new(n_r), c_new(n_r);
    detail::ThetaStepper stepper(n_r, grid.dr(), sol.dt_, grid.theta, grid.upwind);

    coeffs_at(sol.t_at(n_t), b_old, c_old);
    for (int n = n_t - 1; n >= 0; --n) {
        double t_new = sol.t_at(n);
        coeffs_at(t_new, b_new, c_new);
        double dir[2];
        const double* dirichlet = nullptr;
        if (cf) {
            dir[0] = f_exact(grid.r_min, t_new);
            dir[1] = f_exact(grid.r_max, t_new);
            dirichlet = dir;
        }
        stepper.step(u, b_new, c_new, b_old, c_old, s2, dirichlet);
        for (int i = 0; i < n_r; ++i) {
            if (!(u[i] > 0.0) || !std::isfinite(u[i]))
                throw std::runtime_error(
                    "solve_f: non-positive F at t = " + std::to_string(t_new) + ", r = " +
                    std::to_string(grid.r_at(i)) + " (n_r = " + std::to_string(n_r) + ", n_t = " +
                    std::to_string(n_t) + "); refine the grid or enable upwinding");
            sol.f_grid(n, i) = u[i];
        }
        std::swap(b_old, b_new);
        std::swap(c_old, c_new);
    }

    sol.f_r_over_f = Matrix(n_t + 1, n_r);
    for (int n = 0; n <= n_t; ++n)
        detail::log_derivative_row(sol.f_grid.row_ptr(n), n_r, grid.dr(), sol.f_r_over_f.row_ptr(n));
    return sol;
}

// Undoes the substitution chain: H = -e^{r (T-t)} / F, and the log-derivative
// identity H_r/H = (T-t) - F_r/F.  Stores both grids on the solution.
inline void reconstruct_h(PdeSolution& sol) {
    if (sol.f_grid.empty()) throw std::runtime_error("reconstruct_h: F not solved yet");
    const int n_r = sol.grid.n_r, n_t = sol.grid.n_t;
    sol.h_grid = Matrix(n_t + 1, n_r);
    sol.h_r_over_h = Matrix(n_t + 1, n_r);
    for (int n = 0; n <= n_t; ++n) {
        double tau = sol.horizon - sol.t_at(n);
        for (int i = 0; i < n_r; ++i) {
            sol.h_grid(n, i) = -std::exp(sol.grid.r_at(i) * tau) / sol.f_grid(n, i);
            sol.h_r_over_h(n, i) = tau - sol.f_r_over_f(n, i);
        }
    }
}

// Backward solve of the G-equation with coefficients built from the stored
// F_r/F field:
//   G_t + 1/2 sigma_bar^2 G_rr + (lambda + sigma_bar [(T-t) - F_r/F])^2 G
//       + (mu_bar - 2 sigma_bar lambda - 2 sigma_bar^2 [(T-t) - F_r/F]) G_r = 0,
//   G(r, T) = -1.
inline void solve_g(const MarketModel& model, PdeSolution& sol) {
    if (sol.f_r_over_f.empty()) throw std::runtime_error("solve_g: F not solved yet");
    const PdeGrid& grid = sol.grid;
    const int n_r = grid.n_r, n_t = grid.n_t;

    std::vector<double> mu(n_r), sb(n_r), s2(n_r), lam(n_r);
    for (int i = 0; i < n_r; ++i) {
        double r = grid.r_at(i);
        mu[i] = model.mu_bar(r);
        sb[i] = model.sigma_bar(r);
        s2[i] = sb[i] * sb[i];
        lam[i] = model.lambda(r);
    }

    std::unique_ptr<VasicekSolution> cf;
    if (grid.boundary == BoundaryKind::dirichlet_closed_form)
        cf = detail::closed_form_for_boundary(model);

    auto coeffs_at = [&](int n, std::vector<double>& b, std::vector<double>& c) {
        double tau = sol.horizon - sol.t_at(n);
        for (int i = 0; i < n_r; ++i) {
            double kappa = tau - sol.f_r_over_f(n, i);  // the H_r/H field
            double q = lam[i] + sb[i] * kappa;
            b[i] = mu[i] - 2.0 * sb[i] * lam[i] - 2.0 * s2[i] * kappa;
            c[i] = q * q;
        }
    };

    sol.g_grid = Matrix(n_t + 1, n_r, -1.0);
    std::vector<double> u(n_r, -1.0);
    std::vector<double> b_old(n_r), c_old(n_r), b_new(n_r), c_new(n_r);
    detail::ThetaStepper stepper(n_r, grid.dr(), sol.dt_, grid.theta, grid.upwind);

    coeffs_at(n_t, b_old, c_old);
    for (int n = n_t - 1; n >= 0; --n) {
        coeffs_at(n, b_new, c_new);
        double dir[2];
        const double* dirichlet = nullptr;
        if (cf) {
            dir[0] = cf->g(sol.t_at(n));
            dir[1] = dir[0];  // G is r-free in closed form
            dirichlet = dir;
        }
        stepper.step(u, b_new, c_new, b_old, c_old, s2, dirichlet);
        for (int i = 0; i < n_r; ++i) {
            if (!(u[i] < 0.0) || !std::isfinite(u[i]))
                throw std::runtime_error("solve_g: non-negative G at t = " + std::to_string(sol.t_at(n)) +
                                         ", r = " + std::to_string(grid.r_at(i)));
            sol.g_grid(n, i) = u[i];
        }
        std::swap(b_old, b_new);
        std::swap(c_old, c_new);
    }

    sol.g_r_grid = Matrix(n_t + 1, n_r);
    for (int n = 0; n <= n_t; ++n) {
        const double* g = sol.g_grid.row_ptr(n);
        double* gr = sol.g_r_grid.row_ptr(n);
        double dr = grid.dr();
        gr[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * dr);
        for (int i = 1; i < n_r - 1; ++i) gr[i] = (g[i + 1] - g[i - 1]) / (2.0 * dr);
        gr[n_r - 1] = (3.0 * g[n_r - 1] - 4.0 * g[n_r - 2] + g[n_r - 3]) / (2.0 * dr);
    }
}

// Independent consistency check: plug the solved F grid into a second-order
// stencil of its equation at the half time levels.  Returns the largest
// absolute residual over interior nodes (skipping `margin` nodes at each
// spatial edge); the value should shrink at the scheme's order under grid
// refinement.
inline double fdm_residual_f(const PdeSolution& sol, const MarketModel& model, int margin = 2) {
    const PdeGrid& grid = sol.grid;
    double dr = grid.dr(), dt = sol.dt_;
    double worst = 0.0;
    for (int n = 0; n < grid.n_t; ++n) {
        double t_mid = 0.5 * (sol.t_at(n) + sol.t_at(n + 1));
        double tau = sol.horizon - t_mid;
        for (int i = std::max(1, margin); i < grid.n_r - std::max(1, margin); ++i) {
            double r = grid.r_at(i);
            double sb = model.sigma_bar(r);
            double s2 = sb * sb;
            double b = model.mu_bar(r) - sb * model.lambda(r) - s2 * tau;
            double phi = 0.5 * s2 * tau * tau - tau * (model.mu_bar(r) - sb * model.lambda(r));
            auto half = [&](int k) {
                return 0.5 * (sol.f_grid(n, k) + sol.f_grid(n + 1, k));
            };
            double f_t = (sol.f_grid(n + 1, i) - sol.f_grid(n, i)) / dt;
            double f_r = (half(i + 1) - half(i - 1)) / (2.0 * dr);
            double f_rr = (half(i + 1) - 2.0 * half(i) + half(i - 1)) / (dr * dr);
            double res = f_t + phi * half(i) + b * f_r + 0.5 * s2 * f_rr;
            worst = std::max(worst, std::abs(res));
        }
    }
    return worst;
}

// Packages the solved grids as a ValueSurface over bilinear samplers.  The
// solution is copied into shared storage so the surface outlives the caller's
// PdeSolution instance.
inline ValueSurface make_surface(const PdeSolution& sol) {
    if (sol.h_grid.empty() || sol.g_grid.empty())
        throw std::runtime_error("make_surface: need reconstruct_h and solve_g first");
    auto shared = std::make_shared<const PdeSolution>(sol);
    ValueSurface v;
    v.h = [shared](double r, double t) { return shared->sample_h(r, t); };
    v.g = [shared](double r, double t) { return shared->sample_g(r, t); };
    v.h_r = [shared](double r, double t) {
        return shared->sample_h(r, t) * shared->sample_h_r_over_h(r, t);
    };
    v.g_r = [shared](double r, double t) { return shared->sample_g_r(r, t); };
    v.provenance = ValueSurface::Provenance::pde_grid;
    return v;
}

}  // namespace mmv
