#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mmv {

// Gauss-Legendre nodes and weights on [-1, 1].
//
// Nodes are the roots of the Legendre polynomial P_n, found by Newton's
// method from the Chebyshev-based initial guess; weights follow from the
// standard formula w_i = 2 / ((1 - x_i^2) P_n'(x_i)^2).  For the node
// counts used here (<= 128) the roots converge to machine precision in a
// handful of iterations.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline QuadratureRule gauss_legendre_rule(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre_rule: need at least one node");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int m = (n + 1) / 2;  // roots come in +/- pairs
    for (int i = 0; i < m; ++i) {
        // Initial guess: Chebyshev-like approximation to the i-th root.
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.weights[i] = w;
        rule.nodes[n - 1 - i] = x;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

// Integrate f over [a, b] with a single n-node Gauss-Legendre panel.
template <typename F>
double gauss_legendre(F&& f, double a, double b, const QuadratureRule& rule) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return half * acc;
}

template <typename F>
double gauss_legendre(F&& f, double a, double b, int n = 64) {
    return gauss_legendre(std::forward<F>(f), a, b, gauss_legendre_rule(n));
}

}  // namespace mmv
