#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mmv {

// Thomas algorithm for a tridiagonal system
//   lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i],  i = 0..n-1,
// with lower[0] and upper[n-1] ignored.  Scratch buffers are reused between
// calls when the solver object is kept alive, which matters inside the
// time-marching loop (one solve per step).
class TridiagonalSolver {
public:
    // Solves in place: rhs is overwritten with the solution.
    void solve(const std::vector<double>& lower, const std::vector<double>& diag,
               const std::vector<double>& upper, std::vector<double>& rhs) {
        const std::size_t n = diag.size();
        if (lower.size() != n || upper.size() != n || rhs.size() != n)
            throw std::invalid_argument("TridiagonalSolver: band/rhs size mismatch");
        if (n == 0) return;
        scratch_.resize(n);
        double den = diag[0];
        if (den == 0.0) throw std::runtime_error("TridiagonalSolver: zero pivot at row 0");
        scratch_[0] = upper[0] / den;
        rhs[0] /= den;
        for (std::size_t i = 1; i < n; ++i) {
            den = diag[i] - lower[i] * scratch_[i - 1];
            if (den == 0.0) throw std::runtime_error("TridiagonalSolver: zero pivot");
            scratch_[i] = upper[i] / den;
            rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / den;
        }
        for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= scratch_[i] * rhs[i + 1];
    }

private:
    std::vector<double> scratch_;
};

}  // namespace mmv
