#pragma once
#include <optional>
#include <string>
#include <vector>

#include "emx/linop.hpp"

namespace emx {

struct SolverOptions {
    int max_iterations = 500;
    double tolerance = 1e-9;  // sign-aligned iterate change
    Index k = 1;
    bool record_trajectory = false;
    bool record_iterates = false;  // keep every X_t in memory (theory probes)

    void validate(Shape shape) const;
};

struct TrajectoryPoint {
    int t = 0;
    double Q = 0.0;      // Rayleigh quotient at X_t
    double delta = 0.0;  // min-over-sign ||X_t -+ X_{t-1}||_F (0 at t=0)
    std::optional<double> error;  // estimation error vs the reference, if given
};

struct SolveReport {
    Matrix final_iterate;  // unit Frobenius norm, matricized also for the power method
    int iterations = 0;
    bool converged = false;
    std::vector<TrajectoryPoint> trajectory;  // t = 0..iterations when recorded
    std::vector<Matrix> iterates;             // only when record_iterates
    double wall_time_s = 0.0;
};

// min over sign s of ||s X - Xref||_F; equals sqrt(2 - 2|<X, Xref>|) for unit inputs.
double estimation_error(const Matrix& X, const Matrix& Xref);

// Q(x) = vec(X)' A vec(X)
double rayleigh(const LinOp& A, const Matrix& X);

// Power iteration interleaved with matricized rank truncation and renormalization.
SolveReport smartpm(const LinOp& A, const Matrix& X0, const SolverOptions& opts,
                    const Matrix* reference = nullptr);

// Vanilla power method; the report matricizes iterates for uniform comparison.
SolveReport power_method(const LinOp& A, const Vector& x0, Shape shape,
                         const SolverOptions& opts, const Matrix* reference = nullptr);

// Initializations: iid normal, its rank-k truncation, and the top eigenmatrix of A
// (dense symmetric eigendecomposition; sign fixed by largest-magnitude entry positive).
Matrix init_random(Shape shape, std::uint64_t seed);
Matrix init_random_rank_k(Shape shape, Index k, std::uint64_t seed);
Matrix init_top_eigenmatrix(const Matrix& A, Shape shape);

std::string report_to_json(const SolveReport& report);

}  // namespace emx
