#pragma once
#include <nlohmann/json_fwd.hpp>
#include <utility>
#include <vector>

#include "emx/linop.hpp"
#include "emx/solver.hpp"
#include "emx/tensorops.hpp"

namespace emx {

// Convergence constants of the rank-truncated power iteration.
struct TheoremConstants {
    double lambda = 0.0;    // top eigenvalue
    double gap = 0.0;       // eigen-gap
    double rho_euv = 0.0;   // projected noise norm
    double kappa = 0.0;     // gap / rho_euv
    double gamma = 0.0;     // (lambda - gap + rho) / (lambda - rho)
    double delta = 0.0;     // sqrt(2) / sqrt(1 + (kappa - 2)^2)
    double theta = 0.0;
    double mu = 0.0;        // sqrt(1 + 2(sqrt(kbar/k) + kbar/k)) * sqrt(1 - theta(1+theta)(1-gamma^2)/2)
    Index kbar = 0;
    Index k = 0;
    bool kappa_ok = false;  // kappa > 2
    bool mu_ok = false;     // mu < 1
    bool hypothesis_ok = false;
    nlohmann::json to_json() const;
};

TheoremConstants theorem_constants(double lambda, double gap, double rho_euv,
                                   Index k, Index kbar, double theta);

// (top eigenvalue, top eigenvalue minus the largest remaining magnitude).
std::pair<double, double> eigen_gap(const Matrix& A);

// rho(P E P) with P the Kronecker projector of the pair, computed matrix-free:
// project, apply, project, with a Krylov extremal-eigenvalue solve on top.
double projected_noise_norm(const LinOp& E, const ProjectionPair& pair);
double projected_noise_norm(const Matrix& E, const ProjectionPair& pair);

// Exact small-space evaluation: max |eig| of W' E W with W = V (x) U (k^2 columns).
double projected_noise_norm_exact(const Matrix& E, const ProjectionPair& pair);

// Max of the exact projected norm over pairs drawn from the iterates of a run (plus the
// reference eigenmatrix and n_random random pairs) — a sampled stand-in for the
// universally quantified noise norm.
double rho_sampled_max(const Matrix& E, Shape shape, Index k, const std::vector<Matrix>& iterates,
                       const Matrix& Xbar, int n_random, std::uint64_t seed);

// Ratio rho(E_UV)/rho(E) for Gaussian symmetric E and random orthonormal pairs, per k.
struct ScalingRow {
    Index k = 0;
    double mean_ratio = 0.0;        // two-sided projector P_{V (x) U}
    double std_ratio = 0.0;
    double mean_ratio_single = 0.0; // diagnostic: one-sided projector I (x) P_U
};
struct ScalingProbeResult {
    std::vector<ScalingRow> rows;
    double slope = 0.0;         // fitted d log(mean ratio) / d log(k)
    double slope_single = 0.0;  // same fit for the one-sided diagnostic
    nlohmann::json to_json() const;
};
ScalingProbeResult lemma1_scaling_probe(Index p, const std::vector<Index>& k_values, int trials,
                                        std::uint64_t seed);

// Rayleigh-quotient monotonicity along a recorded run. If iterates and an operator are
// supplied, Q is recomputed from them; otherwise the trajectory's recorded Q is used.
struct MonotonicityReport {
    bool ok = false;
    Index first_violation = -1;
    nlohmann::json to_json() const;
};
MonotonicityReport check_monotonicity(const SolveReport& report, const LinOp* A = nullptr);

// Per-eigenvector singular-value flatness of a symmetric matrix's eigenbasis.
struct FlatnessRow {
    Index index = 0;
    double eigenvalue = 0.0;
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    double flatness = 0.0;  // p * sigma_max^2; ~1 for flat spectra, ~p for rank-1
};
struct Assumption2Report {
    std::vector<FlatnessRow> rows;
    double median_flatness = 0.0;
    nlohmann::json to_json() const;
};
Assumption2Report check_assumption2(const Matrix& E, Shape shape);

// Contraction of s_t = sqrt(1 - |<X_t, Xbar>|) against mu^t s_0 + sqrt(10) delta/(1-mu),
// plus the per-step variant s_t <= mu s_{t-1} + sqrt(10) delta.
struct ContractionReport {
    bool hypotheses_met = false;  // mu < 1 and |<X0, Xbar>| >= theta + delta
    bool vacuous = false;         // s_0 already below the additive floor
    bool cumulative_ok = false;
    bool per_step_ok = false;
    Index first_violation = -1;
    Index first_per_step_violation = -1;
    double inner0 = 0.0;
    double floor = 0.0;  // sqrt(10) delta / (1 - mu)
    nlohmann::json to_json() const;
};
ContractionReport check_contraction(const SolveReport& report, const TheoremConstants& constants);

// Alignment loss of one rank truncation: |RankTrunc(y,k)' xbar| vs
// |y' xbar| - f * min[sqrt(1 - a^2), (1 + f)(1 - a^2)]. The appendix reading uses
// f = sqrt(kbar/k); the main-text transcription uses its inverse. Both are reported.
struct RankTruncCheck {
    bool ok_appendix = false;
    bool ok_maintext = false;
    double lhs = 0.0;
    double rhs_appendix = 0.0;
    double rhs_maintext = 0.0;
    double inner_before = 0.0;
    nlohmann::json to_json() const;
};
RankTruncCheck check_rank_trunc_error(const Vector& y, const Matrix& Xbar, Index k);

// Projected-operator perturbation conclusions: eigenvalue-ratio bound gamma and
// eigenvector distance bound delta on the compressed operator W'(Abar + E)W.
struct PerturbationReport {
    bool hypotheses_met = false;  // P_U Xbar P_V = Xbar within 1e-9 and kappa > 2
    double kappa = 0.0;
    double gamma_bound = 0.0;
    double delta_bound = 0.0;
    double measured_ratio = 0.0;
    double eigvec_distance = 0.0;
    bool gamma_ok = false;
    bool delta_ok = false;
    nlohmann::json to_json() const;
};
PerturbationReport check_perturbation(const Matrix& Abar, const Matrix& E, const ProjectionPair& pair);

// One power step on a symmetric operator improves alignment with its top eigenvector:
// |x1' (My/||My||)| >= |x1' y| (1 + (1 - gamma^2)(1 - (x1' y)^2) / 2).
struct PowerStepCheck {
    bool ok = false;
    double lhs = 0.0;
    double rhs = 0.0;
    double gamma_measured = 0.0;
    nlohmann::json to_json() const;
};
PowerStepCheck check_power_step(const Matrix& M, const Vector& y);

}  // namespace emx
