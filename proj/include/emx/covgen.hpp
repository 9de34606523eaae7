#pragma once
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>

#include "emx/linop.hpp"

namespace emx {

// ---- structured covariance families ----

// Symmetric circulant, first row c_j = r^min(j, d-j); PSD checked via its DFT eigenvalues.
Matrix make_circulant(Index d, double r);

// Kac-Murdock-Szego Toeplitz, Sigma_ij = r^|i-j|, 0 <= r < 1 (r = 0 gives the identity).
Matrix make_toeplitz(Index d, double r);

// M = (B + B')/2 with iid normal B, then M_ii <- sum_j |M_ij| + 1 (strict diagonal dominance).
Matrix make_diag_dominant(Index d, std::uint64_t seed);

// Sigma1 (x) Sigma2 with independent Wishart-style factors G G'/p.
// The top eigenvector is vec of an outer product when read with matricization shape (p2, p1).
Matrix make_kronecker(Index p1, Index p2, std::uint64_t seed);

// G G'/d with dense standard Gaussian G.
Matrix make_general_psd(Index d, std::uint64_t seed);

// Abar = lambda1 * xbar xbar' + Sigma_eps (identity by default; lambda2 = ||Sigma_eps||).
struct SpikedModel {
    double lambda1 = 0.0;
    Matrix Xbar;                        // unit Frobenius norm, rank kbar
    std::optional<Matrix> noise_cov;    // nullopt = identity
    Matrix assemble() const;            // dense Abar
};
SpikedModel make_spiked(double lambda1, Matrix Xbar, std::optional<Matrix> noise = std::nullopt);

// Unit-Frobenius product of p1 x kbar and kbar x p2 iid uniform(-1,1) factors.
Matrix random_rank_k_eigenmatrix(Shape shape, Index kbar, std::uint64_t seed);

// ---- sampling ----

// n x d rows y_i = M z_i with M M' = cov (robust LDLT factorization; diagonal jitter 1e-12
// retry on failure). Row i draws from an independent stream keyed by (seed, i), so rows are
// reproducible regardless of evaluation order.
Matrix sample_gaussian(const Matrix& cov, Index n, std::uint64_t seed);

// Spiked-model fast path: y = z + (sqrt(lambda1+1)-1)(xbar'z) xbar, exactly N(0, Abar) for
// identity noise, O(n d) instead of a dense factorization.
Matrix sample_spiked(double lambda1, const Vector& xbar, Index n, std::uint64_t seed);

// Uncentered second-moment matrix (1/n) sum y_i y_i'.
Matrix empirical_cov(const Matrix& samples);

// ---- declarative spec ----

struct CovarianceSpec {
    std::string family;  // circulant | toeplitz | diag_dominant | kronecker | general_psd | spiked
    Index d = 0;
    Shape shape{0, 0};  // kronecker factor sizes (p1, p2); d = p1 * p2
    double r = 0.0;     // circulant / toeplitz decay
    double lambda1 = 0.0;
    Index kbar = 1;
    std::uint64_t seed = 0;

    static CovarianceSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;
};

Matrix build_covariance(const CovarianceSpec& spec);

// ---- scalable sampled-covariance spectra ----

// In-place application of a factor L with Sigma = L L'.
struct CovSqrtOp {
    Index d = 0;
    std::function<void(Vector&)> apply_L;
    std::function<void(Vector&)> apply_Lt;
};

CovSqrtOp toeplitz_sqrt_op(Index d, double r);  // analytic AR(1) Cholesky, O(d) apply
CovSqrtOp dense_sqrt_op(std::shared_ptr<const Eigen::MatrixXf> L);
CovSqrtOp spiked_sqrt_op(double lambda1, std::shared_ptr<const Vector> xbar);
CovSqrtOp kronecker_sqrt_op(std::shared_ptr<const Matrix> L1, std::shared_ptr<const Matrix> L2);

// Empirical covariance of n Gaussian draws as an operator, without forming samples:
// A = (1/n) L T T' L' with T a Bartlett factor of the white Wishart (float32 storage).
class SampledCovOp {
   public:
    SampledCovOp(CovSqrtOp sqrt_op, Index n, std::uint64_t seed);
    LinOp as_linop() const;
    Index dim() const { return sqrt_.d; }

   private:
    CovSqrtOp sqrt_;
    Index n_;
    std::shared_ptr<Eigen::MatrixXf> T_;
};

// Top eigenpair of the empirical covariance of n draws from the family.
// Small d uses dense sample + eigendecomposition; large d uses the factored operator
// (identical sampling distribution) with Lanczos.
EigPair sampled_top_eigenpair(const CovarianceSpec& spec, Index n, std::uint64_t seed);

// Top eigenpair of the population covariance (dense eigendecomposition; kronecker and
// spiked families use their exact eigenstructure instead).
EigPair population_top_eigenpair(const CovarianceSpec& spec);

}  // namespace emx
