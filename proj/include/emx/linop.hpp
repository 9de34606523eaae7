#pragma once
#include <functional>
#include <memory>

#include "emx/tensorops.hpp"

namespace emx {

// Symmetric linear operator on R^d: dense matrix or callable form.
class LinOp {
   public:
    using ApplyFn = std::function<void(const Vector& in, Vector& out)>;

    LinOp() = default;

    // Dense form keeps a shared handle; symmetry is probed on construction.
    static LinOp dense(std::shared_ptr<const Matrix> A);
    static LinOp dense(Matrix A) { return dense(std::make_shared<const Matrix>(std::move(A))); }

    // Callable form; symmetry checked on demand via check_symmetry().
    static LinOp callable(Index d, ApplyFn fn);

    Index dim() const { return d_; }
    bool is_dense() const { return dense_ != nullptr; }
    const Matrix& dense_matrix() const;

    Vector apply(const Vector& x) const;
    void apply(const Vector& x, Vector& out) const;

    // |<Au,v> - <u,Av>| <= tol * (|<Au,v>| + |<u,Av>| + 1) on seeded random probes.
    void check_symmetry(int probes = 4, double tol = 1e-8, std::uint64_t seed = 0x5eed) const;

   private:
    Index d_ = 0;
    ApplyFn fn_;
    std::shared_ptr<const Matrix> dense_;
};

struct EigPair {
    double value = 0.0;
    Vector vector;
};

struct LanczosOptions {
    int max_steps = 400;
    double tol = 1e-9;           // residual / |theta| stopping
    std::uint64_t seed = 0x1a2b3c4dULL;
    bool want_algebraic_max = false;  // default: extremal in absolute value
};

// Lanczos with full reorthogonalization; returns the extremal Ritz pair.
// Throws NumericalError if the residual target is not met within max_steps.
EigPair lanczos_extremal(const LinOp& A, const LanczosOptions& opts = {});

// rho(A) = max(|lambda_max|, |lambda_min|) within 1e-8 relative.
double spectral_norm(const LinOp& A);
double spectral_norm(const Matrix& A);

}  // namespace emx
