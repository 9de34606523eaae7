#include "emx/linop.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "emx/errors.hpp"
#include "emx/rng.hpp"

namespace emx {

LinOp LinOp::dense(std::shared_ptr<const Matrix> A) {
    if (!A || A->rows() != A->cols()) throw ShapeError("LinOp::dense: matrix must be square");
    LinOp op;
    op.d_ = A->rows();
    op.dense_ = std::move(A);
    auto held = op.dense_;
    op.fn_ = [held](const Vector& in, Vector& out) { out.noalias() = (*held) * in; };
    op.check_symmetry();
    return op;
}

LinOp LinOp::callable(Index d, ApplyFn fn) {
    if (d < 1) throw ShapeError("LinOp::callable: dimension must be >= 1");
    LinOp op;
    op.d_ = d;
    op.fn_ = std::move(fn);
    return op;
}

const Matrix& LinOp::dense_matrix() const {
    if (!dense_) throw ParameterError("LinOp: no dense matrix held by a callable operator");
    return *dense_;
}

Vector LinOp::apply(const Vector& x) const {
    Vector out(d_);
    apply(x, out);
    return out;
}

void LinOp::apply(const Vector& x, Vector& out) const {
    if (x.size() != d_) throw ShapeError("LinOp::apply: vector length mismatch");
    out.resize(d_);
    fn_(x, out);
}

void LinOp::check_symmetry(int probes, double tol, std::uint64_t seed) const {
    auto eng = make_engine(derive_seed(seed, 0x57u));
    std::normal_distribution<double> gauss;
    Vector u(d_), v(d_), Au(d_), Av(d_);
    for (int t = 0; t < probes; ++t) {
        for (Index i = 0; i < d_; ++i) u(i) = gauss(eng);
        for (Index i = 0; i < d_; ++i) v(i) = gauss(eng);
        apply(u, Au);
        apply(v, Av);
        const double a = Au.dot(v), b = u.dot(Av);
        if (std::abs(a - b) > tol * (std::abs(a) + std::abs(b) + 1.0))
            throw NumericalError("operator failed the symmetry probe: <Au,v>=" +
                                 std::to_string(a) + " vs <u,Av>=" + std::to_string(b));
    }
}

EigPair lanczos_extremal(const LinOp& A, const LanczosOptions& opts) {
    const Index d = A.dim();
    const int m_cap = static_cast<int>(std::min<Index>(opts.max_steps, d));

    auto eng = make_engine(derive_seed(opts.seed, 0x1a));
    std::normal_distribution<double> gauss;
    Vector v(d);
    for (Index i = 0; i < d; ++i) v(i) = gauss(eng);
    v.normalize();

    Matrix basis(d, m_cap);
    std::vector<double> alpha, beta;  // tridiagonal entries; beta[j] couples j and j+1
    basis.col(0) = v;
    Vector w(d);

    auto ritz_pair = [&](int m, double* resid_out) -> EigPair {
        Matrix T = Matrix::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            T(i, i) = alpha[i];
            if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(T);
        const auto& vals = es.eigenvalues();
        Index pick = 0;
        if (opts.want_algebraic_max) {
            pick = m - 1;  // ascending order
        } else {
            pick = std::abs(vals(0)) > std::abs(vals(m - 1)) ? 0 : m - 1;
        }
        EigPair out;
        out.value = vals(pick);
        Vector s = es.eigenvectors().col(pick);
        const double beta_last = (static_cast<size_t>(m) <= beta.size() && m >= 1)
                                     ? beta[m - 1] * std::abs(s(m - 1))
                                     : 0.0;
        if (resid_out) *resid_out = beta_last;
        out.vector = basis.leftCols(m) * s;
        out.vector.normalize();
        return out;
    };

    double last_resid = std::numeric_limits<double>::infinity();
    int m = 0;
    for (int j = 0; j < m_cap; ++j) {
        A.apply(basis.col(j), w);
        const double a = basis.col(j).dot(w);
        alpha.push_back(a);
        w -= a * basis.col(j);
        if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
        // full reorthogonalization, twice for safety
        for (int pass = 0; pass < 2; ++pass)
            w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
        const double b = w.norm();
        m = j + 1;
        if (b < 1e-14) {  // happy breakdown: exact invariant subspace
            beta.push_back(0.0);
            last_resid = 0.0;
            break;
        }
        beta.push_back(b);
        if (j + 1 < m_cap) basis.col(j + 1) = w / b;
        // convergence check every few steps once the subspace is non-trivial
        if (m >= 4 && (m % 5 == 0 || m == m_cap)) {
            double resid = 0.0;
            EigPair cand = ritz_pair(m, &resid);
            last_resid = resid;
            if (resid <= opts.tol * std::max(std::abs(cand.value), 1e-300)) return cand;
        }
    }
    double resid = 0.0;
    EigPair cand = ritz_pair(m, &resid);
    if (m >= static_cast<int>(d)) return cand;  // exhausted the space: exact
    if (resid <= opts.tol * std::max(std::abs(cand.value), 1e-300)) return cand;
    throw NumericalError("lanczos_extremal: no convergence after " + std::to_string(m) +
                         " steps (residual " + std::to_string(resid) + ", ritz value " +
                         std::to_string(cand.value) + ")");
}

double spectral_norm(const LinOp& A) {
    if (A.dim() == 1) {
        Vector e(1);
        e(0) = 1.0;
        return std::abs(A.apply(e)(0));
    }
    LanczosOptions opts;
    opts.tol = 1e-9;
    opts.max_steps = 500;
    const double v = std::abs(lanczos_extremal(A, opts).value);
    return v;
}

double spectral_norm(const Matrix& A) {
    if (A.rows() != A.cols()) throw ShapeError("spectral_norm: matrix must be square");
    if ((A - A.transpose()).cwiseAbs().maxCoeff() >
        1e-8 * (A.cwiseAbs().maxCoeff() + 1.0))
        throw ShapeError("spectral_norm: matrix must be symmetric");
    return spectral_norm(LinOp::dense(std::make_shared<const Matrix>(A)));
}

}  // namespace emx
