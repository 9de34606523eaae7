#include "emx/tensorops.hpp"

#include <Eigen/Dense>

#include "emx/errors.hpp"
#include "emx/rng.hpp"

namespace emx {

Matrix matricize(const Vector& x, Shape shape) {
    if (x.size() != shape.d())
        throw ShapeError("matricize: vector length " + std::to_string(x.size()) +
                         " does not match shape " + std::to_string(shape.p1) + "x" +
                         std::to_string(shape.p2));
    // Eigen is column-major, so the reshape is exactly the Definition-2 index map.
    return Eigen::Map<const Matrix>(x.data(), shape.p1, shape.p2);
}

Vector vectorize(const Matrix& X) {
    return Eigen::Map<const Vector>(X.data(), X.size());
}

double frobenius_inner(const Matrix& X, const Matrix& Y) {
    if (X.rows() != Y.rows() || X.cols() != Y.cols())
        throw ShapeError("frobenius_inner: mismatched shapes");
    return (X.array() * Y.array()).sum();
}

Index numerical_rank(const Matrix& X, double tol) {
    Eigen::JacobiSVD<Matrix> svd(X);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) <= 0.0) return 0;
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > tol * s(0)) ++r;
    return r;
}

namespace {

// Largest-magnitude entry of each kept left vector made positive; compensating sign on the
// right vector. Ties broken by the first such entry, so output is deterministic.
void fix_signs(Matrix& U, Matrix& V) {
    for (Index j = 0; j < U.cols(); ++j) {
        Index imax = 0;
        U.col(j).cwiseAbs().maxCoeff(&imax);
        if (U(imax, j) < 0.0) {
            U.col(j) = -U.col(j);
            V.col(j) = -V.col(j);
        }
    }
}

}  // namespace

Matrix rank_truncate(const Matrix& X, Index k) {
    const Index kmax = std::min(X.rows(), X.cols());
    if (k < 1 || k > kmax)
        throw ParameterError("rank_truncate: k = " + std::to_string(k) + " outside [1, " +
                             std::to_string(kmax) + "]");
    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
        throw NumericalError("rank_truncate: SVD did not converge on a " +
                             std::to_string(X.rows()) + "x" + std::to_string(X.cols()) +
                             " input");
    Matrix U = svd.matrixU().leftCols(k);
    Matrix V = svd.matrixV().leftCols(k);
    fix_signs(U, V);
    return U * svd.singularValues().head(k).asDiagonal() * V.transpose();
}

Vector rank_truncate_vec(const Vector& x, Shape shape, Index k) {
    return vectorize(rank_truncate(matricize(x, shape), k));
}

void ProjectionPair::validate(double tol) const {
    if (U.cols() != V.cols()) throw ShapeError("ProjectionPair: U and V rank mismatch");
    const Index k = U.cols();
    const double du = (U.transpose() * U - Matrix::Identity(k, k)).cwiseAbs().maxCoeff();
    const double dv = (V.transpose() * V - Matrix::Identity(k, k)).cwiseAbs().maxCoeff();
    if (du > tol || dv > tol)
        throw ShapeError("ProjectionPair: factors not orthonormal (deviation " +
                         std::to_string(std::max(du, dv)) + ")");
}

ProjectionPair ProjectionPair::from_top_singular(const Matrix& X, Index k) {
    const Index kmax = std::min(X.rows(), X.cols());
    if (k < 1 || k > kmax) throw ParameterError("from_top_singular: k out of range");
    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Matrix U = svd.matrixU().leftCols(k);
    Matrix V = svd.matrixV().leftCols(k);
    fix_signs(U, V);
    return ProjectionPair{std::move(U), std::move(V)};
}

ProjectionPair ProjectionPair::random(Shape shape, Index k, std::uint64_t seed) {
    if (k < 1 || k > std::min(shape.p1, shape.p2))
        throw ParameterError("ProjectionPair::random: k out of range");
    auto eng = make_engine(derive_seed(seed, 0x9a17));
    std::normal_distribution<double> gauss;
    Matrix GU(shape.p1, k), GV(shape.p2, k);
    for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < shape.p1; ++i) GU(i, j) = gauss(eng);
    for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < shape.p2; ++i) GV(i, j) = gauss(eng);
    Eigen::HouseholderQR<Matrix> qu(GU), qv(GV);
    Matrix U = qu.householderQ() * Matrix::Identity(shape.p1, k);
    Matrix V = qv.householderQ() * Matrix::Identity(shape.p2, k);
    return ProjectionPair{std::move(U), std::move(V)};
}

ProjectionPair ProjectionPair::from_span(const Matrix& Ucols, const Matrix& Vcols, double tol) {
    auto orth = [tol](const Matrix& M) {
        Eigen::ColPivHouseholderQR<Matrix> qr(M);
        qr.setThreshold(tol);
        const Index r = qr.rank();
        Matrix Q = qr.householderQ() * Matrix::Identity(M.rows(), std::max<Index>(r, 1));
        return Q;
    };
    Matrix U = orth(Ucols);
    Matrix V = orth(Vcols);
    // equalize ranks so the pair stays rectangular-consistent
    const Index k = std::min(U.cols(), V.cols());
    return ProjectionPair{U.leftCols(k), V.leftCols(k)};
}

Vector project_kron_vec(const ProjectionPair& pair, const Vector& y) {
    const Shape s = pair.shape();
    if (y.size() != s.d()) throw ShapeError("project_kron_vec: vector/pair shape mismatch");
    Eigen::Map<const Matrix> Y(y.data(), s.p1, s.p2);
    // P_U Y P_V with P = QQ' applied in factored form
    Matrix M = pair.U * (pair.U.transpose() * Y * pair.V) * pair.V.transpose();
    return vectorize(M);
}

Matrix project_kron(const Matrix& A, const ProjectionPair& pair) {
    const Shape s = pair.shape();
    if (A.rows() != A.cols() || A.rows() != s.d())
        throw ShapeError("project_kron: matrix/pair shape mismatch");
    const Index d = A.rows();
    Matrix PA(d, d);
    for (Index j = 0; j < d; ++j) PA.col(j) = project_kron_vec(pair, A.col(j));
    // A and P symmetric: P A P = P (P A)'
    Matrix PAt = PA.transpose();
    Matrix out(d, d);
    for (Index j = 0; j < d; ++j) out.col(j) = project_kron_vec(pair, PAt.col(j));
    return 0.5 * (out + out.transpose());  // kill round-off asymmetry
}

}  // namespace emx
