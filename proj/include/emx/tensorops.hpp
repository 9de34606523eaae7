#pragma once
#include <Eigen/Core>

#include "emx/shape.hpp"

namespace emx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Column-major reshape: result(i, j) = x[j*p1 + i] (0-based; 1-based X_{i,j} = x_{(j-1)p1+i}).
Matrix matricize(const Vector& x, Shape shape);

// Inverse of matricize: stacks columns. Pure index permutation, bit-exact round trip.
Vector vectorize(const Matrix& X);

// Frobenius inner product via the vector identity <X,Y> = vec(X)' vec(Y).
double frobenius_inner(const Matrix& X, const Matrix& Y);

// Count of singular values > tol * sigma_1.
Index numerical_rank(const Matrix& X, double tol = 1e-10);

// Best rank-k Frobenius approximation (truncated SVD). Deterministic output: each kept
// left singular vector is sign-fixed so its largest-magnitude entry is positive, with the
// compensating sign applied to the right vector.
Matrix rank_truncate(const Matrix& X, Index k);

// vectorize . rank_truncate . matricize
Vector rank_truncate_vec(const Vector& x, Shape shape, Index k);

// Orthonormal factor pair (U: p1 x k, V: p2 x k) defining the projector P_V (x) P_U.
struct ProjectionPair {
    Matrix U;
    Matrix V;

    Index k() const { return U.cols(); }
    Shape shape() const { return Shape{U.rows(), V.rows()}; }
    // Orthonormality within tol; throws ShapeError on violation.
    void validate(double tol = 1e-10) const;
    // Top-k singular factors of X, sign-fixed like rank_truncate.
    static ProjectionPair from_top_singular(const Matrix& X, Index k);
    static ProjectionPair random(Shape shape, Index k, std::uint64_t seed);
    // Orthonormal basis of the concatenated columns (rank may drop below the column count).
    static ProjectionPair from_span(const Matrix& Ucols, const Matrix& Vcols, double tol = 1e-12);
};

// Projection of a vector: vec(P_U mat(y) P_V), never materializing the d x d projector.
Vector project_kron_vec(const ProjectionPair& pair, const Vector& y);

// P_{V(x)U} A P_{V(x)U} materialized as a dense d x d matrix (columns projected matrix-free).
Matrix project_kron(const Matrix& A, const ProjectionPair& pair);

}  // namespace emx
