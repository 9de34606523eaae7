#include <Eigen/Dense>
#include <random>
#include <unsupported/Eigen/KroneckerProduct>

#include "doctest.h"
#include "emx/errors.hpp"
#include "emx/rng.hpp"
#include "emx/tensorops.hpp"

using namespace emx;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    auto eng = make_engine(seed);
    std::normal_distribution<double> dist;
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) M(i, j) = dist(eng);
    return M;
}

Vector random_vector(Index n, std::uint64_t seed) {
    auto eng = make_engine(seed);
    std::normal_distribution<double> dist;
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = dist(eng);
    return v;
}

}  // namespace

TEST_CASE("matricize: column-major index law on small examples") {
    Vector x(4);
    x << 1, 2, 3, 4;
    Matrix X = matricize(x, Shape{2, 2});
    Matrix want(2, 2);
    want << 1, 3, 2, 4;
    CHECK(X == want);

    Vector s(1);
    s << 5;
    CHECK(matricize(s, Shape{1, 1})(0, 0) == 5.0);
}

TEST_CASE("matricize: geometric vector gives a rank-1 matrix") {
    Vector x(4);
    x << 1, 2, 4, 8;  // (1, r, r^2, r^3) with r = 2
    Matrix X = matricize(x, Shape{2, 2});
    Matrix want(2, 2);
    want << 1, 4, 2, 8;
    CHECK(X == want);
    CHECK(numerical_rank(X) == 1);
}

TEST_CASE("matricize: index law exhaustively for p1, p2 <= 5") {
    for (Index p1 = 1; p1 <= 5; ++p1) {
        for (Index p2 = 1; p2 <= 5; ++p2) {
            Vector x = random_vector(p1 * p2, derive_seed(11, p1, p2));
            Matrix X = matricize(x, Shape{p1, p2});
            for (Index j = 1; j <= p2; ++j)
                for (Index i = 1; i <= p1; ++i)
                    CHECK(X(i - 1, j - 1) == x[(j - 1) * p1 + i - 1]);
        }
    }
}

TEST_CASE("matricize: length mismatch throws") {
    Vector x = random_vector(5, 1);
    CHECK_THROWS_AS(matricize(x, Shape{2, 2}), ShapeError);
}

TEST_CASE("vectorize: column stacking and bit-exact round trips") {
    Matrix X(2, 2);
    X << 1, 3, 2, 4;
    Vector v = vectorize(X);
    Vector want(4);
    want << 1, 2, 3, 4;
    CHECK(v == want);

    for (std::uint64_t s = 0; s < 8; ++s) {
        Shape shape{Index(1 + s % 5), Index(1 + (3 * s) % 7)};
        Vector x = random_vector(shape.d(), derive_seed(21, s));
        CHECK(vectorize(matricize(x, shape)) == x);  // exact, pure reindexing
        Matrix M = random_matrix(shape.p1, shape.p2, derive_seed(22, s));
        CHECK(matricize(vectorize(M), shape) == M);
    }
}

TEST_CASE("frobenius inner product equals the vectorized dot product exactly") {
    for (std::uint64_t s = 0; s < 6; ++s) {
        Matrix X = random_matrix(4, 3, derive_seed(31, s));
        Matrix Y = random_matrix(4, 3, derive_seed(32, s));
        double direct = (X.array() * Y.array()).sum();
        CHECK(frobenius_inner(X, Y) == vectorize(X).dot(vectorize(Y)));
        CHECK(frobenius_inner(X, Y) == doctest::Approx(direct).epsilon(1e-14));
    }
    Matrix X = random_matrix(3, 3, 7);
    CHECK_THROWS_AS(frobenius_inner(X, random_matrix(3, 2, 8)), ShapeError);
}

TEST_CASE("kronecker identity: (V (x) U) vec(X) = vec(U X V')") {
    // The matricization convention is exactly the one that turns Kronecker
    // products into two-sided multiplications.
    auto eng = make_engine(99);
    Index p1 = 3, p2 = 4, q1 = 5, q2 = 2;
    Matrix U = random_matrix(q1, p1, 41);
    Matrix V = random_matrix(q2, p2, 42);
    Matrix X = random_matrix(p1, p2, 43);
    Matrix K = Eigen::kroneckerProduct(V, U).eval();
    Vector lhs = K * vectorize(X);
    Vector rhs = vectorize((U * X * V.transpose()).eval());
    CHECK((lhs - rhs).norm() < 1e-12 * rhs.norm());
    (void)eng;
}

TEST_CASE("rank_truncate: fixed points and diagonal truncation") {
    Matrix I2 = Matrix::Identity(2, 2);
    CHECK((rank_truncate(I2, 2) - I2).norm() < 1e-14);

    Matrix D(2, 2);
    D << 3, 0, 0, 1;
    Matrix want(2, 2);
    want << 3, 0, 0, 0;
    CHECK((rank_truncate(D, 1) - want).norm() < 1e-12);

    Matrix R1(2, 2);
    R1 << 1, 4, 2, 8;
    CHECK((rank_truncate(R1, 1) - R1).norm() < 1e-12 * R1.norm());
}

TEST_CASE("rank_truncate: oracle against a full SVD") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        Index p1 = 6, p2 = 5;
        Matrix X = random_matrix(p1, p2, derive_seed(51, s));
        Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
        for (Index k = 1; k <= std::min(p1, p2); ++k) {
            Matrix T = rank_truncate(X, k);
            // Reconstruction matches the top-k SVD expansion.
            Matrix want = svd.matrixU().leftCols(k) *
                          svd.singularValues().head(k).asDiagonal() *
                          svd.matrixV().leftCols(k).transpose();
            CHECK((T - want).norm() < 1e-10 * X.norm());
            // Discarded energy = sum of squared dropped singular values.
            double dropped = svd.singularValues().tail(std::min(p1, p2) - k).squaredNorm();
            CHECK((X - T).squaredNorm() ==
                  doctest::Approx(dropped).epsilon(1e-9).scale(X.squaredNorm()));
            CHECK(numerical_rank(T) <= k);
            // Idempotence.
            CHECK((rank_truncate(T, k) - T).norm() < 1e-10 * (T.norm() + 1));
        }
    }
}

TEST_CASE("rank_truncate: Eckart-Young against random rank-k competitors") {
    auto eng = make_engine(0xec);
    Matrix X = random_matrix(5, 4, 61);
    Index k = 2;
    Matrix T = rank_truncate(X, k);
    double best = (X - T).norm();
    for (int trial = 0; trial < 1000; ++trial) {
        Matrix B = random_matrix(5, k, derive_seed(62, trial)) *
                   random_matrix(k, 4, derive_seed(63, trial));
        B *= T.norm() / B.norm();  // matching norm
        CHECK((X - B).norm() >= best - 1e-12);
    }
    (void)eng;
}

TEST_CASE("rank_truncate: parameter validation") {
    Matrix X = random_matrix(3, 4, 71);
    CHECK_THROWS_AS(rank_truncate(X, 0), ParameterError);
    CHECK_THROWS_AS(rank_truncate(X, 4), ParameterError);
    CHECK_THROWS_AS(rank_truncate_vec(random_vector(12, 72), Shape{3, 4}, 0), ParameterError);
}

TEST_CASE("rank_truncate: deterministic sign convention") {
    Matrix X = random_matrix(5, 5, 81);
    Matrix A = rank_truncate(X, 3), B = rank_truncate(X, 3);
    CHECK(A == B);
    ProjectionPair pair = ProjectionPair::from_top_singular(X, 3);
    for (Index c = 0; c < 3; ++c) {
        Index where;
        pair.U.col(c).cwiseAbs().maxCoeff(&where);
        CHECK(pair.U(where, c) > 0.0);
    }
}

TEST_CASE("rank_truncate_vec: composition contracts") {
    Vector u = random_vector(4, 91), v = random_vector(3, 92);
    Vector outer = vectorize((u * v.transpose()).eval());
    CHECK((rank_truncate_vec(outer, Shape{4, 3}, 1) - outer).norm() < 1e-12 * outer.norm());

    Vector diagvec(4);
    diagvec << 3, 0, 0, 1;
    Vector want(4);
    want << 3, 0, 0, 0;
    CHECK((rank_truncate_vec(diagvec, Shape{2, 2}, 1) - want).norm() < 1e-12);

    Vector x = random_vector(12, 93);
    CHECK((rank_truncate_vec(x, Shape{4, 3}, 3) - x).norm() < 1e-10 * x.norm());
}

TEST_CASE("numerical_rank: thresholded singular-value count") {
    Matrix Z = Matrix::Zero(3, 3);
    CHECK(numerical_rank(Z) == 0);
    CHECK(numerical_rank(Matrix::Identity(4, 4)) == 4);
    Matrix D = Vector::LinSpaced(4, 1, 4).asDiagonal();
    D(0, 0) = 1e-14;  // below 1e-10 * sigma_1
    CHECK(numerical_rank(D) == 3);
    CHECK(numerical_rank(D, 1e-16) == 4);
}

TEST_CASE("ProjectionPair: validation and constructors") {
    ProjectionPair pair = ProjectionPair::random(Shape{6, 5}, 3, 0xAB);
    CHECK_NOTHROW(pair.validate());
    CHECK((pair.U.transpose() * pair.U - Matrix::Identity(3, 3)).norm() < 1e-10);
    CHECK((pair.V.transpose() * pair.V - Matrix::Identity(3, 3)).norm() < 1e-10);
    CHECK(pair.k() == 3);
    CHECK(pair.shape().p1 == 6);
    CHECK(pair.shape().p2 == 5);

    ProjectionPair bad = pair;
    bad.U *= 2.0;
    CHECK_THROWS_AS(bad.validate(), ShapeError);

    // from_top_singular spans the truncation: P_U X P_V' = RankTrunc(X, k).
    Matrix X = random_matrix(6, 5, 0xAC);
    ProjectionPair top = ProjectionPair::from_top_singular(X, 2);
    Matrix proj = top.U * top.U.transpose() * X * top.V * top.V.transpose();
    CHECK((proj - rank_truncate(X, 2)).norm() < 1e-10 * X.norm());

    // from_span deduplicates dependent columns.
    Matrix Ucols(4, 3), Vcols(4, 3);
    Ucols << pair.U.topLeftCorner(4, 1), pair.U.topLeftCorner(4, 1), random_matrix(4, 1, 3);
    Vcols = random_matrix(4, 3, 4);
    ProjectionPair span = ProjectionPair::from_span(Ucols, Vcols);
    CHECK_NOTHROW(span.validate());
    CHECK(span.k() <= 2);
}

TEST_CASE("project_kron_vec matches the dense Kronecker projector") {
    Shape shape{4, 3};
    ProjectionPair pair = ProjectionPair::random(shape, 2, 0xB1);
    Matrix PU = pair.U * pair.U.transpose();
    Matrix PV = pair.V * pair.V.transpose();
    Matrix P = Eigen::kroneckerProduct(PV, PU).eval();
    for (std::uint64_t s = 0; s < 5; ++s) {
        Vector y = random_vector(shape.d(), derive_seed(0xB2, s));
        CHECK((project_kron_vec(pair, y) - P * y).norm() < 1e-12 * y.norm());
    }
    CHECK_THROWS_AS(project_kron_vec(pair, random_vector(11, 0xB3)), ShapeError);
}

TEST_CASE("project_kron: identity, invariance, and contraction") {
    Shape shape{3, 3};

    // Full-rank pair acts as the identity.
    ProjectionPair full = ProjectionPair::random(shape, 3, 0xC1);
    Matrix A = random_matrix(9, 9, 0xC2);
    A = ((A + A.transpose()) / 2).eval();
    CHECK((project_kron(A, full) - A).norm() < 1e-10 * A.norm());

    // Rank-1 spike inside the projected subspace is untouched.
    Matrix Xbar = random_matrix(3, 3, 0xC3);
    Xbar = rank_truncate(Xbar, 2);
    Xbar /= Xbar.norm();
    ProjectionPair pair = ProjectionPair::from_top_singular(Xbar, 2);
    Vector xbar = vectorize(Xbar);
    Matrix spike = 5.0 * xbar * xbar.transpose();
    CHECK((project_kron(spike, pair) - spike).norm() < 1e-9 * spike.norm());

    // Projections never expand the spectral norm, and the result is symmetric.
    for (std::uint64_t s = 0; s < 5; ++s) {
        Matrix E = random_matrix(9, 9, derive_seed(0xC4, s));
        E = ((E + E.transpose()) / 2).eval();
        ProjectionPair q = ProjectionPair::random(shape, 1 + Index(s % 3), derive_seed(0xC5, s));
        Matrix PEP = project_kron(E, q);
        CHECK((PEP - PEP.transpose()).norm() < 1e-12 * (PEP.norm() + 1));
        Eigen::SelfAdjointEigenSolver<Matrix> eE(E), eP(PEP);
        double rhoE = eE.eigenvalues().cwiseAbs().maxCoeff();
        double rhoP = eP.eigenvalues().cwiseAbs().maxCoeff();
        CHECK(rhoP <= rhoE + 1e-10);
    }
}

TEST_CASE("Shape: checked construction and square root helper") {
    CHECK_THROWS_AS(Shape::checked(0, 3), ShapeError);
    CHECK_THROWS_AS(Shape::checked(3, -1), ShapeError);
    Shape s = Shape::square_of(16);
    CHECK(s.p1 == 4);
    CHECK(s.p2 == 4);
    CHECK(s.d() == 16);
    CHECK_THROWS_AS(Shape::square_of(12), ShapeError);
    try {
        Shape::square_of(12);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("--shape") != std::string::npos);
    }
}
