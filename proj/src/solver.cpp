#include "emx/solver.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>

#include "emx/errors.hpp"
#include "emx/rng.hpp"

namespace emx {

namespace {

using Clock = std::chrono::steady_clock;

double sign_aligned_delta(const Matrix& X, const Matrix& Xprev) {
    return std::min((X - Xprev).norm(), (X + Xprev).norm());
}

void check_unit_norm(double norm, const char* who) {
    if (std::abs(norm - 1.0) > 1e-9)
        throw ParameterError(std::string(who) + ": initializer must have unit norm, got " +
                             std::to_string(norm));
}

void check_finite(const Vector& v, const char* who) {
    if (!v.allFinite()) throw NumericalError(std::string(who) + ": non-finite iterate");
}

}  // namespace

void SolverOptions::validate(Shape shape) const {
    if (max_iterations < 1) throw ParameterError("SolverOptions: max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw ParameterError("SolverOptions: tolerance must be > 0");
    if (k < 1 || k > std::min(shape.p1, shape.p2))
        throw ParameterError("SolverOptions: k = " + std::to_string(k) + " outside [1, " +
                             std::to_string(std::min(shape.p1, shape.p2)) + "]");
}

double estimation_error(const Matrix& X, const Matrix& Xref) {
    if (X.rows() != Xref.rows() || X.cols() != Xref.cols())
        throw ShapeError("estimation_error: shape mismatch");
    return std::min((X - Xref).norm(), (X + Xref).norm());
}

double rayleigh(const LinOp& A, const Matrix& X) {
    const Vector x = vectorize(X);
    if (x.size() != A.dim()) throw ShapeError("rayleigh: operator/matrix shape mismatch");
    return x.dot(A.apply(x));
}

namespace {

// Shared driver: the power method is the k = min(p1,p2) case with truncation skipped.
SolveReport iterate(const LinOp& A, const Matrix& X0, Shape shape, const SolverOptions& opts,
                    const Matrix* reference, bool truncate) {
    opts.validate(shape);
    if (A.dim() != shape.d()) throw ShapeError("solver: operator dimension != p1*p2");
    check_unit_norm(X0.norm(), truncate ? "smartpm" : "power_method");
    if (reference && (reference->rows() != shape.p1 || reference->cols() != shape.p2))
        throw ShapeError("solver: reference shape mismatch");

    const auto t_start = Clock::now();
    SolveReport rep;
    Matrix X = X0 / X0.norm();
    Vector x = vectorize(X), ax(shape.d());

    if (opts.record_iterates) rep.iterates.push_back(X);

    int t = 0;
    for (; t < opts.max_iterations; ++t) {
        A.apply(x, ax);
        check_finite(ax, "solver");
        if (opts.record_trajectory && t == 0) {
            TrajectoryPoint p0;
            p0.t = 0;
            p0.Q = x.dot(ax);
            p0.delta = 0.0;
            if (reference) p0.error = estimation_error(X, *reference);
            rep.trajectory.push_back(p0);
        }
        const double nrm = ax.norm();
        if (nrm == 0.0)
            throw NumericalError("solver: A maps the iterate to zero (initializer orthogonal "
                                 "to the operator range)");
        Matrix Xnext = matricize(ax / nrm, shape);  // X'_t
        if (truncate) {
            Xnext = rank_truncate(Xnext, opts.k);
            const double fn = Xnext.norm();
            if (fn == 0.0) throw NumericalError("solver: rank truncation produced zero");
            Xnext /= fn;
        }
        const double delta = sign_aligned_delta(Xnext, X);
        X = Xnext;
        x = vectorize(X);
        if (opts.record_iterates) rep.iterates.push_back(X);
        if (opts.record_trajectory) {
            TrajectoryPoint p;
            p.t = t + 1;
            A.apply(x, ax);  // Q at the new iterate
            p.Q = x.dot(ax);
            p.delta = delta;
            if (reference) p.error = estimation_error(X, *reference);
            rep.trajectory.push_back(p);
        }
        if (delta < opts.tolerance) {
            rep.converged = true;
            ++t;
            break;
        }
    }
    rep.iterations = t;
    rep.final_iterate = std::move(X);
    rep.wall_time_s = std::chrono::duration<double>(Clock::now() - t_start).count();
    return rep;
}

}  // namespace

SolveReport smartpm(const LinOp& A, const Matrix& X0, const SolverOptions& opts,
                    const Matrix* reference) {
    return iterate(A, X0, Shape{X0.rows(), X0.cols()}, opts, reference, /*truncate=*/true);
}

SolveReport power_method(const LinOp& A, const Vector& x0, Shape shape,
                         const SolverOptions& opts, const Matrix* reference) {
    if (x0.size() != shape.d()) throw ShapeError("power_method: x0 length != p1*p2");
    SolverOptions o = opts;
    o.k = std::min(shape.p1, shape.p2);  // unused by the un-truncated driver; keeps validate happy
    return iterate(A, matricize(x0, shape), shape, o, reference, /*truncate=*/false);
}

Matrix init_random(Shape shape, std::uint64_t seed) {
    auto eng = make_engine(derive_seed(seed, 0x1f17));
    std::normal_distribution<double> gauss;
    Matrix X(shape.p1, shape.p2);
    for (Index j = 0; j < shape.p2; ++j)
        for (Index i = 0; i < shape.p1; ++i) X(i, j) = gauss(eng);
    X /= X.norm();
    return X;
}

Matrix init_random_rank_k(Shape shape, Index k, std::uint64_t seed) {
    Matrix X = rank_truncate(init_random(shape, seed), k);
    X /= X.norm();
    return X;
}

Matrix init_top_eigenmatrix(const Matrix& A, Shape shape) {
    if (A.rows() != A.cols() || A.rows() != shape.d())
        throw ShapeError("init_top_eigenmatrix: matrix/shape mismatch");
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    if (es.info() != Eigen::Success)
        throw NumericalError("init_top_eigenmatrix: eigendecomposition failed");
    Vector v = es.eigenvectors().col(A.rows() - 1);  // ascending order
    Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    Matrix X = matricize(v, shape);
    X /= X.norm();
    return X;
}

namespace {
nlohmann::json matrix_to_json(const Matrix& X) {
    nlohmann::json j;
    j["shape"] = {X.rows(), X.cols()};
    std::vector<double> data(static_cast<size_t>(X.size()));
    Eigen::Map<Matrix>(data.data(), X.rows(), X.cols()) = X;
    j["data"] = data;  // column-major
    return j;
}
}  // namespace

std::string report_to_json(const SolveReport& report) {
    nlohmann::json j;
    j["iterations"] = report.iterations;
    j["converged"] = report.converged;
    j["wall_time_s"] = report.wall_time_s;
    j["final_iterate"] = matrix_to_json(report.final_iterate);
    if (!report.iterates.empty()) {
        j["iterates"] = nlohmann::json::array();
        for (const auto& X : report.iterates) j["iterates"].push_back(matrix_to_json(X));
    }
    j["trajectory"] = nlohmann::json::array();
    for (const auto& p : report.trajectory) {
        nlohmann::json q;
        q["t"] = p.t;
        q["Q"] = p.Q;
        q["delta"] = p.delta;
        if (p.error)
            q["error"] = *p.error;
        else
            q["error"] = nullptr;
        j["trajectory"].push_back(q);
    }
    return j.dump(2);
}

}  // namespace emx
