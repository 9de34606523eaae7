#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "emx/covgen.hpp"
#include "emx/solver.hpp"
#include "emx/tensorops.hpp"
#include "emx/theory.hpp"

#ifndef EMX_VERSION
#define EMX_VERSION "0.0.0"
#endif

namespace py = pybind11;
using namespace emx;

namespace {

py::dict report_to_dict(const SolveReport& rep) {
    py::dict d;
    d["iterations"] = rep.iterations;
    d["converged"] = rep.converged;
    d["wall_time_s"] = rep.wall_time_s;
    d["final_iterate"] = rep.final_iterate;
    py::list traj;
    for (const auto& p : rep.trajectory) {
        py::dict q;
        q["t"] = p.t;
        q["Q"] = p.Q;
        q["delta"] = p.delta;
        if (p.error)
            q["error"] = *p.error;
        else
            q["error"] = py::none();
        traj.append(q);
    }
    d["trajectory"] = traj;
    return d;
}

SolverOptions make_options(Index k, int max_iterations, double tolerance, bool record_trajectory) {
    SolverOptions o;
    o.k = k;
    o.max_iterations = max_iterations;
    o.tolerance = tolerance;
    o.record_trajectory = record_trajectory;
    return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "low-rank principal eigenmatrix analysis core";
    m.attr("__version__") = EMX_VERSION;

    // tensor plumbing
    m.def(
        "matricize",
        [](const Vector& x, Index p1, Index p2) { return matricize(x, Shape{p1, p2}); },
        py::arg("x"), py::arg("p1"), py::arg("p2"));
    m.def("vectorize", &vectorize, py::arg("X"));
    m.def("frobenius_inner", &frobenius_inner, py::arg("X"), py::arg("Y"));
    m.def("numerical_rank", &numerical_rank, py::arg("X"), py::arg("tol") = 1e-10);
    m.def("rank_truncate", &rank_truncate, py::arg("X"), py::arg("k"));
    m.def("estimation_error", &estimation_error, py::arg("X"), py::arg("Xref"));

    // covariance generators and sampling
    m.def("make_circulant", &make_circulant, py::arg("d"), py::arg("r"));
    m.def("make_toeplitz", &make_toeplitz, py::arg("d"), py::arg("r"));
    m.def("make_diag_dominant", &make_diag_dominant, py::arg("d"), py::arg("seed") = 0);
    m.def("make_kronecker", &make_kronecker, py::arg("p1"), py::arg("p2"), py::arg("seed") = 0);
    m.def("make_general_psd", &make_general_psd, py::arg("d"), py::arg("seed") = 0);
    m.def(
        "make_spiked",
        [](double lambda1, Matrix Xbar) { return make_spiked(lambda1, std::move(Xbar)).assemble(); },
        py::arg("lambda1"), py::arg("Xbar"));
    m.def(
        "random_rank_k_eigenmatrix",
        [](Index p1, Index p2, Index kbar, std::uint64_t seed) {
            return random_rank_k_eigenmatrix(Shape{p1, p2}, kbar, seed);
        },
        py::arg("p1"), py::arg("p2"), py::arg("kbar"), py::arg("seed") = 0);
    m.def("sample_gaussian", &sample_gaussian, py::arg("cov"), py::arg("n"), py::arg("seed") = 0);
    m.def("sample_spiked", &sample_spiked, py::arg("lambda1"), py::arg("xbar"), py::arg("n"),
          py::arg("seed") = 0);
    m.def("empirical_cov", &empirical_cov, py::arg("samples"));

    // solver
    m.def(
        "init_random",
        [](Index p1, Index p2, std::uint64_t seed) { return init_random(Shape{p1, p2}, seed); },
        py::arg("p1"), py::arg("p2"), py::arg("seed") = 0);
    m.def(
        "init_random_rank_k",
        [](Index p1, Index p2, Index k, std::uint64_t seed) {
            return init_random_rank_k(Shape{p1, p2}, k, seed);
        },
        py::arg("p1"), py::arg("p2"), py::arg("k"), py::arg("seed") = 0);
    m.def(
        "init_top_eigenmatrix",
        [](const Matrix& A, Index p1, Index p2) { return init_top_eigenmatrix(A, Shape{p1, p2}); },
        py::arg("A"), py::arg("p1"), py::arg("p2"));
    m.def(
        "smartpm",
        [](const Matrix& A, const Matrix& X0, Index k, int max_iterations, double tolerance,
           bool record_trajectory, std::optional<Matrix> reference) {
            LinOp op = LinOp::dense(A);
            SolveReport rep = smartpm(op, X0, make_options(k, max_iterations, tolerance, record_trajectory),
                                      reference ? &*reference : nullptr);
            return report_to_dict(rep);
        },
        py::arg("A"), py::arg("X0"), py::arg("k") = 1, py::arg("max_iterations") = 500,
        py::arg("tolerance") = 1e-9, py::arg("record_trajectory") = true,
        py::arg("reference") = std::nullopt);
    m.def(
        "power_method",
        [](const Matrix& A, const Vector& x0, Index p1, Index p2, int max_iterations,
           double tolerance, bool record_trajectory, std::optional<Matrix> reference) {
            LinOp op = LinOp::dense(A);
            SolverOptions o = make_options(1, max_iterations, tolerance, record_trajectory);
            SolveReport rep = power_method(op, x0, Shape{p1, p2}, o,
                                           reference ? &*reference : nullptr);
            return report_to_dict(rep);
        },
        py::arg("A"), py::arg("x0"), py::arg("p1"), py::arg("p2"), py::arg("max_iterations") = 500,
        py::arg("tolerance") = 1e-9, py::arg("record_trajectory") = true,
        py::arg("reference") = std::nullopt);

    // theory
    m.def(
        "theorem_constants",
        [](double lambda, double gap, double rho_euv, Index k, Index kbar, double theta) {
            TheoremConstants c = theorem_constants(lambda, gap, rho_euv, k, kbar, theta);
            py::dict d;
            d["lambda"] = c.lambda;
            d["gap"] = c.gap;
            d["rho_euv"] = c.rho_euv;
            d["kappa"] = c.kappa;
            d["gamma"] = c.gamma;
            d["delta"] = c.delta;
            d["theta"] = c.theta;
            d["mu"] = c.mu;
            d["k"] = c.k;
            d["kbar"] = c.kbar;
            d["kappa_ok"] = c.kappa_ok;
            d["mu_ok"] = c.mu_ok;
            d["hypothesis_ok"] = c.hypothesis_ok;
            return d;
        },
        py::arg("lambda"), py::arg("gap"), py::arg("rho_euv"), py::arg("k") = 1,
        py::arg("kbar") = 1, py::arg("theta") = 0.5);

    // exceptions surface as ValueError with the library message
    py::register_exception<Error>(m, "EmxError", PyExc_ValueError);
}
