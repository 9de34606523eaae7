#include "emx/theory.hpp"

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "emx/parallel.hpp"
#include "emx/rng.hpp"

namespace emx {
namespace {

constexpr double kSlack = 1e-9;

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    return 0.5 * (v[mid - 1] + hi);
}

// Y = E (V (x) U) by two reshaped contractions, never forming the d x k1 k2 Kronecker factor
// column by column against E.
Matrix e_times_kron(const Matrix& E, const Matrix& U, const Matrix& V) {
    const Index p1 = U.rows(), k1 = U.cols(), p2 = V.rows(), k2 = V.cols();
    const Index d = E.rows();
    if (d != p1 * p2 || E.cols() != d) throw ShapeError("projected norm: operator/pair shape mismatch");
    // E(row, l*p1 + s): contract l with V by viewing E as a (d*p1) x p2 matrix.
    Eigen::Map<const Matrix> Er(E.data(), d * p1, p2);
    Matrix E1 = Er * V;  // element flat index row + d*s + d*p1*j
    Matrix Y(d, k1 * k2);
    for (Index j = 0; j < k2; ++j) {
        Eigen::Map<const Matrix> M1(E1.data() + d * p1 * j, d, p1);
        Y.middleCols(j * k1, k1).noalias() = M1 * U;
    }
    return Y;
}

// Z = (V (x) U)' Y, column-wise via vec(U' mat(y) V).
Matrix kron_t_times(const Matrix& U, const Matrix& V, const Matrix& Y) {
    const Index k1 = U.cols(), k2 = V.cols();
    Matrix Z(k1 * k2, Y.cols());
    Matrix T;
    for (Index c = 0; c < Y.cols(); ++c) {
        Eigen::Map<const Matrix> X(Y.col(c).data(), U.rows(), V.rows());
        T.noalias() = U.transpose() * X * V;
        Z.col(c) = Eigen::Map<const Vector>(T.data(), k1 * k2);
    }
    return Z;
}

// W' E W for W = V (x) U, symmetrized.
Matrix compress_two_sided(const Matrix& E, const ProjectionPair& pair) {
    Matrix M = kron_t_times(pair.U, pair.V, e_times_kron(E, pair.U, pair.V));
    return 0.5 * (M + M.transpose());
}

double max_abs_eig(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

double fit_log_slope(const std::vector<Index>& ks, const std::vector<double>& means) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(ks.size());
    for (size_t i = 0; i < ks.size(); ++i) {
        const double x = std::log(static_cast<double>(ks[i]));
        const double y = std::log(std::max(means[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = sxx - sx * sx / n;
    if (denom <= 0) throw ParameterError("slope fit needs at least two distinct k values");
    return (sxy - sx * sy / n) / denom;
}

}  // namespace

TheoremConstants theorem_constants(double lambda, double gap, double rho_euv, Index k, Index kbar,
                                   double theta) {
    if (rho_euv < 0) throw ParameterError("theorem_constants: rho_euv must be nonnegative");
    if (!(lambda > rho_euv)) throw ParameterError("theorem_constants: requires lambda > rho_euv");
    if (!(theta > 0.0 && theta < 1.0)) throw ParameterError("theorem_constants: theta must lie in (0, 1)");
    if (kbar < 1 || k < kbar) throw ParameterError("theorem_constants: requires 1 <= kbar <= k");
    TheoremConstants c;
    c.lambda = lambda;
    c.gap = gap;
    c.rho_euv = rho_euv;
    c.k = k;
    c.kbar = kbar;
    c.theta = theta;
    c.kappa = rho_euv == 0.0 ? std::numeric_limits<double>::infinity() : gap / rho_euv;
    c.gamma = (lambda - gap + rho_euv) / (lambda - rho_euv);
    c.delta = rho_euv == 0.0 ? 0.0 : std::sqrt(2.0) / std::sqrt(1.0 + (c.kappa - 2.0) * (c.kappa - 2.0));
    const double ratio = static_cast<double>(kbar) / static_cast<double>(k);
    c.mu = std::sqrt(1.0 + 2.0 * (std::sqrt(ratio) + ratio)) *
           std::sqrt(std::max(0.0, 1.0 - 0.5 * theta * (1.0 + theta) * (1.0 - c.gamma * c.gamma)));
    c.kappa_ok = c.kappa > 2.0;
    c.mu_ok = c.mu < 1.0;
    c.hypothesis_ok = c.kappa_ok && c.mu_ok;
    return c;
}

nlohmann::json TheoremConstants::to_json() const {
    return {{"lambda", lambda},   {"gap", gap},
            {"rho_euv", rho_euv}, {"kappa", kappa},
            {"gamma", gamma},     {"delta", delta},
            {"theta", theta},     {"mu", mu},
            {"kbar", kbar},       {"k", k},
            {"kappa_ok", kappa_ok}, {"mu_ok", mu_ok},
            {"hypothesis_ok", hypothesis_ok}};
}

std::pair<double, double> eigen_gap(const Matrix& A) {
    if (A.rows() < 2) throw ParameterError("eigen_gap: requires d >= 2");
    if (A.rows() != A.cols()) throw ShapeError("eigen_gap: matrix is not square");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(A, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("eigen_gap: eigendecomposition failed");
    const Vector& ev = eig.eigenvalues();  // ascending
    const Index last = ev.size() - 1;
    const double lambda = ev(last);
    const double rest = ev.head(last).cwiseAbs().maxCoeff();
    return {lambda, lambda - rest};
}

double projected_noise_norm(const LinOp& E, const ProjectionPair& pair) {
    pair.validate();
    if (pair.shape().d() != E.dim()) throw ShapeError("projected_noise_norm: operator/pair shape mismatch");
    LinOp projected = LinOp::callable(E.dim(), [&E, pair](const Vector& x, Vector& out) {
        Vector y = project_kron_vec(pair, x);
        E.apply(y, out);
        out = project_kron_vec(pair, out);
    });
    return spectral_norm(projected);
}

double projected_noise_norm(const Matrix& E, const ProjectionPair& pair) {
    return projected_noise_norm(LinOp::dense(E), pair);
}

double projected_noise_norm_exact(const Matrix& E, const ProjectionPair& pair) {
    pair.validate();
    return max_abs_eig(compress_two_sided(E, pair));
}

double rho_sampled_max(const Matrix& E, Shape shape, Index k, const std::vector<Matrix>& iterates,
                       const Matrix& Xbar, int n_random, std::uint64_t seed) {
    std::vector<ProjectionPair> pairs;
    ProjectionPair ref = ProjectionPair::from_top_singular(Xbar, std::min(k, numerical_rank(Xbar)));
    pairs.push_back(ref);
    ProjectionPair prev;
    for (size_t t = 0; t < iterates.size(); ++t) {
        ProjectionPair cur = ProjectionPair::from_top_singular(iterates[t], k);
        pairs.push_back(cur);
        // spans used by the per-step analysis: consecutive iterates, and iterate with reference
        Matrix ur(shape.p1, cur.U.cols() + ref.U.cols());
        ur << cur.U, ref.U;
        Matrix vr(shape.p2, cur.V.cols() + ref.V.cols());
        vr << cur.V, ref.V;
        pairs.push_back(ProjectionPair::from_span(ur, vr));
        if (t > 0) {
            Matrix uu(shape.p1, cur.U.cols() + prev.U.cols());
            uu << cur.U, prev.U;
            Matrix vv(shape.p2, cur.V.cols() + prev.V.cols());
            vv << cur.V, prev.V;
            pairs.push_back(ProjectionPair::from_span(uu, vv));
        }
        prev = cur;
    }
    for (int i = 0; i < n_random; ++i)
        pairs.push_back(ProjectionPair::random(shape, k, derive_seed(seed, 0xA5, static_cast<std::uint64_t>(i))));
    double rho = 0.0;
    for (const auto& p : pairs) rho = std::max(rho, projected_noise_norm_exact(E, p));
    return rho;
}

ScalingProbeResult lemma1_scaling_probe(Index p, const std::vector<Index>& k_values, int trials,
                                        std::uint64_t seed) {
    if (p < 2) throw ParameterError("lemma1_scaling_probe: p must be >= 2");
    if (k_values.empty()) throw ParameterError("lemma1_scaling_probe: empty k grid");
    for (Index k : k_values)
        if (k < 1 || k > p) throw ParameterError("lemma1_scaling_probe: k values must lie in [1, p]");
    if (trials < 1) throw ParameterError("lemma1_scaling_probe: trials must be >= 1");

    const Index d = p * p;
    const size_t K = k_values.size();
    std::vector<double> two(trials * K, 0.0), single(trials * K, 0.0);

    parallel_for(trials, [&](Index t) {
        const std::uint64_t st = derive_seed(seed, 0x1E55, static_cast<std::uint64_t>(t));
        auto E = std::make_shared<Matrix>(d, d);
        {
            Matrix G(d, d);
            auto eng = make_engine(derive_seed(st, 0xE0));
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (Index j = 0; j < d; ++j)
                for (Index i = 0; i < d; ++i) G(i, j) = gauss(eng);
            *E = (G + G.transpose()) / std::sqrt(2.0);
        }
        LanczosOptions lo;
        lo.tol = 1e-5;
        lo.max_steps = std::min<Index>(d, 250);
        lo.seed = derive_seed(st, 0xF0);
        const double rho_e = std::abs(lanczos_extremal(LinOp::dense(E), lo).value);

        for (size_t ki = 0; ki < K; ++ki) {
            const Index k = k_values[ki];
            ProjectionPair pair = ProjectionPair::random(Shape{p, p}, k, derive_seed(st, 0xA1, k));
            two[t * K + ki] = max_abs_eig(compress_two_sided(*E, pair)) / rho_e;

            // one-sided diagnostic: blocks of (I (x) U)' E (I (x) U)
            Matrix Ms(p * k, p * k);
            Matrix Yl;
            for (Index l = 0; l < p; ++l) {
                Yl.noalias() = E->middleCols(l * p, p) * pair.U;
                for (Index lp = 0; lp < p; ++lp)
                    Ms.block(lp * k, l * k, k, k).noalias() =
                        pair.U.transpose() * Yl.middleRows(lp * p, p);
            }
            Ms = 0.5 * (Ms + Ms.transpose());
            const double rho_s = p * k <= 512 ? max_abs_eig(Ms) : spectral_norm(Ms);
            single[t * K + ki] = rho_s / rho_e;
        }
    });

    ScalingProbeResult res;
    std::vector<double> means(K), means_single(K);
    for (size_t ki = 0; ki < K; ++ki) {
        double m = 0, ms = 0;
        for (int t = 0; t < trials; ++t) {
            m += two[t * K + ki];
            ms += single[t * K + ki];
        }
        m /= trials;
        ms /= trials;
        double var = 0;
        for (int t = 0; t < trials; ++t) var += (two[t * K + ki] - m) * (two[t * K + ki] - m);
        ScalingRow row;
        row.k = k_values[ki];
        row.mean_ratio = m;
        row.std_ratio = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
        row.mean_ratio_single = ms;
        res.rows.push_back(row);
        means[ki] = m;
        means_single[ki] = ms;
    }
    res.slope = fit_log_slope(k_values, means);
    res.slope_single = fit_log_slope(k_values, means_single);
    return res;
}

nlohmann::json ScalingProbeResult::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
        rows_j.push_back({{"k", r.k},
                          {"mean_ratio", r.mean_ratio},
                          {"std_ratio", r.std_ratio},
                          {"mean_ratio_single", r.mean_ratio_single}});
    return {{"rows", rows_j}, {"slope", slope}, {"slope_single", slope_single}};
}

MonotonicityReport check_monotonicity(const SolveReport& report, const LinOp* A) {
    MonotonicityReport out;
    std::vector<double> q;
    if (A != nullptr && !report.iterates.empty()) {
        q.reserve(report.iterates.size());
        for (const auto& X : report.iterates) q.push_back(rayleigh(*A, X));
    } else {
        if (report.trajectory.empty())
            throw ParameterError("check_monotonicity: the run recorded no trajectory");
        q.reserve(report.trajectory.size());
        for (const auto& pt : report.trajectory) q.push_back(pt.Q);
    }
    out.ok = true;
    for (size_t t = 1; t < q.size(); ++t) {
        if (q[t] < q[t - 1] - kSlack * std::abs(q[t - 1])) {
            out.ok = false;
            out.first_violation = static_cast<Index>(t);
            break;
        }
    }
    return out;
}

nlohmann::json MonotonicityReport::to_json() const {
    return {{"ok", ok}, {"first_violation", first_violation}};
}

Assumption2Report check_assumption2(const Matrix& E, Shape shape) {
    shape.checked();
    if (E.rows() != E.cols() || E.rows() != shape.d())
        throw ShapeError("check_assumption2: operator/shape mismatch");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(E);
    if (eig.info() != Eigen::Success) throw NumericalError("check_assumption2: eigendecomposition failed");
    const Index m = std::min(shape.p1, shape.p2);
    Assumption2Report rep;
    std::vector<double> flats;
    for (Index j = 0; j < E.rows(); ++j) {
        Matrix W = matricize(eig.eigenvectors().col(j), shape);
        Eigen::JacobiSVD<Matrix> svd(W);
        FlatnessRow row;
        row.index = j;
        row.eigenvalue = eig.eigenvalues()(j);
        row.sigma_max = svd.singularValues()(0);
        row.sigma_min = svd.singularValues()(m - 1);
        row.flatness = static_cast<double>(m) * row.sigma_max * row.sigma_max;
        rep.rows.push_back(row);
        flats.push_back(row.flatness);
    }
    rep.median_flatness = median_of(std::move(flats));
    return rep;
}

nlohmann::json Assumption2Report::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
        rows_j.push_back({{"index", r.index},
                          {"eigenvalue", r.eigenvalue},
                          {"sigma_max", r.sigma_max},
                          {"sigma_min", r.sigma_min},
                          {"flatness", r.flatness}});
    return {{"rows", rows_j}, {"median_flatness", median_flatness}};
}

ContractionReport check_contraction(const SolveReport& report, const TheoremConstants& constants) {
    if (report.trajectory.empty())
        throw ParameterError("check_contraction: the run recorded no trajectory");
    for (const auto& pt : report.trajectory)
        if (!pt.error.has_value())
            throw ParameterError("check_contraction: the run recorded no reference error");

    ContractionReport rep;
    // s_t = sqrt(1 - |<X_t, Xbar>|) = error_t / sqrt(2) for unit-norm inputs
    std::vector<double> s;
    s.reserve(report.trajectory.size());
    for (const auto& pt : report.trajectory) s.push_back(*pt.error / std::sqrt(2.0));
    rep.inner0 = 1.0 - s[0] * s[0];
    rep.hypotheses_met = constants.mu_ok && rep.inner0 >= constants.theta + constants.delta - 1e-12;
    rep.floor = constants.mu < 1.0 ? std::sqrt(10.0) * constants.delta / (1.0 - constants.mu)
                                   : std::numeric_limits<double>::infinity();
    rep.vacuous = s[0] <= rep.floor + kSlack;

    rep.cumulative_ok = true;
    double mu_pow = 1.0;
    for (size_t t = 1; t < s.size(); ++t) {
        mu_pow *= constants.mu;
        if (s[t] > mu_pow * s[0] + rep.floor + kSlack) {
            rep.cumulative_ok = false;
            rep.first_violation = static_cast<Index>(t);
            break;
        }
    }
    if (rep.vacuous) rep.cumulative_ok = true;  // alternative clause of the bound

    rep.per_step_ok = true;
    const double step_floor = std::sqrt(10.0) * constants.delta;
    for (size_t t = 1; t < s.size(); ++t) {
        if (s[t] > constants.mu * s[t - 1] + step_floor + kSlack) {
            rep.per_step_ok = false;
            rep.first_per_step_violation = static_cast<Index>(t);
            break;
        }
    }
    return rep;
}

nlohmann::json ContractionReport::to_json() const {
    return {{"hypotheses_met", hypotheses_met},
            {"vacuous", vacuous},
            {"cumulative_ok", cumulative_ok},
            {"per_step_ok", per_step_ok},
            {"first_violation", first_violation},
            {"first_per_step_violation", first_per_step_violation},
            {"inner0", inner0},
            {"floor", floor}};
}

RankTruncCheck check_rank_trunc_error(const Vector& y, const Matrix& Xbar, Index k) {
    if (y.size() != Xbar.size()) throw ShapeError("check_rank_trunc_error: size mismatch");
    if (std::abs(y.norm() - 1.0) > 1e-8 || std::abs(Xbar.norm() - 1.0) > 1e-8)
        throw ParameterError("check_rank_trunc_error: inputs must be unit norm");
    const Shape shape{Xbar.rows(), Xbar.cols()};
    if (k < 1 || k > std::min(shape.p1, shape.p2))
        throw ParameterError("check_rank_trunc_error: k out of range");
    const Index kbar = numerical_rank(Xbar);

    Matrix T = rank_truncate(matricize(y, shape), k);
    const double tnorm = T.norm();
    if (tnorm > 0) T /= tnorm;  // the update normalizes the truncated iterate

    RankTruncCheck chk;
    chk.inner_before = std::abs(y.dot(vectorize(Xbar)));
    chk.lhs = std::abs(frobenius_inner(T, Xbar));
    const double a = chk.inner_before;
    const double one_minus = std::max(0.0, 1.0 - a * a);
    auto rhs_with = [&](double f) {
        return a - f * std::min(std::sqrt(one_minus), (1.0 + f) * one_minus);
    };
    const double f_app = std::sqrt(static_cast<double>(kbar) / static_cast<double>(k));
    chk.rhs_appendix = rhs_with(f_app);
    chk.rhs_maintext = rhs_with(1.0 / f_app);
    chk.ok_appendix = chk.lhs >= chk.rhs_appendix - kSlack;
    chk.ok_maintext = chk.lhs >= chk.rhs_maintext - kSlack;
    return chk;
}

nlohmann::json RankTruncCheck::to_json() const {
    return {{"ok_appendix", ok_appendix},   {"ok_maintext", ok_maintext},
            {"lhs", lhs},                   {"rhs_appendix", rhs_appendix},
            {"rhs_maintext", rhs_maintext}, {"inner_before", inner_before}};
}

PerturbationReport check_perturbation(const Matrix& Abar, const Matrix& E, const ProjectionPair& pair) {
    pair.validate();
    const Shape shape = pair.shape();
    if (Abar.rows() != shape.d() || E.rows() != shape.d() || Abar.rows() != Abar.cols() ||
        E.rows() != E.cols())
        throw ShapeError("check_perturbation: operator/pair shape mismatch");

    Eigen::SelfAdjointEigenSolver<Matrix> eig(Abar);
    if (eig.info() != Eigen::Success) throw NumericalError("check_perturbation: eigendecomposition failed");
    const Index last = Abar.rows() - 1;
    const double lambda = eig.eigenvalues()(last);
    const double gap = lambda - eig.eigenvalues().head(last).cwiseAbs().maxCoeff();
    Vector xbar = eig.eigenvectors().col(last);
    Matrix Xbar = matricize(xbar, shape);

    PerturbationReport rep;
    const double proj_residual =
        (pair.U * (pair.U.transpose() * Xbar * pair.V) * pair.V.transpose() - Xbar).norm();
    const double rho = projected_noise_norm_exact(E, pair);
    rep.kappa = rho == 0.0 ? std::numeric_limits<double>::infinity() : gap / rho;
    rep.hypotheses_met = proj_residual <= kSlack && rep.kappa > 2.0;
    rep.gamma_bound = (lambda - gap + rho) / (lambda - rho);
    rep.delta_bound =
        rho == 0.0 ? 0.0 : std::sqrt(2.0) / std::sqrt(1.0 + (rep.kappa - 2.0) * (rep.kappa - 2.0));

    Matrix M = compress_two_sided(Abar + E, pair);
    Eigen::SelfAdjointEigenSolver<Matrix> meig(M);
    if (meig.info() != Eigen::Success) throw NumericalError("check_perturbation: compressed eig failed");
    const Index mlast = M.rows() - 1;
    const double l1 = meig.eigenvalues()(mlast);
    // The d x d projected operator also carries the projector's kernel: its spectrum is the
    // compressed one padded with zeros, so a 1 x 1 compression has second eigenvalue 0.
    const double l2 = mlast >= 1 ? meig.eigenvalues().head(mlast).cwiseAbs().maxCoeff() : 0.0;
    rep.measured_ratio = l1 > 0 ? l2 / l1 : std::numeric_limits<double>::infinity();

    // lift the compressed top eigenvector: (V (x) U) w = vec(U mat(w) V')
    Matrix Wmat = matricize(meig.eigenvectors().col(mlast), Shape{pair.k(), pair.k()});
    Vector x1 = vectorize(Matrix(pair.U * Wmat * pair.V.transpose()));
    x1.normalize();
    rep.eigvec_distance = std::min((x1 - xbar).norm(), (x1 + xbar).norm());
    rep.gamma_ok = rep.measured_ratio <= rep.gamma_bound + kSlack;
    rep.delta_ok = rep.eigvec_distance <= rep.delta_bound + kSlack;
    return rep;
}

nlohmann::json PerturbationReport::to_json() const {
    return {{"hypotheses_met", hypotheses_met},
            {"kappa", kappa},
            {"gamma_bound", gamma_bound},
            {"delta_bound", delta_bound},
            {"measured_ratio", measured_ratio},
            {"eigvec_distance", eigvec_distance},
            {"gamma_ok", gamma_ok},
            {"delta_ok", delta_ok}};
}

PowerStepCheck check_power_step(const Matrix& M, const Vector& y) {
    if (M.rows() != M.cols() || M.rows() != y.size())
        throw ShapeError("check_power_step: operator/vector shape mismatch");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
    if (eig.info() != Eigen::Success) throw NumericalError("check_power_step: eigendecomposition failed");
    const Index last = M.rows() - 1;
    const double l1 = eig.eigenvalues()(last);
    if (!(l1 > 0)) throw ParameterError("check_power_step: top eigenvalue must be positive");
    Vector yn = y;
    const double ynorm = yn.norm();
    if (ynorm < 1e-300) throw ParameterError("check_power_step: zero vector");
    yn /= ynorm;
    Vector my = M * yn;
    const double mnorm = my.norm();
    if (mnorm < 1e-300) throw ParameterError("check_power_step: operator annihilates the vector");

    PowerStepCheck chk;
    chk.gamma_measured =
        last >= 1 ? eig.eigenvalues().head(last).cwiseAbs().maxCoeff() / l1 : 0.0;
    const Vector x1 = eig.eigenvectors().col(last);
    const double a = std::abs(x1.dot(yn));
    chk.lhs = std::abs(x1.dot(my)) / mnorm;
    chk.rhs = a * (1.0 + (1.0 - chk.gamma_measured * chk.gamma_measured) * (1.0 - a * a) / 2.0);
    chk.ok = chk.lhs >= chk.rhs - kSlack;
    return chk;
}

nlohmann::json PowerStepCheck::to_json() const {
    return {{"ok", ok}, {"lhs", lhs}, {"rhs", rhs}, {"gamma_measured", gamma_measured}};
}

}  // namespace emx
