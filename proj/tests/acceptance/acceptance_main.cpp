// Acceptance gate: ten end-to-end criteria, one verdict line each, nonzero exit on
// any failure. Tolerances are pinned here on purpose; edit with care.
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "emx/bench.hpp"
#include "emx/covgen.hpp"
#include "emx/errors.hpp"
#include "emx/io.hpp"
#include "emx/rng.hpp"
#include "emx/solver.hpp"
#include "emx/theory.hpp"

using namespace emx;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    return buf;
}

Matrix random_symmetric(Index d, std::uint64_t seed) {
    auto eng = make_engine(seed);
    std::normal_distribution<double> dist;
    Matrix M(d, d);
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) M(i, j) = dist(eng);
    return ((M + M.transpose()) / 2).eval();
}

// ---- criterion 1: circulant top eigenmatrices are numerically rank one ----
Outcome criterion_circulant_rank1() {
    double worst = 0.0;
    for (Index p : {4, 8, 16}) {
        for (double r : {0.3, 0.5, 0.9}) {
            Matrix C = make_circulant(p * p, r);
            Eigen::SelfAdjointEigenSolver<Matrix> eig(C);
            Matrix X = matricize(eig.eigenvectors().col(p * p - 1), Shape{p, p});
            Eigen::JacobiSVD<Matrix> svd(X);
            worst = std::max(worst, svd.singularValues()[1] / svd.singularValues()[0]);
        }
    }
    return {worst < 1e-8, "max sigma2/sigma1 over p in {4,8,16}, r in {0.3,0.5,0.9}: " + fmt(worst)};
}

// ---- criterion 2: sampled Toeplitz eigenmatrix spectrum at p=100 ----
Outcome criterion_toeplitz_spectrum() {
    // Serialize this study: each instance holds a d x d float32 Wishart factor
    // (~400 MB at d = 10000), so parallel replication would multiply peak memory.
    setenv("EIGENMAT_THREADS", "1", 1);
    ExperimentConfig cfg;
    cfg.study = "spectrum";
    cfg.shape = Shape{100, 100};
    cfg.families = {"toeplitz"};
    cfg.sampled = true;
    cfg.n_factor = 2.0;
    cfg.toeplitz_r = 0.9;
    cfg.replications = 100;
    cfg.base_seed = 20260815;
    cfg.validate();
    StudyOutput out = run_spectrum_study(cfg);
    unsetenv("EIGENMAT_THREADS");

    double mean_sigma2 = -1.0;
    for (const auto& row : out.tables.at("spectrum").rows)
        if (row[0] == "toeplitz" && row[1] == "2") mean_sigma2 = std::stod(row[2]);
    if (mean_sigma2 < 0) return {false, "spectrum table has no toeplitz sigma_2 row"};

    // Exact-mode diagnostic: the population eigenmatrix at the same size.
    EigPair pop = population_top_eigenpair(CovarianceSpec{.family = "toeplitz", .d = 10000, .r = 0.9});
    Matrix X = matricize(pop.vector, Shape{100, 100});
    Eigen::JacobiSVD<Matrix> svd(X);
    double pop_sigma2 = svd.singularValues()[1] / svd.singularValues()[0];

    bool pass = mean_sigma2 <= 0.10;
    return {pass, "sampled-mode mean sigma2 over 100 instances (n=2d): " + fmt(mean_sigma2) +
                      " (threshold 0.10); population-mode sigma2: " + fmt(pop_sigma2)};
}

// ---- criterion 3: objective monotonicity across 100 seeded runs ----
Outcome criterion_monotonicity() {
    const Index p = 32, n = 800;
    const Shape shape{p, p};
    int violations = 0;
    Index first_bad = -1;
    for (int run = 0; run < 100; ++run) {
        Matrix Xbar = random_rank_k_eigenmatrix(shape, 1, derive_seed(3001, run));
        Matrix samples = sample_spiked(10.0, vectorize(Xbar), n, derive_seed(3002, run));
        auto A = std::make_shared<const Matrix>(empirical_cov(samples));
        SolverOptions opts;
        opts.k = 2;
        opts.record_trajectory = true;
        SolveReport rep = smartpm(LinOp::dense(A), init_random(shape, derive_seed(3003, run)), opts);
        MonotonicityReport mono = check_monotonicity(rep);
        if (!mono.ok) {
            ++violations;
            if (first_bad < 0) first_bad = mono.first_violation;
        }
    }
    return {violations == 0, "violations in 100 runs (p=32, n=800, k=2, lambda1=10): " +
                                 std::to_string(violations) +
                                 (violations ? " (first at t=" + std::to_string(first_bad) + ")" : "")};
}

// ---- criterion 4: projected-noise scaling slope over k ----
Outcome criterion_noise_scaling() {
    ScalingProbeResult res = lemma1_scaling_probe(64, {1, 2, 4, 8, 16, 32}, 50, 20260815);
    bool pass = res.slope >= 0.35 && res.slope <= 0.65;
    std::ostringstream os;
    os << "two-sided log-log slope: " << fmt(res.slope) << " (required [0.35, 0.65]); "
       << "one-sided diagnostic slope: " << fmt(res.slope_single) << "; ratios:";
    for (const auto& row : res.rows) os << " k=" << row.k << ":" << fmt(row.mean_ratio, 3);
    return {pass, os.str()};
}

// ---- criterion 5: constant formulas and their monotone structure ----
Outcome criterion_constants() {
    TheoremConstants c = theorem_constants(10.0, 9.0, 1.0, 2, 1, 0.5);
    double err = std::max({std::abs(c.gamma - 2.0 / 9.0), std::abs(c.kappa - 9.0),
                           std::abs(c.delta - 0.2)});
    bool formulas_ok = err < 1e-12;

    bool delta_down = true, gamma_down = true, mu_up = true;
    double prev_d = 1e300, prev_g = 1e300, prev_m = -1e300;
    for (double gap = 2.5; gap <= 12.0; gap += 0.25) {
        TheoremConstants t = theorem_constants(20.0, gap, 1.0, 2, 1, 0.5);
        if (!(t.delta < prev_d)) delta_down = false;  // delta falls as kappa grows
        if (!(t.gamma < prev_g)) gamma_down = false;  // gamma falls as the gap grows
        prev_d = t.delta;
        prev_g = t.gamma;
    }
    for (double gap = 12.0; gap >= 2.5; gap -= 0.25) {  // gamma rises as the gap shrinks
        TheoremConstants t = theorem_constants(20.0, gap, 1.0, 2, 1, 0.5);
        if (!(t.mu > prev_m)) mu_up = false;
        prev_m = t.mu;
    }
    bool pass = formulas_ok && delta_down && gamma_down && mu_up;
    return {pass, "hand-value max error: " + fmt(err, 3) + "; monotone grids delta(kappa) down=" +
                      (delta_down ? "yes" : "no") + ", gamma(gap) down=" + (gamma_down ? "yes" : "no") +
                      ", mu(gamma) up=" + (mu_up ? "yes" : "no")};
}

// ---- criterion 6: sample-efficiency ordinal claims on the full grid ----
Outcome criterion_efficiency_grid() {
    nlohmann::json j = {{"study", "sample_efficiency"},
                        {"shape", {32, 32}},
                        {"lambda1", {5.0, 10.0, 100.0}},
                        {"k", {2}},
                        {"n", {100, 200, 400, 800, 1600}},
                        {"inits", {"random"}},
                        {"replications", 24},
                        {"base_seed", 601}};
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    StudyOutput out = run_study(cfg);
    std::ostringstream os;
    bool pass = out.failures.empty();
    os << "24 replications;";
    for (const auto& a : out.assertions) {
        pass = pass && a.passed;
        os << " [" << a.name << ": " << (a.passed ? "ok" : "FAIL " + a.details) << "]";
    }
    return {pass, os.str()};
}

// ---- criterion 7: full-rank truncation degenerates to the power method ----
Outcome criterion_degeneration() {
    const Index p = 32, n = 100;
    const Shape shape{p, p};
    double worst = 0.0;
    double mean_sm = 0.0, mean_pw = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        Matrix Xbar = random_rank_k_eigenmatrix(shape, 1, derive_seed(7001, rep));
        Matrix samples = sample_spiked(100.0, vectorize(Xbar), n, derive_seed(7002, rep));
        auto A = std::make_shared<const Matrix>(empirical_cov(samples));
        Matrix X0 = init_random(shape, derive_seed(7003, rep));

        SolverOptions opts;
        opts.k = p;  // k = min(p1, p2): truncation is the identity
        opts.record_iterates = true;
        LinOp op = LinOp::dense(A);
        SolveReport sm = smartpm(op, X0, opts, &Xbar);
        SolveReport pw = power_method(op, vectorize(X0), shape, opts, &Xbar);
        if (sm.iterates.size() != pw.iterates.size())
            return {false, "iterate counts diverged at replication " + std::to_string(rep)};
        for (size_t t = 0; t < sm.iterates.size(); ++t)
            worst = std::max(worst, estimation_error(sm.iterates[t], pw.iterates[t]));
        mean_sm += estimation_error(sm.final_iterate, Xbar) / 100.0;
        mean_pw += estimation_error(pw.final_iterate, Xbar) / 100.0;
    }
    bool pass = worst < 1e-9 && std::abs(mean_sm - mean_pw) < 1e-9;
    return {pass, "max per-iterate deviation over 100 replications: " + fmt(worst, 3) +
                      "; |mean error difference|: " + fmt(std::abs(mean_sm - mean_pw), 3)};
}

// ---- criterion 8: dense-eigendecomposition oracle on noiseless spikes ----
Outcome criterion_oracle() {
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const Index kbar = 1 + (i % 3);
        const Index p = 8 + (i % 9);  // d = p^2 <= 256
        const Shape shape{p, p};
        Matrix Xbar = random_rank_k_eigenmatrix(shape, kbar, derive_seed(8001, i));
        Vector xbar = vectorize(Xbar);
        Matrix A = 9.0 * xbar * xbar.transpose() + Matrix::Identity(p * p, p * p);

        SolverOptions opts;
        opts.k = kbar;
        SolveReport rep = smartpm(LinOp::dense(A), init_random(shape, derive_seed(8002, i)), opts);

        Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
        Matrix oracle = matricize(eig.eigenvectors().col(p * p - 1), shape);
        worst = std::max(worst, estimation_error(rep.final_iterate, oracle));
    }
    return {worst < 1e-7, "max error vs dense oracle over 50 instances (k=kbar in {1,2,3}): " +
                              fmt(worst, 3)};
}

// ---- criterion 9: inequality suites on randomized hypothesis-satisfying instances ----
Outcome criterion_inequality_suites() {
    std::ostringstream os;
    bool pass = true;

    {  // projected-operator perturbation bounds (eigenvalue ratio + eigenvector distance)
        int checked = 0, violations = 0, trial = 0;
        const Shape shape{4, 4};
        while (checked < 200 && trial < 400) {
            const Index kbar = 1 + (trial % 2);
            Matrix Xbar = random_rank_k_eigenmatrix(shape, kbar, derive_seed(9101, trial));
            Vector xbar = vectorize(Xbar);
            Matrix Abar = 10.0 * xbar * xbar.transpose();
            ProjectionPair pair = ProjectionPair::from_top_singular(Xbar, kbar);
            Matrix E = random_symmetric(16, derive_seed(9102, trial));
            const double kappa_target = 2.2 + 0.95 * (trial % 40);
            E *= (10.0 / kappa_target) / spectral_norm(E);
            PerturbationReport rep = check_perturbation(Abar, E, pair);
            ++trial;
            if (!rep.hypotheses_met) continue;
            ++checked;
            if (!rep.gamma_ok || !rep.delta_ok) ++violations;
        }
        pass = pass && checked >= 200 && violations == 0;
        os << "[perturbation: " << checked << " instances, " << violations << " violations]";
    }

    {  // one power step improves top-eigenvector alignment
        int violations = 0;
        for (int t = 0; t < 200; ++t) {
            Matrix B = random_symmetric(16, derive_seed(9201, t));
            Matrix M = B * B.transpose() / 16.0 + 0.05 * Matrix::Identity(16, 16);
            auto eng = make_engine(derive_seed(9202, t));
            std::normal_distribution<double> dist;
            Vector y(16);
            for (Index i = 0; i < 16; ++i) y[i] = dist(eng);
            y.normalize();
            if (!check_power_step(M, y).ok) ++violations;
        }
        pass = pass && violations == 0;
        os << " [power-step: 200 instances, " << violations << " violations]";
    }

    {  // single rank truncation costs at most the bounded alignment loss
        int violations = 0;
        const Shape shape{8, 8};
        for (int t = 0; t < 200; ++t) {
            const Index k = std::vector<Index>{1, 2, 4}[t % 3];
            const Index kbar = k == 1 ? 1 : 1 + (t % 2);
            Matrix Xbar = random_rank_k_eigenmatrix(shape, kbar, derive_seed(9301, t));
            Vector y = vectorize(init_random(shape, derive_seed(9302, t)));
            if (!check_rank_trunc_error(y, Xbar, k).ok_appendix) ++violations;
        }
        pass = pass && violations == 0;
        os << " [rank-trunc: 200 instances, " << violations << " violations]";
    }

    {  // per-step and cumulative contraction of the alignment error
        int checked = 0, cum_viol = 0, step_viol = 0, trial = 0;
        const Index p = 16, n = 4000;
        const Shape shape{p, p};
        while (checked < 200 && trial < 240) {
            const std::uint64_t seed = derive_seed(9401, trial);
            ++trial;
            Matrix Xbar = random_rank_k_eigenmatrix(shape, 1, derive_seed(seed, 1));
            Vector xbar = vectorize(Xbar);
            Matrix samples = sample_spiked(50.0, xbar, n, derive_seed(seed, 2));
            auto A = std::make_shared<const Matrix>(empirical_cov(samples));

            SolverOptions so;
            so.k = 1;
            so.max_iterations = 200;
            so.record_trajectory = true;
            so.record_iterates = true;
            SolveReport rep = smartpm(LinOp::dense(A), init_top_eigenmatrix(*A, shape), so, &Xbar);

            const double lambda = xbar.dot((*A) * xbar);
            Matrix E = *A - lambda * (xbar * xbar.transpose());
            const double rho = rho_sampled_max(E, shape, 1, rep.iterates, Xbar, 20, derive_seed(seed, 3));
            const double inner0 = std::abs(frobenius_inner(rep.iterates.front(), Xbar));
            TheoremConstants pre = theorem_constants(lambda, lambda, rho, 1, 1, 0.5);
            double theta = inner0 - pre.delta - 1e-6;
            theta = std::min(std::max(theta, 1e-9), 1.0 - 1e-12);
            TheoremConstants tc = theorem_constants(lambda, lambda, rho, 1, 1, theta);

            ContractionReport cr = check_contraction(rep, tc);
            if (!cr.hypotheses_met) continue;
            ++checked;
            if (!cr.cumulative_ok) ++cum_viol;
            if (!cr.per_step_ok) ++step_viol;
        }
        pass = pass && checked >= 200 && cum_viol == 0 && step_viol == 0;
        os << " [contraction: " << checked << " instances, " << cum_viol << " cumulative / "
           << step_viol << " per-step violations]";
    }

    return {pass, os.str()};
}

// ---- criterion 10: manifest replay is bit-identical, serial vs 8 threads ----
Outcome criterion_determinism() {
    fs::path root = fs::temp_directory_path() / "emx-acceptance-replay";
    fs::remove_all(root);
    fs::create_directories(root);

    nlohmann::json j = {{"study", "sample_efficiency"}, {"shape", {8, 8}},
                        {"lambda1", {5.0, 100.0}},     {"k", {2}},
                        {"n", {50, 200}},              {"inits", {"random", "top_eigenmatrix"}},
                        {"replications", 6},           {"base_seed", 1001}};
    ExperimentConfig cfg = ExperimentConfig::from_json(j);

    StudyOutput first = run_study(cfg);
    emit(first, cfg, (root / "a").string());

    std::ifstream mf(root / "a" / "manifest.json");
    ExperimentConfig replay_cfg = config_from_manifest(nlohmann::json::parse(mf));

    setenv("EIGENMAT_THREADS", "1", 1);
    StudyOutput serial = run_study(replay_cfg);
    emit(serial, replay_cfg, (root / "serial").string());
    setenv("EIGENMAT_THREADS", "8", 1);
    StudyOutput threaded = run_study(replay_cfg);
    emit(threaded, replay_cfg, (root / "threaded").string());
    unsetenv("EIGENMAT_THREADS");

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    std::string a = slurp(root / "a" / "efficiency.csv");
    std::string s = slurp(root / "serial" / "efficiency.csv");
    std::string t = slurp(root / "threaded" / "efficiency.csv");
    bool pass = !a.empty() && a == s && s == t;
    fs::remove_all(root);
    return {pass, std::string("replayed CSV vs original: ") + (a == s ? "identical" : "DIFFERENT") +
                      "; serial vs 8 threads: " + (s == t ? "identical" : "DIFFERENT")};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria = {
        {1, "circulant eigenmatrix rank-1", criterion_circulant_rank1},
        {2, "sampled toeplitz eigenmatrix spectrum", criterion_toeplitz_spectrum},
        {3, "objective monotonicity", criterion_monotonicity},
        {4, "projected-noise scaling slope", criterion_noise_scaling},
        {5, "constant formulas and monotone grids", criterion_constants},
        {6, "sample-efficiency ordinal claims", criterion_efficiency_grid},
        {7, "full-rank degeneration to power method", criterion_degeneration},
        {8, "noiseless dense-oracle equivalence", criterion_oracle},
        {9, "inequality suites", criterion_inequality_suites},
        {10, "manifest replay determinism", criterion_determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failures;
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "ok  " : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    if (failures) std::printf("%d of 10 criteria failed\n", failures);
    else std::printf("all 10 criteria passed\n");
    return failures ? 1 : 0;
}
