#include "CLI11.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "emx/bench.hpp"
#include "emx/covgen.hpp"
#include "emx/errors.hpp"
#include "emx/io.hpp"
#include "emx/rng.hpp"
#include "emx/solver.hpp"
#include "emx/theory.hpp"

#ifndef EMX_VERSION
#define EMX_VERSION "0.0.0"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using emx::Index;
using emx::Matrix;
using emx::Shape;
using emx::Vector;

std::string utc_stamp() {
    char stamp[32] = {0};
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm_utc);
    return stamp;
}

// Config-style inputs that fail to open are usage errors, not runtime I/O failures.
json load_config_json(const std::string& path) {
    try {
        return emx::read_json_file(path);
    } catch (const emx::IoError& e) {
        throw emx::ConfigError(e.what());
    }
}

void apply_threads(int threads) {
    if (threads > 0) setenv("EIGENMAT_THREADS", std::to_string(threads).c_str(), 1);
}

std::string fresh_out_dir(const std::string& requested, const std::string& tag, bool force) {
    std::string dir = requested;
    if (dir.empty()) {
        const std::string base = "./out/" + tag + "-" + utc_stamp();
        dir = base;
        for (int suffix = 2; fs::exists(dir) && !fs::is_empty(dir); ++suffix)
            dir = base + "-" + std::to_string(suffix);
    } else if (fs::exists(dir) && fs::is_directory(dir) && !fs::is_empty(dir) && !force) {
        throw emx::ConfigError("output directory \"" + dir +
                               "\" exists and is not empty; pass --force to write into it");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw emx::IoError("cannot create output directory " + dir + ": " + ec.message());
    return dir;
}

void emit_json(const json& j, const std::string& out_path) {
    if (out_path.empty())
        std::cout << j.dump(2) << "\n";
    else
        emx::write_json_file(out_path, j);
}

Matrix load_matrix(const std::string& path) {
    if (fs::path(path).extension() == ".csv") return emx::read_csv_matrix(path);
    return emx::read_emx(path);
}

// ---- gen ----

struct GenArgs {
    std::string family, out;
    Index d = 0;
    std::vector<Index> shape;
    double r = 0.0, lambda1 = 0.0;
    Index kbar = 1;
    std::uint64_t seed = 0;
    bool force = false;
    bool has_d = false, has_r = false, has_lambda1 = false, has_kbar = false;
};

int cmd_gen(const GenArgs& a) {
    json sj;
    sj["family"] = a.family;
    if (a.has_d) sj["d"] = a.d;
    if (a.shape.size() == 2) {
        sj["shape"] = {a.shape[0], a.shape[1]};
        if (!a.has_d) sj["d"] = a.shape[0] * a.shape[1];
    }
    json params = json::object();
    if (a.has_r) params["r"] = a.r;
    if (a.has_lambda1) params["lambda1"] = a.lambda1;
    if (a.has_kbar) params["kbar"] = a.kbar;
    if (!params.empty()) sj["params"] = params;
    sj["seed"] = a.seed;

    emx::CovarianceSpec spec = emx::CovarianceSpec::from_json(sj);
    if (spec.d > 4096)
        throw emx::ParameterError("gen: dense covariance files are capped at d <= 4096");
    Matrix A = emx::build_covariance(spec);

    fs::path file;
    if (a.out.empty()) {
        file = fs::path(fresh_out_dir("", "gen", false)) / "covariance.emx";
    } else {
        file = fs::path(a.out);
        if (fs::exists(file) && !a.force)
            throw emx::ConfigError("output file \"" + file.string() + "\" exists; pass --force");
        if (file.has_parent_path()) fs::create_directories(file.parent_path());
    }
    emx::write_emx(file.string(), A);
    fs::path sidecar = file;
    sidecar.replace_extension(".json");
    emx::write_json_file(sidecar.string(), spec.to_json());
    std::cout << "wrote " << file.string() << " (" << A.rows() << "x" << A.cols() << ") and "
              << sidecar.string() << "\n";
    return 0;
}

// ---- solve ----

struct SolveArgs {
    std::string matrix, init = "random", out;
    Index k = 1;
    std::vector<Index> shape;
    std::uint64_t seed = 0;
    int max_iterations = 500;
    double tolerance = 1e-9;
    bool record_iterates = false, no_trajectory = false;
};

int cmd_solve(const SolveArgs& a) {
    Matrix M = load_matrix(a.matrix);
    if (M.rows() != M.cols()) throw emx::ShapeError("solve: the operator matrix must be square");
    const Shape shape = a.shape.size() == 2 ? Shape{a.shape[0], a.shape[1]}.checked()
                                            : Shape::square_of(M.rows());
    if (shape.d() != M.rows())
        throw emx::ShapeError("solve: --shape p1 p2 must satisfy p1*p2 = matrix dimension");

    auto Ap = std::make_shared<const Matrix>(std::move(M));
    emx::LinOp op = emx::LinOp::dense(Ap);

    Matrix X0;
    if (a.init == "random")
        X0 = emx::init_random(shape, a.seed);
    else if (a.init == "random_rank_k")
        X0 = emx::init_random_rank_k(shape, a.k, a.seed);
    else if (a.init == "top_eigenmatrix")
        X0 = emx::init_top_eigenmatrix(*Ap, shape);
    else
        throw emx::ConfigError("solve: unknown init \"" + a.init +
                               "\" (random, random_rank_k, top_eigenmatrix)");

    emx::SolverOptions so;
    so.k = a.k;
    so.max_iterations = a.max_iterations;
    so.tolerance = a.tolerance;
    so.record_trajectory = !a.no_trajectory;
    so.record_iterates = a.record_iterates;
    emx::SolveReport rep = emx::smartpm(op, X0, so, nullptr);
    emit_json(json::parse(emx::report_to_json(rep)), a.out);
    return 0;
}

// ---- experiment ----

struct ExpArgs {
    std::string config, manifest, out;
    bool force = false;
    int threads = 0;
    int replications = 0;
    std::uint64_t base_seed = 0;
};

int report_study(const emx::StudyOutput& so, const emx::ExperimentConfig& cfg,
                 const std::string& dir) {
    emx::emit(so, cfg, dir);
    for (const auto& [stem, table] : so.tables)
        std::cout << "wrote " << dir << "/" << stem << ".csv (" << table.rows.size() << " rows)\n";
    std::cout << "wrote " << dir << "/manifest.json and assertions.json; failures="
              << so.failures.size() << "\n";
    for (const auto& a : so.assertions)
        std::cout << "assertion " << a.name << ": " << (a.passed ? "pass" : "FAIL") << " ("
                  << a.details << ")\n";
    return 0;
}

int cmd_experiment(const std::string& study, const ExpArgs& ea, bool has_reps, bool has_seed) {
    json cj = json::object();
    if (!ea.config.empty()) cj = load_config_json(ea.config);
    if (!cj.is_object()) throw emx::ConfigError("experiment config: expected a JSON object");
    cj["study"] = study;  // the subcommand (like any flag) overrides the file
    if (has_reps) cj["replications"] = ea.replications;
    if (has_seed) cj["base_seed"] = ea.base_seed;
    emx::ExperimentConfig cfg = emx::ExperimentConfig::from_json(cj);

    const std::string dir =
        fresh_out_dir(!ea.out.empty() ? ea.out : cfg.out, cfg.study, ea.force);
    apply_threads(ea.threads);
    std::cout << "study=" << cfg.study << " shape=" << cfg.shape.p1 << "x" << cfg.shape.p2
              << " replications=" << cfg.replications << " out=" << dir << "\n";
    return report_study(emx::run_study(cfg), cfg, dir);
}

int cmd_replay(const ExpArgs& ea) {
    emx::ExperimentConfig cfg = emx::config_from_manifest(load_config_json(ea.manifest));
    const std::string dir = fresh_out_dir(ea.out, cfg.study + "-replay", ea.force);
    apply_threads(ea.threads);
    std::cout << "replaying study=" << cfg.study << " base_seed=" << cfg.base_seed
              << " out=" << dir << "\n";
    return report_study(emx::run_study(cfg), cfg, dir);
}

// ---- theory probes ----

Matrix matrix_from_json(const json& mj) {
    const auto& sh = mj.at("shape");
    const Index r = sh.at(0).get<Index>(), c = sh.at(1).get<Index>();
    std::vector<double> data = mj.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != r * c)
        throw emx::ConfigError("matrix json: data length does not match shape");
    return Eigen::Map<const Matrix>(data.data(), r, c);
}

emx::SolveReport report_from_json(const json& rj) {
    emx::SolveReport rep;
    rep.iterations = rj.value("iterations", 0);
    rep.converged = rj.value("converged", false);
    if (rj.contains("trajectory")) {
        for (const auto& q : rj.at("trajectory")) {
            emx::TrajectoryPoint p;
            p.t = q.at("t").get<int>();
            p.Q = q.at("Q").get<double>();
            p.delta = q.value("delta", 0.0);
            if (q.contains("error") && !q.at("error").is_null()) p.error = q.at("error").get<double>();
            rep.trajectory.push_back(p);
        }
    }
    if (rj.contains("final_iterate")) rep.final_iterate = matrix_from_json(rj.at("final_iterate"));
    if (rj.contains("iterates"))
        for (const auto& mj : rj.at("iterates")) rep.iterates.push_back(matrix_from_json(mj));
    return rep;
}

struct TheoryArgs {
    std::string out, report, matrix;
    double lambda = 0.0, gap = 0.0, rho = 0.0, theta = 0.5, lambda1 = 50.0, noise = 0.5,
           align = 0.7;
    Index k = 1, kbar = 1, p = 64, p1 = 16, p2 = 16, n = 4000;
    int trials = 50, threads = 0;
    std::uint64_t seed = 0;
    std::vector<Index> k_values{1, 2, 4, 8, 16, 32};
};

int cmd_theory_constants(const TheoryArgs& a) {
    emit_json(emx::theorem_constants(a.lambda, a.gap, a.rho, a.k, a.kbar, a.theta).to_json(), a.out);
    return 0;
}

int cmd_theory_lemma1(const TheoryArgs& a) {
    apply_threads(a.threads);
    emit_json(emx::lemma1_scaling_probe(a.p, a.k_values, a.trials, a.seed).to_json(), a.out);
    return 0;
}

int cmd_theory_monotonicity(const TheoryArgs& a) {
    emx::SolveReport rep = report_from_json(load_config_json(a.report));
    std::shared_ptr<const Matrix> Am;
    std::unique_ptr<emx::LinOp> op;
    if (!a.matrix.empty() && !rep.iterates.empty()) {
        Am = std::make_shared<const Matrix>(load_matrix(a.matrix));
        op = std::make_unique<emx::LinOp>(emx::LinOp::dense(Am));
    }
    emit_json(emx::check_monotonicity(rep, op.get()).to_json(), a.out);
    return 0;
}

int cmd_theory_contraction(const TheoryArgs& a) {
    const Shape shape = Shape{a.p1, a.p2}.checked();
    Matrix Xbar = emx::random_rank_k_eigenmatrix(shape, a.kbar, emx::derive_seed(a.seed, 1));
    Vector xbar = emx::vectorize(Xbar);
    Matrix samples = emx::sample_spiked(a.lambda1, xbar, a.n, emx::derive_seed(a.seed, 2));
    auto A = std::make_shared<const Matrix>(emx::empirical_cov(samples));

    emx::SolverOptions so;
    so.k = a.k;
    so.max_iterations = 200;
    so.record_trajectory = true;
    so.record_iterates = true;
    emx::SolveReport rep = emx::smartpm(emx::LinOp::dense(A), emx::init_top_eigenmatrix(*A, shape),
                                        so, &Xbar);

    // split A = lambda xbar xbar' + E with lambda the planted Rayleigh quotient
    const double lambda = xbar.dot((*A) * xbar);
    Matrix E = *A - lambda * (xbar * xbar.transpose());
    const double rho =
        emx::rho_sampled_max(E, shape, a.k, rep.iterates, Xbar, 20, emx::derive_seed(a.seed, 3));

    const double inner0 = std::abs(emx::frobenius_inner(rep.iterates.front(), Xbar));
    emx::TheoremConstants pre = emx::theorem_constants(lambda, lambda, rho, a.k, a.kbar, 0.5);
    double theta = inner0 - pre.delta - 1e-6;
    theta = std::min(std::max(theta, 1e-9), 1.0 - 1e-12);
    emx::TheoremConstants tc = emx::theorem_constants(lambda, lambda, rho, a.k, a.kbar, theta);

    json j;
    j["lambda"] = lambda;
    j["rho_euv"] = rho;
    j["constants"] = tc.to_json();
    j["contraction"] = emx::check_contraction(rep, tc).to_json();
    emit_json(j, a.out);
    return 0;
}

int cmd_theory_assumption2(const TheoryArgs& a) {
    const Shape shape = Shape{a.p1, a.p2}.checked();
    const Index d = shape.d();
    auto eng = emx::make_engine(emx::derive_seed(a.seed, 0xA2));
    std::normal_distribution<double> gauss;
    Matrix G(d, d);
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) G(i, j) = gauss(eng);
    Matrix E = (G + G.transpose()) / std::sqrt(2.0);
    emit_json(emx::check_assumption2(E, shape).to_json(), a.out);
    return 0;
}

int cmd_theory_perturbation(const TheoryArgs& a) {
    const Shape shape = Shape{a.p1, a.p2}.checked();
    const Index d = shape.d();
    Matrix Xbar = emx::random_rank_k_eigenmatrix(shape, a.kbar, emx::derive_seed(a.seed, 1));
    Vector xbar = emx::vectorize(Xbar);
    Matrix Abar = a.lambda1 * (xbar * xbar.transpose());

    auto eng = emx::make_engine(emx::derive_seed(a.seed, 2));
    std::normal_distribution<double> gauss;
    Matrix G(d, d);
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) G(i, j) = gauss(eng);
    Matrix E = (G + G.transpose()) / std::sqrt(2.0);
    E *= a.noise / emx::spectral_norm(E);

    emx::ProjectionPair pair = emx::ProjectionPair::from_top_singular(Xbar, a.k);
    emit_json(emx::check_perturbation(Abar, E, pair).to_json(), a.out);
    return 0;
}

int cmd_theory_rank_trunc(const TheoryArgs& a) {
    const Shape shape = Shape{a.p1, a.p2}.checked();
    if (!(a.align >= 0.0 && a.align < 1.0))
        throw emx::ParameterError("rank-trunc: --align must lie in [0, 1)");
    Matrix Xbar = emx::random_rank_k_eigenmatrix(shape, a.kbar, emx::derive_seed(a.seed, 1));
    Vector xbar = emx::vectorize(Xbar);

    auto eng = emx::make_engine(emx::derive_seed(a.seed, 2));
    std::normal_distribution<double> gauss;
    Vector w(shape.d());
    for (Index i = 0; i < shape.d(); ++i) w(i) = gauss(eng);
    w -= w.dot(xbar) * xbar;
    const double wn = w.norm();
    if (wn < 1e-12) throw emx::NumericalError("rank-trunc: degenerate orthogonal draw");
    Vector y = a.align * xbar + std::sqrt(1.0 - a.align * a.align) * (w / wn);
    y /= y.norm();

    emit_json(emx::check_rank_trunc_error(y, Xbar, a.k).to_json(), a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"low-rank principal eigenmatrix analysis: generators, solver, theory probes, "
                 "experiment harness"};
    app.set_version_flag("--version", std::string(EMX_VERSION));
    app.require_subcommand(1);
    int rc = 0;

    // gen
    GenArgs ga;
    auto* gen = app.add_subcommand("gen", "generate a structured covariance file (EMX1 + JSON sidecar)");
    gen->add_option("--family", ga.family,
                    "circulant | toeplitz | diag_dominant | kronecker | general_psd | spiked")
        ->required();
    auto* g_d = gen->add_option("--d", ga.d, "ambient dimension");
    gen->add_option("--shape", ga.shape, "matricization shape p1 p2")->expected(2);
    auto* g_r = gen->add_option("--r", ga.r, "decay parameter (toeplitz/circulant)");
    auto* g_l = gen->add_option("--lambda1", ga.lambda1, "spike strength (spiked)");
    auto* g_k = gen->add_option("--kbar", ga.kbar, "planted rank (spiked)");
    gen->add_option("--seed", ga.seed, "generator seed");
    gen->add_option("--out", ga.out, "output file path (default ./out/gen-<stamp>/covariance.emx)");
    gen->add_flag("--force", ga.force, "overwrite an existing output file");
    gen->callback([&]() {
        ga.has_d = g_d->count() > 0;
        ga.has_r = g_r->count() > 0;
        ga.has_lambda1 = g_l->count() > 0;
        ga.has_kbar = g_k->count() > 0;
        rc = cmd_gen(ga);
    });

    // solve
    SolveArgs sa;
    auto* solve = app.add_subcommand("solve", "run the rank-truncated power iteration on a matrix file");
    solve->add_option("--matrix", sa.matrix, "EMX1 or CSV file holding the symmetric operator")
        ->required();
    solve->add_option("--k", sa.k, "truncation rank");
    solve->add_option("--init", sa.init, "random | random_rank_k | top_eigenmatrix");
    solve->add_option("--seed", sa.seed, "initializer seed");
    solve->add_option("--shape", sa.shape, "matricization shape p1 p2 (required for non-square d)")
        ->expected(2);
    solve->add_option("--max-iterations", sa.max_iterations, "iteration budget");
    solve->add_option("--tolerance", sa.tolerance, "sign-aligned stopping tolerance");
    solve->add_flag("--record-iterates", sa.record_iterates, "embed every iterate in the report");
    solve->add_flag("--no-trajectory", sa.no_trajectory, "omit the per-iteration trajectory");
    solve->add_option("--out", sa.out, "write the report JSON here instead of stdout");
    solve->callback([&]() { rc = cmd_solve(sa); });

    // experiment
    ExpArgs ea;
    auto* exp = app.add_subcommand("experiment", "run a replicated study and emit CSV tables");
    exp->require_subcommand(1);
    const std::vector<std::pair<std::string, std::string>> studies = {
        {"spectrum", "spectrum"},
        {"trajectory", "trajectory"},
        {"sample-efficiency", "sample_efficiency"},
        {"rank-sweep", "rank_sweep"}};
    for (const auto& [cli_name, study] : studies) {
        auto* s = exp->add_subcommand(cli_name, "run the " + study + " study");
        s->add_option("--config", ea.config, "JSON config file (flags override file values)");
        s->add_option("--out", ea.out, "output directory (default ./out/<study>-<stamp>)");
        s->add_flag("--force", ea.force, "write into an existing non-empty directory");
        s->add_option("--threads", ea.threads, "worker threads (0 = EIGENMAT_THREADS or hardware)");
        auto* rp = s->add_option("--replications", ea.replications, "override the replication count");
        auto* bs = s->add_option("--base-seed", ea.base_seed, "override the base seed");
        const std::string study_name = study;
        s->callback([&, study_name, rp, bs]() {
            rc = cmd_experiment(study_name, ea, rp->count() > 0, bs->count() > 0);
        });
    }
    auto* replay = exp->add_subcommand("replay", "re-run a study from its manifest.json");
    replay->add_option("--manifest", ea.manifest, "manifest.json of a previous run")->required();
    replay->add_option("--out", ea.out, "output directory (default ./out/<study>-replay-<stamp>)");
    replay->add_flag("--force", ea.force, "write into an existing non-empty directory");
    replay->add_option("--threads", ea.threads, "worker threads (0 = EIGENMAT_THREADS or hardware)");
    replay->callback([&]() { rc = cmd_replay(ea); });

    // theory
    TheoryArgs ta;
    auto* theory = app.add_subcommand("theory", "run a theoretical-constant or inequality probe");
    theory->require_subcommand(1);

    auto* tc = theory->add_subcommand("constants", "closed-form constants from (lambda, gap, rho)");
    tc->add_option("--lambda", ta.lambda, "top eigenvalue")->required();
    tc->add_option("--gap", ta.gap, "eigen-gap")->required();
    tc->add_option("--rho", ta.rho, "projected noise norm")->required();
    tc->add_option("--k", ta.k, "truncation rank");
    tc->add_option("--kbar", ta.kbar, "planted rank");
    tc->add_option("--theta", ta.theta, "alignment floor in (0, 1)");
    tc->add_option("--out", ta.out, "write JSON here instead of stdout");
    tc->callback([&]() { rc = cmd_theory_constants(ta); });

    auto* l1 = theory->add_subcommand("lemma1", "projected-noise scaling probe over k");
    l1->add_option("--p", ta.p, "side length (shape p x p)");
    l1->add_option("--k", ta.k_values, "ranks to probe")->expected(-1);
    l1->add_option("--trials", ta.trials, "trials per rank");
    l1->add_option("--seed", ta.seed, "probe seed");
    l1->add_option("--threads", ta.threads, "worker threads");
    l1->add_option("--out", ta.out, "write JSON here instead of stdout");
    l1->callback([&]() { rc = cmd_theory_lemma1(ta); });

    auto* mono = theory->add_subcommand("monotonicity", "Rayleigh-quotient monotonicity of a saved run");
    mono->add_option("--report", ta.report, "SolveReport JSON (from solve)")->required();
    mono->add_option("--matrix", ta.matrix,
                     "operator file; recomputes quotients when the report embeds iterates");
    mono->add_option("--out", ta.out, "write JSON here instead of stdout");
    mono->callback([&]() { rc = cmd_theory_monotonicity(ta); });

    auto* contr = theory->add_subcommand("contraction", "contraction inequality on a fresh spiked run");
    contr->add_option("--p1", ta.p1, "rows of the matricization");
    contr->add_option("--p2", ta.p2, "columns of the matricization");
    contr->add_option("--lambda1", ta.lambda1, "spike strength");
    contr->add_option("--n", ta.n, "sample count");
    contr->add_option("--k", ta.k, "truncation rank");
    contr->add_option("--kbar", ta.kbar, "planted rank");
    contr->add_option("--seed", ta.seed, "instance seed");
    contr->add_option("--out", ta.out, "write JSON here instead of stdout");
    contr->callback([&]() { rc = cmd_theory_contraction(ta); });

    auto* a2 = theory->add_subcommand("assumption2", "eigenvector flatness of a symmetric Gaussian matrix");
    a2->add_option("--p1", ta.p1, "rows of the matricization");
    a2->add_option("--p2", ta.p2, "columns of the matricization");
    a2->add_option("--seed", ta.seed, "draw seed");
    a2->add_option("--out", ta.out, "write JSON here instead of stdout");
    a2->callback([&]() { rc = cmd_theory_assumption2(ta); });

    auto* pert = theory->add_subcommand("perturbation", "compressed-operator perturbation bounds");
    pert->add_option("--p1", ta.p1, "rows of the matricization");
    pert->add_option("--p2", ta.p2, "columns of the matricization");
    pert->add_option("--lambda1", ta.lambda1, "ideal top eigenvalue");
    pert->add_option("--noise", ta.noise, "spectral norm of the noise matrix");
    pert->add_option("--k", ta.k, "projection rank");
    pert->add_option("--kbar", ta.kbar, "planted rank");
    pert->add_option("--seed", ta.seed, "instance seed");
    pert->add_option("--out", ta.out, "write JSON here instead of stdout");
    pert->callback([&]() { rc = cmd_theory_perturbation(ta); });

    auto* rt = theory->add_subcommand("rank-trunc", "alignment loss of a single rank truncation");
    rt->add_option("--p1", ta.p1, "rows of the matricization");
    rt->add_option("--p2", ta.p2, "columns of the matricization");
    rt->add_option("--k", ta.k, "truncation rank");
    rt->add_option("--kbar", ta.kbar, "planted rank");
    rt->add_option("--align", ta.align, "target alignment of the probe vector, in [0, 1)");
    rt->add_option("--seed", ta.seed, "instance seed");
    rt->add_option("--out", ta.out, "write JSON here instead of stdout");
    rt->callback([&]() { rc = cmd_theory_rank_trunc(ta); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code != 0) {
            // an unknown probe or study name also prints what is available
            if (theory->parsed()) std::cerr << theory->help();
            if (exp->parsed()) std::cerr << exp->help();
            return 2;
        }
        return 0;
    } catch (const emx::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const emx::ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const emx::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const emx::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
