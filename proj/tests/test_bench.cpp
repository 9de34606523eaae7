#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "doctest.h"
#include "emx/bench.hpp"
#include "emx/errors.hpp"

using namespace emx;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_efficiency_config() {
    return {
        {"study", "sample_efficiency"}, {"shape", {6, 6}},  {"lambda1", {5.0, 100.0}},
        {"k", {2}},                     {"n", {40, 160}},   {"inits", {"random"}},
        {"replications", 6},            {"base_seed", 77},
    };
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("emxtest-" + std::to_string(std::rand()) + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("aggregate: mean, sample std, log mean, empty input") {
    AggregateStats s = aggregate({1.0, 3.0});
    CHECK(s.mean == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(s.std == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));  // n-1 denominator
    CHECK(s.mean_log == doctest::Approx(0.5 * std::log(3.0)).epsilon(1e-12));
    CHECK(s.count == 2);

    AggregateStats one = aggregate({4.0});
    CHECK(one.mean == 4.0);
    CHECK(one.std == 0.0);
    CHECK(one.count == 1);

    CHECK_THROWS_AS(aggregate({}), ParameterError);
}

TEST_CASE("ExperimentConfig: defaults, strict keys, validation") {
    ExperimentConfig cfg =
        ExperimentConfig::from_json(nlohmann::json{{"study", "sample_efficiency"}});
    CHECK(cfg.shape.p1 == 32);
    CHECK(cfg.replications == 100);
    CHECK(cfg.lambda1_list == std::vector<double>{5.0, 10.0, 100.0});
    CHECK(cfg.inits.size() == 3);

    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::object()), ConfigError);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json(nlohmann::json{{"study", "sample_efficiency"}, {"bogus", 1}}),
        ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"study", "unknown_study"}}),
                    ConfigError);

    // hyphen/underscore normalization in the study name
    CHECK(ExperimentConfig::from_json(nlohmann::json{{"study", "sample-efficiency"}}).study ==
          "sample_efficiency");
    CHECK(ExperimentConfig::from_json(nlohmann::json{{"study", "rank-sweep"}}).study ==
          "rank_sweep");

    // duplicate or unknown inits
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{
                        {"study", "sample_efficiency"}, {"inits", {"random", "random"}}}),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"study", "sample_efficiency"},
                                                               {"inits", {"oracle"}}}),
                    ConfigError);

    // grid constraints
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"study", "sample_efficiency"},
                                                               {"lambda1", {0.0}}}),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(
                        nlohmann::json{{"study", "sample_efficiency"}, {"k", {1, 2}}}),
                    ConfigError);  // single k required
    CHECK_THROWS_AS(ExperimentConfig::from_json(
                        nlohmann::json{{"study", "sample_efficiency"}, {"k", {40}}}),
                    ConfigError);  // k > min(p1, p2) at the default 32 x 32 shape
    CHECK_THROWS_AS(ExperimentConfig::from_json(
                        nlohmann::json{{"study", "trajectory"}, {"n", {100, 200}}}),
                    ConfigError);  // trajectory runs one n
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"study", "spectrum"},
                                                               {"families", {"weird"}}}),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json{{"study", "spectrum"},
                                                               {"toeplitz_r", 1.0}}),
                    ConfigError);

    // trajectory defaults: tolerance pinned to zero, single n
    ExperimentConfig traj = ExperimentConfig::from_json(nlohmann::json{{"study", "trajectory"}});
    CHECK(traj.tolerance == 0.0);
    CHECK(traj.n_list == std::vector<Index>{800});
    CHECK(traj.max_iterations == 100);

    // rank_sweep defaults
    ExperimentConfig sweep = ExperimentConfig::from_json(nlohmann::json{{"study", "rank_sweep"}});
    CHECK(sweep.k_list == std::vector<Index>{1, 2, 4, 8, 16, 32});
    CHECK(sweep.lambda1_list == std::vector<double>{100.0});
    CHECK(sweep.inits == std::vector<std::string>{"random"});

    // round trip through to_json
    ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.study == cfg.study);
    CHECK(back.shape.p1 == cfg.shape.p1);
    CHECK(back.lambda1_list == cfg.lambda1_list);
    CHECK(back.n_list == cfg.n_list);
    CHECK(back.base_seed == cfg.base_seed);
}

TEST_CASE("Table::write_csv: exact bytes") {
    TempDir tmp;
    Table t;
    t.columns = {"a", "b"};
    t.rows = {{"1", "2.5"}, {"x", "y"}};
    fs::path p = tmp.path / "t.csv";
    t.write_csv(p.string());
    CHECK(slurp(p) == "a,b\n1,2.5\nx,y\n");
}

TEST_CASE("sample_efficiency study: schema, assertions, accounting") {
    ExperimentConfig cfg = ExperimentConfig::from_json(tiny_efficiency_config());
    StudyOutput out = run_study(cfg);
    CHECK(out.study == "sample_efficiency");
    REQUIRE(out.tables.count("efficiency") == 1);
    const Table& t = out.tables.at("efficiency");
    CHECK(t.columns == std::vector<std::string>{"method", "init", "lambda1", "n", "mean_error",
                                                "std_error", "mean_log_error", "count"});
    // methods = smartpm/random + power/random = 2; grid = 2 lambda1 x 2 n
    CHECK(t.rows.size() == 2 * 2 * 2);
    CHECK(out.failures.empty());
    for (const auto& row : t.rows) CHECK(row.back() == "6");  // all replications accounted

    // error decreasing in n for each method: find smartpm rows at lambda1 = 5
    double e40 = -1, e160 = -1;
    for (const auto& row : t.rows)
        if (row[0] == "smartpm" && row[2] == "5" && row[3] == "40") e40 = std::stod(row[4]);
    for (const auto& row : t.rows)
        if (row[0] == "smartpm" && row[2] == "5" && row[3] == "160") e160 = std::stod(row[4]);
    REQUIRE(e40 > 0);
    REQUIRE(e160 > 0);
    CHECK(e160 < e40);

    for (const auto& a : out.assertions) {
        INFO(a.study, "/", a.name, ": ", a.details);
        CHECK(a.passed);
    }
}

TEST_CASE("study outputs are deterministic and thread-count independent") {
    ExperimentConfig cfg = ExperimentConfig::from_json(tiny_efficiency_config());

    StudyOutput serial = run_study(cfg);
#if defined(_WIN32)
    _putenv_s("EIGENMAT_THREADS", "8");
#else
    setenv("EIGENMAT_THREADS", "8", 1);
#endif
    StudyOutput parallel = run_study(cfg);
#if defined(_WIN32)
    _putenv_s("EIGENMAT_THREADS", "");
#else
    unsetenv("EIGENMAT_THREADS");
#endif

    REQUIRE(serial.tables.count("efficiency") == 1);
    REQUIRE(parallel.tables.count("efficiency") == 1);
    CHECK(serial.tables.at("efficiency").rows == parallel.tables.at("efficiency").rows);

    // Rerunning with the same seed is bit-identical.
    StudyOutput again = run_study(cfg);
    CHECK(serial.tables.at("efficiency").rows == again.tables.at("efficiency").rows);

    // A different base seed changes the table.
    ExperimentConfig other = cfg;
    other.base_seed = 78;
    StudyOutput shifted = run_study(other);
    CHECK(serial.tables.at("efficiency").rows != shifted.tables.at("efficiency").rows);
}

TEST_CASE("trajectory study: uniform-length per-iteration rows") {
    auto j = nlohmann::json{{"study", "trajectory"},  {"shape", {6, 6}},
                            {"lambda1", {10.0}},      {"k", {2}},
                            {"n", {60}},              {"inits", {"random", "top_eigenmatrix"}},
                            {"replications", 5},      {"base_seed", 3},
                            {"max_iterations", 12}};
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    StudyOutput out = run_study(cfg);
    REQUIRE(out.tables.size() == 1);
    const Table& t = out.tables.begin()->second;
    CHECK(out.tables.begin()->first == "trajectory_lambda1_10");
    CHECK(t.columns == std::vector<std::string>{"method", "init", "lambda1", "t",
                                                "mean_log_error", "std_log_error"});
    // 3 method rows (smartpm x 2 inits + power) x (max_iterations + 1) t values
    CHECK(t.rows.size() == 3 * 13);
    CHECK(out.failures.empty());
}

TEST_CASE("rank_sweep study: power row and ordering assertions") {
    auto j = nlohmann::json{{"study", "rank_sweep"}, {"shape", {8, 8}}, {"lambda1", {100.0}},
                            {"k", {1, 2, 4, 8}},     {"n", {60}},       {"replications", 8},
                            {"base_seed", 5}};
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    StudyOutput out = run_study(cfg);
    REQUIRE(out.tables.count("ranksweep") == 1);
    const Table& t = out.tables.at("ranksweep");
    CHECK(t.columns == std::vector<std::string>{"method", "k", "mean_error", "std_error", "count"});
    REQUIRE(t.rows.size() == 5);  // 4 smartpm rows + 1 power row
    CHECK(t.rows.back()[0] == "power");
    CHECK(t.rows.back()[1] == "0");
    for (size_t i = 0; i + 1 < t.rows.size(); ++i) CHECK(t.rows[i][0] == "smartpm");

    // Full-rank smartpm equals power within aggregation noise.
    double full = std::stod(t.rows[3][2]), pow_err = std::stod(t.rows[4][2]);
    CHECK(std::abs(full - pow_err) <= 0.05 * pow_err + 1e-12);
    for (const auto& a : out.assertions) {
        INFO(a.study, "/", a.name, ": ", a.details);
        CHECK(a.passed);
    }
}

TEST_CASE("spectrum study: per-family singular value rows") {
    auto j = nlohmann::json{{"study", "spectrum"},
                            {"shape", {5, 5}},
                            {"families", {"toeplitz", "circulant", "kronecker", "general_psd"}},
                            {"replications", 3},
                            {"sampled", false},
                            {"base_seed", 11}};
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    StudyOutput out = run_study(cfg);
    REQUIRE(out.tables.count("spectrum") == 1);
    const Table& t = out.tables.at("spectrum");
    CHECK(t.columns ==
          std::vector<std::string>{"family", "index", "mean_sigma", "std_sigma", "instances"});
    CHECK(t.rows.size() == 4 * 5);  // 4 families x p singular values
    // First singular value is normalized to 1; later ones never exceed it.
    for (const auto& row : t.rows) {
        if (row[1] == "1") CHECK(std::stod(row[2]) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::stod(row[2]) <= 1.0 + 1e-12);
    }
    // Circulant population eigenmatrix is exactly rank 1.
    for (const auto& row : t.rows)
        if (row[0] == "circulant" && row[1] != "1") CHECK(std::stod(row[2]) < 1e-8);
}

TEST_CASE("emit/config_from_manifest: manifest round trip, assertions file") {
    TempDir tmp;
    ExperimentConfig cfg = ExperimentConfig::from_json(tiny_efficiency_config());
    StudyOutput out = run_study(cfg);
    emit(out, cfg, tmp.path.string());

    CHECK(fs::exists(tmp.path / "efficiency.csv"));
    CHECK(fs::exists(tmp.path / "manifest.json"));
    CHECK(fs::exists(tmp.path / "assertions.json"));

    std::ifstream mf(tmp.path / "manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(mf);
    CHECK(manifest.at("base_seed").get<std::uint64_t>() == 77);
    CHECK(manifest.at("failure_count").get<int>() == 0);
    CHECK(manifest.contains("version"));
    CHECK(manifest.contains("created_utc"));

    ExperimentConfig replay = config_from_manifest(manifest);
    CHECK(replay.study == cfg.study);
    CHECK(replay.base_seed == cfg.base_seed);
    CHECK(replay.n_list == cfg.n_list);

    // Replaying produces byte-identical CSV output.
    TempDir tmp2;
    StudyOutput out2 = run_study(replay);
    emit(out2, replay, tmp2.path.string());
    CHECK(slurp(tmp.path / "efficiency.csv") == slurp(tmp2.path / "efficiency.csv"));

    std::ifstream af(tmp.path / "assertions.json");
    nlohmann::json assertions = nlohmann::json::parse(af);
    REQUIRE(assertions.is_array());
    for (const auto& a : assertions) CHECK(a.at("passed").get<bool>());
}
