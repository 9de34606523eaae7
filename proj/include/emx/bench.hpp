#pragma once
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "emx/covgen.hpp"
#include "emx/solver.hpp"

namespace emx {

// Replicated-experiment configuration; parses strictly (unknown keys are errors).
struct ExperimentConfig {
    std::string study;  // spectrum | trajectory | sample_efficiency | rank_sweep
    Shape shape{32, 32};
    std::vector<double> lambda1_list{5.0, 10.0, 100.0};
    double lambda2 = 1.0;  // noise covariance is lambda2 * I
    Index kbar = 1;
    std::vector<Index> k_list{2};
    std::vector<Index> n_list{100, 200, 400, 800, 1600};
    std::vector<std::string> inits{"random", "random_rank_k", "top_eigenmatrix"};
    int replications = 100;
    std::uint64_t base_seed = 0;
    bool fresh_xbar = true;  // regenerate the planted eigenmatrix per replication
    int max_iterations = 500;
    double tolerance = 1e-9;
    // spectrum study
    std::vector<std::string> families{"toeplitz", "circulant", "kronecker", "general_psd"};
    bool sampled = true;    // empirical covariance of n = n_factor * d draws; false = population
    double n_factor = 2.0;
    double toeplitz_r = 0.9;
    double circulant_r = 0.5;
    std::string out;  // default output directory (CLI may override)

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;
};

// mean, sample std (n-1), and mean natural-log of a replication's error values.
struct AggregateStats {
    double mean = 0.0;
    double std = 0.0;
    double mean_log = 0.0;
    int count = 0;
};
AggregateStats aggregate(const std::vector<double>& values);

struct FailureRecord {
    std::string grid_point;
    int replication = 0;
    std::string message;
};

struct AssertionResult {
    std::string study;
    std::string name;
    bool passed = false;
    std::string details;
};

// Rendered table: cells are final strings so emitted bytes are scheduling-independent.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    void write_csv(const std::string& path) const;
};

struct StudyOutput {
    std::string study;
    std::map<std::string, Table> tables;  // file stem -> table
    std::vector<FailureRecord> failures;
    std::vector<AssertionResult> assertions;
};

StudyOutput run_spectrum_study(const ExperimentConfig& cfg);
StudyOutput run_trajectory(const ExperimentConfig& cfg);
StudyOutput run_sample_efficiency(const ExperimentConfig& cfg);
StudyOutput run_rank_sweep(const ExperimentConfig& cfg);
StudyOutput run_study(const ExperimentConfig& cfg);  // dispatch on cfg.study

// Writes <stem>.csv per table plus manifest.json (config echo, version, seed, UTC
// timestamp) and assertions.json; timestamp aside, outputs depend only on (config, seed).
void emit(const StudyOutput& out, const ExperimentConfig& cfg, const std::string& dir);

ExperimentConfig config_from_manifest(const nlohmann::json& manifest);

}  // namespace emx
