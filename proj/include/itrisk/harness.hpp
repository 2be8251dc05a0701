#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "itrisk/memory_matrix.hpp"
#include "itrisk/model_data.hpp"
#include "itrisk/risk_inference.hpp"
#include "itrisk/solvers.hpp"

namespace itrisk {

struct ExperimentConfig {
    SimulationConfig sim;
    std::vector<SolverConfig> solvers;
    Eigen::Index reps = 1;
    MemoryMethod memory_method = MemoryMethod::exact();
    double alpha = 0.05;
    std::vector<Eigen::Index> coordinates = {1};   // 1-based j
    std::vector<Eigen::Index> inference_times;     // empty = default set
    bool compute_limit_risk = false;
    std::filesystem::path output_dir = "out";
    unsigned threads = 0; // 0 = hardware concurrency

    void validate() const;
    // Default inference times {5, 10, 50, min(100, T)} clipped to [1, T].
    std::vector<Eigen::Index> resolved_inference_times(Eigen::Index T) const;
};

// JSON round trip for the experiment configuration (schema in README.md).
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

struct RiskCurveRow {
    Eigen::Index rep = 0;
    std::string algorithm;
    Eigen::Index t = 0;
    double r_hat = 0.0;
    std::optional<double> r_true;
    std::optional<double> r_infinity;
};

struct ZscoreRow {
    Eigen::Index rep = 0;
    std::string algorithm;
    Eigen::Index t = 0;
    Eigen::Index j = 0;
    double z = 0.0;
};

struct CoverageRow {
    std::string algorithm;
    Eigen::Index t = 0;
    Eigen::Index j = 0;
    double coverage = 0.0;
    double mean_width = 0.0;
};

struct RunOutputs {
    std::vector<RiskCurveRow> risk_curve;
    std::vector<ZscoreRow> zscores;
    std::vector<CoverageRow> coverage;
    std::string manifest_json;
};

// Full experiment: per replication, generate an instance, run every solver,
// build the memory matrix with the configured method, compute risks, the
// early-stopping index, optional limiting risks, and inference at the
// configured (t, j).  Deterministic given the seed, independent of the
// thread count.
RunOutputs run_experiment(const ExperimentConfig& cfg);

// risk_curve.csv, zscores.csv, coverage.csv, manifest.json.
void emit_csv(const RunOutputs& outputs, const std::filesystem::path& dir);

struct LassoLimit {
    Eigen::VectorXd b;
    std::optional<double> r_infinity; // true risk of the limit, when truth is known
    bool converged = false;
    Eigen::Index iterations = 0;
};

// ISTA to convergence: stops when ||b^t - b^{t-1}|| <= tol * max(1, ||b^t||).
// Non-convergence within max_iter is flagged, not fatal.
LassoLimit lasso_limit(const LinearModelInstance& instance, double lambda,
                       double tol = 1e-10, Eigen::Index max_iter = 100000);

// Runs fn(job) for job = 0..jobs-1 on a bounded pool; thread count 0 means
// hardware concurrency.  Job outputs must go to preallocated slots.
void run_parallel(std::size_t jobs, unsigned threads, const std::function<void(std::size_t)>& fn);

} // namespace itrisk
