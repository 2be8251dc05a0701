#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "itrisk/csv.hpp"
#include "itrisk/errors.hpp"
#include "itrisk/harness.hpp"
#include "support/test_util.hpp"

#include <json.hpp>

using namespace itrisk;
using itrisk::testing::small_instance;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.sim.n = 40;
    cfg.sim.p = 25;
    cfg.sim.rho = 0.5;
    cfg.sim.seed = 61;
    SolverConfig ista;
    ista.algorithm = Algorithm::ISTA;
    ista.lambda = 0.1;
    ista.T = 6;
    SolverConfig gd;
    gd.algorithm = Algorithm::GD;
    gd.T = 6;
    cfg.solvers = {ista, gd};
    cfg.reps = 3;
    cfg.inference_times = {3, 6};
    cfg.threads = 1;
    return cfg;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("run_experiment: single rep, single iterate") {
    ExperimentConfig cfg = tiny_config();
    for (SolverConfig& solver : cfg.solvers) solver.T = 1;
    cfg.inference_times = {1};
    cfg.reps = 1;
    const RunOutputs outputs = run_experiment(cfg);
    REQUIRE(outputs.risk_curve.size() == 2); // one row per algorithm
    const LinearModelInstance instance = generate_instance(cfg.sim, 0);
    const double expected = instance.y.squaredNorm() / static_cast<double>(cfg.sim.n);
    for (const RiskCurveRow& row : outputs.risk_curve) {
        CHECK(row.t == 1);
        CHECK(row.r_hat == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("run_experiment: byte-identical outputs across thread counts") {
    ExperimentConfig cfg = tiny_config();
    const auto dir1 = std::filesystem::temp_directory_path() / "itrisk_det_1";
    const auto dir4 = std::filesystem::temp_directory_path() / "itrisk_det_4";
    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir4);

    cfg.threads = 1;
    emit_csv(run_experiment(cfg), dir1);
    cfg.threads = 4;
    emit_csv(run_experiment(cfg), dir4);

    for (const char* name : {"risk_curve.csv", "zscores.csv", "coverage.csv"})
        CHECK(slurp(dir1 / name) == slurp(dir4 / name));
    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir4);
}

TEST_CASE("emit_csv: golden headers and empty outputs") {
    const auto dir = std::filesystem::temp_directory_path() / "itrisk_empty_out";
    std::filesystem::remove_all(dir);
    emit_csv(RunOutputs{}, dir);
    CHECK(slurp(dir / "risk_curve.csv") == "rep,algorithm,t,r_hat,r_true,r_infinity\n");
    CHECK(slurp(dir / "zscores.csv") == "rep,algorithm,t,j,z\n");
    CHECK(slurp(dir / "coverage.csv") == "algorithm,t,j,coverage,mean_width\n");
    std::filesystem::remove_all(dir);
}

TEST_CASE("emit_csv: risk curve round-trips exactly") {
    ExperimentConfig cfg = tiny_config();
    cfg.reps = 2;
    const RunOutputs outputs = run_experiment(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "itrisk_roundtrip";
    std::filesystem::remove_all(dir);
    emit_csv(outputs, dir);

    std::ifstream in(dir / "risk_curve.csv");
    std::string line;
    std::getline(in, line); // header
    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() >= 5);
        const RiskCurveRow& row = outputs.risk_curve.at(row_index++);
        CHECK(parse_double(cells[3], "r_hat") == row.r_hat);
        if (row.r_true) CHECK(parse_double(cells[4], "r_true") == *row.r_true);
    }
    CHECK(row_index == outputs.risk_curve.size());
    std::filesystem::remove_all(dir);
}

TEST_CASE("run_experiment: manifest records the seed, rows cover every t") {
    ExperimentConfig cfg = tiny_config();
    cfg.sim.seed = 4242;
    cfg.reps = 2;
    const RunOutputs outputs = run_experiment(cfg);
    const nlohmann::json manifest = nlohmann::json::parse(outputs.manifest_json);
    CHECK(manifest.at("seed").get<std::uint64_t>() == 4242);
    CHECK(manifest.contains("versions"));
    CHECK(manifest.contains("wall_time_ms"));

    // Progressivity: a row for every t <= T per (rep, algorithm) even though
    // inference ran at a subset of times.
    std::size_t count = 0;
    for (const RiskCurveRow& row : outputs.risk_curve) {
        CHECK(row.t >= 1);
        CHECK(row.t <= 6);
        ++count;
    }
    CHECK(count == 2 * 2 * 6);
}

TEST_CASE("run_experiment: n = p limiting-risk warning lands in the manifest") {
    ExperimentConfig cfg;
    cfg.sim.n = 30;
    cfg.sim.p = 30;
    cfg.sim.seed = 9;
    SolverConfig gd;
    gd.algorithm = Algorithm::GD;
    gd.T = 4;
    cfg.solvers = {gd};
    cfg.reps = 1;
    cfg.inference_times = {2};
    cfg.compute_limit_risk = true;
    cfg.threads = 1;
    const RunOutputs outputs = run_experiment(cfg);
    const nlohmann::json manifest = nlohmann::json::parse(outputs.manifest_json);
    CHECK(manifest.at("warnings").size() == 1);
    for (const RiskCurveRow& row : outputs.risk_curve) CHECK(row.r_infinity.has_value());
}

TEST_CASE("config: JSON parsing and validation errors") {
    CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"sim": {"n": 10, "p": 5}})"), ConfigError);

    const std::string base = R"({
      "sim": {"n": 30, "p": 20, "seed": 1},
      "solvers": [{"algorithm": "ISTA", "lambda": 0.1, "T": 5}],
      "reps": 2
    })";
    const ExperimentConfig cfg = parse_experiment_config(base);
    CHECK(cfg.solvers.size() == 1);
    CHECK(cfg.reps == 2);
    CHECK(cfg.alpha == 0.05);

    // Unknown keys are typos, not extensions.
    CHECK_THROWS_AS(parse_experiment_config(R"({
      "sim": {"n": 30, "p": 20},
      "solvers": [{"algorithm": "ISTA", "lamda": 0.1, "T": 5}]
    })"),
                    ConfigError);

    // gd-closed requires every solver to be GD.
    CHECK_THROWS_AS(parse_experiment_config(R"({
      "sim": {"n": 30, "p": 20},
      "solvers": [{"algorithm": "ISTA", "lambda": 0.1, "T": 5}],
      "memory_method": {"method": "gd-closed"}
    })"),
                    ConfigError);

    // Inference times outside [1, T].
    CHECK_THROWS_AS(parse_experiment_config(R"({
      "sim": {"n": 30, "p": 20},
      "solvers": [{"algorithm": "GD", "T": 5}],
      "inference_times": [6]
    })"),
                    ConfigError);

    // Round trip through the JSON echo.
    const ExperimentConfig echoed = parse_experiment_config(experiment_config_to_json(cfg));
    CHECK(echoed.sim.n == cfg.sim.n);
    CHECK(echoed.solvers[0].lambda == cfg.solvers[0].lambda);
}

TEST_CASE("resolved_inference_times defaults") {
    ExperimentConfig cfg = tiny_config();
    cfg.inference_times.clear();
    CHECK(cfg.resolved_inference_times(500) ==
          std::vector<Eigen::Index>{5, 10, 50, 100});
    CHECK(cfg.resolved_inference_times(30) == std::vector<Eigen::Index>{5, 10, 30});
    CHECK(cfg.resolved_inference_times(3) == std::vector<Eigen::Index>{3});
    CHECK(cfg.resolved_inference_times(1) == std::vector<Eigen::Index>{1});
}

TEST_CASE("lasso_limit") {
    const LinearModelInstance instance = small_instance(40, 25, 81);

    // Penalty above ||X'y||_inf / n: the null solution.
    const double lambda_max =
        (instance.X.transpose() * instance.y).cwiseAbs().maxCoeff() / 40.0;
    const LassoLimit null_fit = lasso_limit(instance, 1.5 * lambda_max);
    CHECK(null_fit.converged);
    CHECK(null_fit.b.isZero(1e-12));
    REQUIRE(null_fit.r_infinity.has_value());
    CHECK(*null_fit.r_infinity ==
          doctest::Approx(true_risk(Eigen::VectorXd::Zero(25), instance.truth)).epsilon(1e-12));

    // lambda = 0 on a full-rank tall design: least squares.
    const LassoLimit ls = lasso_limit(instance, 0.0, 1e-12, 200000);
    const Eigen::VectorXd b_tilde = minnorm_limit(instance.X, instance.y).b;
    CHECK((ls.b - b_tilde).norm() <= 1e-6 * std::max(1.0, b_tilde.norm()));

    // The limit's objective is below the tail of the iterate sequence.
    SolverConfig cfg;
    cfg.algorithm = Algorithm::ISTA;
    cfg.lambda = 0.15;
    cfg.T = 40;
    const Trajectory traj = run_trajectory(instance, cfg);
    const LassoLimit limit = lasso_limit(instance, 0.15);
    const double limit_objective = lasso_objective(instance.X, instance.y, limit.b, 0.15);
    for (Eigen::Index t = 30; t < 40; ++t)
        CHECK(limit_objective <=
              lasso_objective(instance.X, instance.y, traj.B.col(t), 0.15) + 1e-12);

    // Non-convergence is flagged, not fatal.
    const LassoLimit truncated = lasso_limit(instance, 0.01, 1e-14, 3);
    CHECK_FALSE(truncated.converged);
    CHECK(truncated.iterations == 3);
}

TEST_CASE("run_parallel covers all jobs and propagates errors") {
    std::vector<int> hits(100, 0);
    run_parallel(hits.size(), 4, [&](std::size_t job) { hits[job] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(
        run_parallel(8, 3,
                     [&](std::size_t job) {
                         if (job == 5) throw InvalidParameter("boom");
                     }),
        InvalidParameter);
}
