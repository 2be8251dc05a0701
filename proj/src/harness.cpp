#include "itrisk/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "itrisk/csv.hpp"
#include "itrisk/errors.hpp"
#include "itrisk/rng.hpp"

namespace itrisk {

namespace {

constexpr const char* kVersion = "0.1.0";

void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

} // namespace

void ExperimentConfig::validate() const {
    try {
        sim.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (solvers.empty()) throw ConfigError("config: at least one solver is required");
    if (reps < 1) throw ConfigError("config: reps must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("config: alpha must lie in (0,1)");
    if (memory_method.kind == MemoryMethod::Kind::Hutchinson && memory_method.m < 1)
        throw ConfigError("config: hutchinson m must be >= 1");

    Eigen::Index min_T = std::numeric_limits<Eigen::Index>::max();
    for (const SolverConfig& solver : solvers) {
        if (solver.T < 1) throw ConfigError("config: solver T must be >= 1");
        if (solver.lambda < 0.0) throw ConfigError("config: lambda must be >= 0");
        if (solver.eta && !(*solver.eta > 0.0)) throw ConfigError("config: eta must be > 0");
        if (memory_method.kind == MemoryMethod::Kind::ClosedFormGD &&
            solver.algorithm != Algorithm::GD)
            throw ConfigError("config: gd-closed memory method requires every solver to be GD");
        min_T = std::min(min_T, solver.T);
    }
    for (Eigen::Index j : coordinates)
        if (j < 1 || j > sim.p) throw ConfigError("config: coordinate out of range [1, p]");
    for (Eigen::Index t : inference_times)
        if (t < 1 || t > min_T)
            throw ConfigError("config: inference time outside [1, T] for some solver");
}

std::vector<Eigen::Index> ExperimentConfig::resolved_inference_times(Eigen::Index T) const {
    std::vector<Eigen::Index> times;
    if (!inference_times.empty()) {
        times = inference_times;
    } else {
        for (Eigen::Index candidate : {Eigen::Index{5}, Eigen::Index{10}, Eigen::Index{50},
                                       std::min<Eigen::Index>(100, T)})
            if (candidate >= 1 && candidate <= T) times.push_back(candidate);
        if (times.empty()) times.push_back(T);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    return times;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: JSON parse error: ") + e.what());
    }

    try {
        check_keys(root,
                   {"sim", "solvers", "reps", "memory_method", "alpha", "coordinates",
                    "inference_times", "compute_limit_risk", "output_dir", "threads"},
                   "config");
        ExperimentConfig cfg;

        const auto& sim = root.at("sim");
        check_keys(sim, {"n", "p", "rho", "snr", "sigma2", "sparsity_fraction", "seed",
                         "max_elements"},
                   "sim");
        cfg.sim.n = sim.at("n").get<Eigen::Index>();
        cfg.sim.p = sim.at("p").get<Eigen::Index>();
        cfg.sim.rho = sim.value("rho", 0.5);
        cfg.sim.snr = sim.value("snr", 5.0);
        cfg.sim.sigma2 = sim.value("sigma2", 1.0);
        cfg.sim.sparsity_fraction = sim.value("sparsity_fraction", 0.05);
        cfg.sim.seed = sim.value("seed", std::uint64_t{0});
        if (sim.contains("max_elements"))
            cfg.sim.max_elements = sim.at("max_elements").get<std::uint64_t>();

        cfg.solvers.clear();
        for (const auto& solver_json : root.at("solvers")) {
            check_keys(solver_json, {"algorithm", "eta", "lambda", "tau", "T"}, "solver");
            SolverConfig solver;
            solver.algorithm = algorithm_from_name(solver_json.at("algorithm").get<std::string>());
            if (solver_json.contains("eta") && !solver_json.at("eta").is_null())
                solver.eta = solver_json.at("eta").get<double>();
            solver.lambda = solver_json.value("lambda", 0.0);
            solver.tau = solver_json.value("tau", 3.0);
            solver.T = solver_json.at("T").get<Eigen::Index>();
            cfg.solvers.push_back(solver);
        }

        cfg.reps = root.value("reps", Eigen::Index{1});
        if (root.contains("memory_method")) {
            const auto& method = root.at("memory_method");
            check_keys(method, {"method", "m"}, "memory_method");
            const std::string name = method.at("method").get<std::string>();
            if (name == "exact")
                cfg.memory_method = MemoryMethod::exact();
            else if (name == "gd-closed")
                cfg.memory_method = MemoryMethod::closed_form_gd();
            else if (name == "hutchinson")
                cfg.memory_method =
                    MemoryMethod::hutchinson(method.value("m", Eigen::Index{3}), 0);
            else
                throw ConfigError("config: unknown memory method '" + name + "'");
        }
        cfg.alpha = root.value("alpha", 0.05);
        if (root.contains("coordinates"))
            cfg.coordinates = root.at("coordinates").get<std::vector<Eigen::Index>>();
        if (root.contains("inference_times"))
            cfg.inference_times = root.at("inference_times").get<std::vector<Eigen::Index>>();
        cfg.compute_limit_risk = root.value("compute_limit_risk", false);
        cfg.output_dir = root.value("output_dir", std::string("out"));
        cfg.threads = root.value("threads", 0u);

        cfg.validate();
        return cfg;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_experiment_config(text);
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json root;
    root["sim"] = {{"n", cfg.sim.n},
                   {"p", cfg.sim.p},
                   {"rho", cfg.sim.rho},
                   {"snr", cfg.sim.snr},
                   {"sigma2", cfg.sim.sigma2},
                   {"sparsity_fraction", cfg.sim.sparsity_fraction},
                   {"seed", cfg.sim.seed},
                   {"max_elements", cfg.sim.max_elements}};
    root["solvers"] = nlohmann::json::array();
    for (const SolverConfig& solver : cfg.solvers) {
        nlohmann::json solver_json;
        solver_json["algorithm"] = algorithm_name(solver.algorithm);
        if (solver.eta)
            solver_json["eta"] = *solver.eta;
        else
            solver_json["eta"] = nullptr;
        solver_json["lambda"] = solver.lambda;
        solver_json["tau"] = solver.tau;
        solver_json["T"] = solver.T;
        root["solvers"].push_back(solver_json);
    }
    root["reps"] = cfg.reps;
    switch (cfg.memory_method.kind) {
        case MemoryMethod::Kind::Exact:
            root["memory_method"] = {{"method", "exact"}};
            break;
        case MemoryMethod::Kind::ClosedFormGD:
            root["memory_method"] = {{"method", "gd-closed"}};
            break;
        case MemoryMethod::Kind::Hutchinson:
            root["memory_method"] = {{"method", "hutchinson"}, {"m", cfg.memory_method.m}};
            break;
    }
    root["alpha"] = cfg.alpha;
    root["coordinates"] = cfg.coordinates;
    root["inference_times"] = cfg.inference_times;
    root["compute_limit_risk"] = cfg.compute_limit_risk;
    root["output_dir"] = cfg.output_dir.string();
    root["threads"] = cfg.threads;
    return root.dump(2);
}

void run_parallel(std::size_t jobs, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (jobs == 0) return;
    unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, jobs));
    if (workers <= 1) {
        for (std::size_t job = 0; job < jobs; ++job) fn(job);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (true) {
            const std::size_t job = next.fetch_add(1);
            if (job >= jobs) return;
            try {
                fn(job);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& thread : pool) thread.join();
    if (first_error) std::rethrow_exception(first_error);
}

LassoLimit lasso_limit(const LinearModelInstance& instance, double lambda, double tol,
                       Eigen::Index max_iter) {
    if (lambda < 0.0) throw InvalidParameter("lasso_limit: lambda must be >= 0");
    const Eigen::Index n = instance.n();
    const Eigen::Index p = instance.p();
    const double L = lipschitz_constant(instance.X);
    if (L == 0.0) throw InvalidParameter("lasso_limit: zero design matrix");

    LassoLimit result;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (Eigen::Index iter = 1; iter <= max_iter; ++iter) {
        const Eigen::VectorXd v = instance.X.transpose() * (instance.y - instance.X * b) /
                                  static_cast<double>(n);
        Eigen::VectorXd b_next(p);
        for (Eigen::Index j = 0; j < p; ++j)
            b_next(j) = soft_threshold(b(j) + v(j) / L, lambda / L);
        const double change = (b_next - b).norm();
        b = std::move(b_next);
        result.iterations = iter;
        if (change <= tol * std::max(1.0, b.norm())) {
            result.converged = true;
            break;
        }
    }
    result.b = std::move(b);
    if (instance.truth) result.r_infinity = true_risk(result.b, instance.truth);
    return result;
}

namespace {

struct RepOutputs {
    std::vector<RiskCurveRow> risk_rows;
    std::vector<ZscoreRow> z_rows;
    // (solver index, t, j) -> covered flag and interval width
    struct CoverageSample {
        std::size_t solver = 0;
        Eigen::Index t = 0;
        Eigen::Index j = 0;
        bool covered = false;
        double width = 0.0;
    };
    std::vector<CoverageSample> coverage_samples;
};

RepOutputs run_one_rep(const ExperimentConfig& cfg, Eigen::Index rep) {
    RepOutputs out;
    const LinearModelInstance instance = generate_instance(cfg.sim, static_cast<std::uint64_t>(rep));

    std::optional<MinNormResult> minnorm;
    auto minnorm_risk = [&]() -> std::optional<double> {
        if (!minnorm) minnorm = minnorm_limit(instance.X, instance.y, instance.truth);
        return minnorm->r_infinity;
    };

    for (std::size_t solver_index = 0; solver_index < cfg.solvers.size(); ++solver_index) {
        const SolverConfig& solver = cfg.solvers[solver_index];
        const Trajectory traj = run_trajectory(instance, solver);

        MemoryMatrix memory;
        switch (cfg.memory_method.kind) {
            case MemoryMethod::Kind::Exact:
                memory = memory_exact(traj, instance.X);
                break;
            case MemoryMethod::Kind::ClosedFormGD: {
                const double eta = solver.eta ? *solver.eta : 1.0 / traj.L;
                memory = memory_gd_closed_form(instance.X, eta, solver.T);
                break;
            }
            case MemoryMethod::Kind::Hutchinson:
                memory = memory_hutchinson(
                    traj, instance.X, cfg.memory_method.m,
                    derive_seed(cfg.sim.seed, static_cast<std::uint64_t>(rep), Purpose::Sketch));
                break;
        }
        const WeightMatrix weight_matrix = weights(memory, instance.n());

        RiskReportOptions options;
        if (cfg.compute_limit_risk) {
            if (solver.algorithm == Algorithm::GD || solver.algorithm == Algorithm::AGD)
                options.r_infinity = minnorm_risk();
            else if (solver.algorithm == Algorithm::ISTA || solver.algorithm == Algorithm::FISTA)
                options.r_infinity = lasso_limit(instance, solver.lambda).r_infinity;
        }
        const RiskReport report = compute_risk_report(traj, weight_matrix, instance, options);

        const std::string name = algorithm_name(solver.algorithm);
        for (Eigen::Index t = 1; t <= solver.T; ++t) {
            RiskCurveRow row;
            row.rep = rep;
            row.algorithm = name;
            row.t = t;
            row.r_hat = report.r_hat(t - 1);
            if (report.r_true) row.r_true = (*report.r_true)(t - 1);
            row.r_infinity = report.r_infinity;
            out.risk_rows.push_back(std::move(row));
        }

        const std::vector<Eigen::Index> times = cfg.resolved_inference_times(solver.T);
        const InferenceReport inference =
            compute_inference_report(traj, weight_matrix, instance, times, cfg.coordinates,
                                     cfg.alpha);
        for (const InferenceEntry& entry : inference.entries) {
            if (entry.z) out.z_rows.push_back({rep, name, entry.t, entry.j, *entry.z});
            if (entry.covered.has_value())
                out.coverage_samples.push_back({solver_index, entry.t, entry.j,
                                                *entry.covered, entry.ci_hi - entry.ci_lo});
        }
    }
    return out;
}

} // namespace

RunOutputs run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();

    std::vector<RepOutputs> reps(static_cast<std::size_t>(cfg.reps));
    run_parallel(reps.size(), cfg.threads,
                 [&](std::size_t rep) { reps[rep] = run_one_rep(cfg, static_cast<Eigen::Index>(rep)); });

    RunOutputs outputs;
    for (const RepOutputs& rep : reps) {
        outputs.risk_curve.insert(outputs.risk_curve.end(), rep.risk_rows.begin(),
                                  rep.risk_rows.end());
        outputs.zscores.insert(outputs.zscores.end(), rep.z_rows.begin(), rep.z_rows.end());
    }
    std::stable_sort(outputs.risk_curve.begin(), outputs.risk_curve.end(),
                     [](const RiskCurveRow& a, const RiskCurveRow& b) {
                         return std::tie(a.rep, a.algorithm, a.t) < std::tie(b.rep, b.algorithm, b.t);
                     });
    std::stable_sort(outputs.zscores.begin(), outputs.zscores.end(),
                     [](const ZscoreRow& a, const ZscoreRow& b) {
                         return std::tie(a.rep, a.algorithm, a.t, a.j) <
                                std::tie(b.rep, b.algorithm, b.t, b.j);
                     });

    // Aggregate coverage per (algorithm, t, j) over replications.
    struct Accumulator {
        Eigen::Index covered = 0;
        Eigen::Index count = 0;
        double width_sum = 0.0;
    };
    std::map<std::tuple<std::string, Eigen::Index, Eigen::Index>, Accumulator> accumulators;
    for (const RepOutputs& rep : reps)
        for (const auto& sample : rep.coverage_samples) {
            const std::string name = algorithm_name(cfg.solvers[sample.solver].algorithm);
            Accumulator& acc = accumulators[{name, sample.t, sample.j}];
            acc.covered += sample.covered ? 1 : 0;
            acc.count += 1;
            acc.width_sum += sample.width;
        }
    for (const auto& [key, acc] : accumulators) {
        CoverageRow row;
        row.algorithm = std::get<0>(key);
        row.t = std::get<1>(key);
        row.j = std::get<2>(key);
        row.coverage = static_cast<double>(acc.covered) / static_cast<double>(acc.count);
        row.mean_width = acc.width_sum / static_cast<double>(acc.count);
        outputs.coverage.push_back(std::move(row));
    }

    const auto elapsed = std::chrono::steady_clock::now() - start;
    nlohmann::json manifest;
    manifest["config"] = nlohmann::json::parse(experiment_config_to_json(cfg));
    manifest["seed"] = cfg.sim.seed;
    manifest["versions"] = {{"itrisk", kVersion},
                            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                          std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                          std::to_string(EIGEN_MINOR_VERSION)}};
    manifest["wall_time_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    nlohmann::json warnings = nlohmann::json::array();
    if (cfg.compute_limit_risk && cfg.sim.n == cfg.sim.p)
        for (const SolverConfig& solver : cfg.solvers)
            if (solver.algorithm == Algorithm::GD || solver.algorithm == Algorithm::AGD) {
                warnings.push_back("n = p: the min-norm limiting risk can be enormous; "
                                   "r_infinity is emitted as-is");
                break;
            }
    manifest["warnings"] = warnings;
    outputs.manifest_json = manifest.dump(2);
    return outputs;
}

void emit_csv(const RunOutputs& outputs, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto opt_cell = [](const std::optional<double>& value) {
        return value ? format_double(*value) : std::string();
    };

    {
        CsvWriter writer(dir / "risk_curve.csv",
                         {"rep", "algorithm", "t", "r_hat", "r_true", "r_infinity"});
        for (const RiskCurveRow& row : outputs.risk_curve)
            writer.write_row({std::to_string(row.rep), row.algorithm, std::to_string(row.t),
                              format_double(row.r_hat), opt_cell(row.r_true),
                              opt_cell(row.r_infinity)});
    }
    {
        CsvWriter writer(dir / "zscores.csv", {"rep", "algorithm", "t", "j", "z"});
        for (const ZscoreRow& row : outputs.zscores)
            writer.write_row({std::to_string(row.rep), row.algorithm, std::to_string(row.t),
                              std::to_string(row.j), format_double(row.z)});
    }
    {
        CsvWriter writer(dir / "coverage.csv", {"algorithm", "t", "j", "coverage", "mean_width"});
        for (const CoverageRow& row : outputs.coverage)
            writer.write_row({row.algorithm, std::to_string(row.t), std::to_string(row.j),
                              format_double(row.coverage), format_double(row.mean_width)});
    }
    std::ofstream manifest(dir / "manifest.json");
    if (!manifest) throw IoError("cannot open for writing: " + (dir / "manifest.json").string());
    manifest << outputs.manifest_json << '\n';
}

} // namespace itrisk
