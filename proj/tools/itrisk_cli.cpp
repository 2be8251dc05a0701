// Command-line front end: simulate / run / risk / debias subcommands over
// the experiment config JSON (schema in README.md).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "itrisk/csv.hpp"
#include "itrisk/errors.hpp"
#include "itrisk/harness.hpp"
#include "itrisk/memory_matrix.hpp"
#include "itrisk/model_data.hpp"
#include "itrisk/risk_inference.hpp"
#include "itrisk/rng.hpp"
#include "itrisk/solvers.hpp"

namespace {

using namespace itrisk;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> out_dir;
    std::optional<std::string> method;
    std::optional<Eigen::Index> m;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_method = true) {
    cmd->add_option("--config", args.config_path, "experiment config JSON")->required();
    auto add_opt = [&](const char* flag, auto& slot, const char* help) {
        cmd->add_option_function<std::decay_t<decltype(*slot)>>(
            flag, [&slot](const auto& v) { slot = v; }, help);
    };
    add_opt("--seed", args.seed, "override sim.seed");
    add_opt("--threads", args.threads, "worker threads (0 = auto)");
    add_opt("--out", args.out_dir, "output directory");
    if (with_method) {
        cmd->add_option_function<std::string>(
               "--method", [&args](const std::string& v) { args.method = v; },
               "memory method: exact|gd-closed|hutchinson")
            ->check(CLI::IsMember({"exact", "gd-closed", "hutchinson"}));
        add_opt("--m", args.m, "Hutchinson sketch columns");
    }
}

ExperimentConfig resolve_config(const CommonArgs& args) {
    ExperimentConfig cfg = load_experiment_config(args.config_path);
    if (args.seed) cfg.sim.seed = *args.seed;
    if (args.threads) cfg.threads = *args.threads;
    if (args.out_dir) cfg.output_dir = *args.out_dir;
    if (args.method) {
        if (*args.method == "exact")
            cfg.memory_method = MemoryMethod::exact();
        else if (*args.method == "gd-closed")
            cfg.memory_method = MemoryMethod::closed_form_gd();
        else
            cfg.memory_method = MemoryMethod::hutchinson(args.m.value_or(cfg.memory_method.m), 0);
    } else if (args.m) {
        cfg.memory_method.m = *args.m;
    }
    cfg.validate();
    return cfg;
}

MemoryMatrix build_memory(const ExperimentConfig& cfg, const SolverConfig& solver,
                          const Trajectory& traj, const Eigen::MatrixXd& X) {
    switch (cfg.memory_method.kind) {
        case MemoryMethod::Kind::Exact:
            return memory_exact(traj, X);
        case MemoryMethod::Kind::ClosedFormGD:
            return memory_gd_closed_form(X, solver.eta ? *solver.eta : 1.0 / traj.L, solver.T);
        case MemoryMethod::Kind::Hutchinson:
            return memory_hutchinson(traj, X, cfg.memory_method.m,
                                     derive_seed(cfg.sim.seed, 0, Purpose::Sketch));
    }
    throw ConfigError("unknown memory method");
}

int cmd_simulate(const CommonArgs& args) {
    ExperimentConfig cfg = resolve_config(args);
    const LinearModelInstance instance = generate_instance(cfg.sim);
    save_instance(instance, cfg.output_dir, cfg.sim.rho);
    std::cout << "instance written to " << cfg.output_dir.string() << "\n";
    return 0;
}

int cmd_run(const CommonArgs& args) {
    ExperimentConfig cfg = resolve_config(args);
    const RunOutputs outputs = run_experiment(cfg);
    emit_csv(outputs, cfg.output_dir);
    std::cout << "experiment outputs written to " << cfg.output_dir.string() << "\n";
    return 0;
}

int cmd_risk(const CommonArgs& args, const std::string& instance_dir) {
    ExperimentConfig cfg = resolve_config(args);
    const LinearModelInstance instance = load_instance(instance_dir);
    std::filesystem::create_directories(cfg.output_dir);

    for (const SolverConfig& solver : cfg.solvers) {
        const std::filesystem::path dir = cfg.output_dir / algorithm_name(solver.algorithm);
        std::filesystem::create_directories(dir);
        const Trajectory traj = run_trajectory(instance, solver);
        save_trajectory(traj, dir);
        const MemoryMatrix memory = build_memory(cfg, solver, traj, instance.X);
        save_memory(memory, dir / "A_hat.csv", dir / "memory.json");
        const WeightMatrix weight_matrix = weights(memory, instance.n());
        write_matrix_csv(dir / "W_hat.csv", weight_matrix.W_hat);

        const RiskReport report = compute_risk_report(traj, weight_matrix, instance);
        CsvWriter writer(dir / "risk_curve.csv", {"t", "r_hat", "r_true"});
        for (Eigen::Index t = 1; t <= solver.T; ++t)
            writer.write_row({std::to_string(t), format_double(report.r_hat(t - 1)),
                              report.r_true ? format_double((*report.r_true)(t - 1))
                                            : std::string()});
        std::cout << algorithm_name(solver.algorithm) << ": early stopping at t = "
                  << report.t_star << "\n";
    }
    std::cout << "risk outputs written to " << cfg.output_dir.string() << "\n";
    return 0;
}

int cmd_debias(const CommonArgs& args, const std::string& instance_dir) {
    ExperimentConfig cfg = resolve_config(args);
    const LinearModelInstance instance = load_instance(instance_dir);
    for (Eigen::Index j : cfg.coordinates)
        if (j < 1 || j > instance.p())
            throw ConfigError("coordinate " + std::to_string(j) +
                              " outside [1, p] for the loaded instance");
    std::filesystem::create_directories(cfg.output_dir);

    CsvWriter writer(cfg.output_dir / "inference.csv",
                     {"algorithm", "t", "j", "b_debias", "z", "ci_lo", "ci_hi", "covered"});
    for (const SolverConfig& solver : cfg.solvers) {
        const Trajectory traj = run_trajectory(instance, solver);
        const MemoryMatrix memory = build_memory(cfg, solver, traj, instance.X);
        const WeightMatrix weight_matrix = weights(memory, instance.n());
        const InferenceReport report = compute_inference_report(
            traj, weight_matrix, instance, cfg.resolved_inference_times(solver.T),
            cfg.coordinates, cfg.alpha);
        for (const InferenceEntry& entry : report.entries)
            writer.write_row({algorithm_name(solver.algorithm), std::to_string(entry.t),
                              std::to_string(entry.j), format_double(entry.b_debias),
                              entry.z ? format_double(*entry.z) : std::string(),
                              format_double(entry.ci_lo), format_double(entry.ci_hi),
                              entry.covered ? (*entry.covered ? "1" : "0") : std::string()});
    }
    std::cout << "inference table written to " << cfg.output_dir.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk estimation and debiased inference for first-order solver iterates"};
    app.require_subcommand(1);

    CommonArgs simulate_args, run_args, risk_args, debias_args;
    std::string risk_instance, debias_instance;

    CLI::App* simulate = app.add_subcommand("simulate", "generate and save a synthetic instance");
    add_common(simulate, simulate_args, false);

    CLI::App* run = app.add_subcommand("run", "full experiment from config");
    add_common(run, run_args);

    CLI::App* risk = app.add_subcommand("risk", "risk curve for a saved instance");
    add_common(risk, risk_args);
    risk->add_option("--instance", risk_instance, "directory with X.csv / y.csv [truth.json]")
        ->required();

    CLI::App* debias = app.add_subcommand("debias", "debiased inference table for a saved instance");
    add_common(debias, debias_args);
    debias->add_option("--instance", debias_instance, "directory with X.csv / y.csv [truth.json]")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(simulate_args);
        if (run->parsed()) return cmd_run(run_args);
        if (risk->parsed()) return cmd_risk(risk_args, risk_instance);
        if (debias->parsed()) return cmd_debias(debias_args, debias_instance);
    } catch (const itrisk::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
