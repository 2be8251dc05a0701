#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "itrisk/model_data.hpp"

namespace itrisk {

enum class Algorithm { GD, AGD, ISTA, FISTA, LQA_MCP };

std::string algorithm_name(Algorithm alg);
Algorithm algorithm_from_name(const std::string& name);

struct SolverConfig {
    Algorithm algorithm = Algorithm::GD;
    std::optional<double> eta; // step size; default 1/L
    double lambda = 0.0;       // penalty level (ISTA/FISTA/LQA)
    double tau = 3.0;          // MCP concavity (LQA)
    Eigen::Index T = 1;        // number of iterates
};

// One p x p Jacobian block in compact form.  All five shipped algorithms
// produce scaled identities or diagonals; Dense is kept for extensibility.
struct JacobianBlock {
    enum class Kind { ScaledIdentity, DiagonalMask, Dense };
    Kind kind = Kind::ScaledIdentity;
    double scale = 0.0;      // ScaledIdentity payload
    Eigen::VectorXd diag;    // DiagonalMask payload
    Eigen::MatrixXd dense;   // Dense payload

    static JacobianBlock scaled_identity(double c);
    static JacobianBlock diagonal(Eigen::VectorXd d);

    Eigen::MatrixXd as_dense(Eigen::Index p) const;
    // this * m
    Eigen::MatrixXd left_apply(const Eigen::MatrixXd& m) const;
    Eigen::VectorXd apply_vec(const Eigen::VectorXd& v) const;
    bool is_scaled_identity() const { return kind == Kind::ScaledIdentity; }
};

// Jacobian of the step map b^t = g_t(b^{t-1}, b^{t-2}, v^{t-1}, v^{t-2})
// split into the blocks for each argument; lag-2 blocks are absent for
// one-lag algorithms and at t = 2.
struct StepJacobians {
    JacobianBlock j_prev;  // d g_t / d b^{t-1}
    JacobianBlock d_prev;  // d g_t / d v^{t-1}
    std::optional<JacobianBlock> j_prev2;
    std::optional<JacobianBlock> d_prev2;
};

struct StepRecord {
    Eigen::Index t = 0; // records exist for t = 2..T
    StepJacobians jac;
};

// Full run of an iterative solver from b^1 = 0, with the conventions
// b^0 = v^0 = 0.  Columns are 0-based (column t-1 holds iterate t).
struct Trajectory {
    Eigen::MatrixXd B; // p x T iterates
    Eigen::MatrixXd F; // n x T residuals y - X b^t
    Eigen::MatrixXd V; // p x T gradient vectors X' F / n
    std::vector<StepRecord> steps; // size T-1
    double L = 0.0;    // Lipschitz bound used
    SolverConfig config;

    Eigen::Index T() const { return B.cols(); }
    Eigen::Index p() const { return B.rows(); }
};

// ||X||_op^2 / n by power iteration (relative tolerance 1e-10, 1000
// iteration cap, all-ones start), inflated by (1 + 1e-8) so the result
// stays an upper bound.  Returns 0 for the zero matrix.
double lipschitz_constant(const Eigen::MatrixXd& X);

// sign(u) * max(|u| - theta, 0)
double soft_threshold(double u, double theta);

// Momentum scalars a_0 = 0, a_t = (1 + sqrt(1 + 4 a_{t-1}^2)) / 2 and
// w_t = (1 - a_t) / a_{t+1}.  a[k] holds a_k for k = 0..T; w[t] holds w_t
// for t = 1..T (w[0] is unused and zero).
struct MomentumSequence {
    std::vector<double> a;
    std::vector<double> w;
};
MomentumSequence momentum_sequence(Eigen::Index T);

// Inputs of a single step t (arbitrary points, not necessarily from a
// trajectory; this is what the finite-difference checks exercise).
struct StepInput {
    Eigen::VectorXd b_prev;  // b^{t-1}
    Eigen::VectorXd b_prev2; // b^{t-2}
    Eigen::VectorXd v_prev;  // v^{t-1}
    Eigen::VectorXd v_prev2; // v^{t-2}
    double w_prev = 0.0;     // momentum weight w_{t-1}
};

struct StepResult {
    Eigen::VectorXd b_next;
    StepJacobians jac;
};

StepResult gd_step(const StepInput& in, double eta);
StepResult agd_step(const StepInput& in, double eta);
StepResult ista_step(const StepInput& in, double L, double lambda);
StepResult fista_step(const StepInput& in, double L, double lambda);
StepResult lqa_mcp_step(const StepInput& in, double L, double lambda, double tau);

// Step-size and penalty scalars shared by all steps of one trajectory.
struct ResolvedSolver {
    Algorithm algorithm = Algorithm::GD;
    double eta = 0.0;    // GD/AGD step size
    double L = 0.0;      // prox scaling for ISTA/FISTA/LQA
    double lambda = 0.0;
    double tau = 0.0;
};

StepResult apply_step(const ResolvedSolver& solver, const StepInput& in);

// Runs T iterates of the configured algorithm on the instance.
Trajectory run_trajectory(const LinearModelInstance& instance, const SolverConfig& config);

// Lasso objective (1/(2n)) ||y - X b||^2 + lambda ||b||_1.
double lasso_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& b, double lambda);

// Trajectory export: B.csv, F.csv (columns = iterations), steps.json.
void save_trajectory(const Trajectory& traj, const std::filesystem::path& dir);

} // namespace itrisk
