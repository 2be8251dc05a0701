#include "itrisk/solvers.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "itrisk/csv.hpp"
#include "itrisk/errors.hpp"

namespace itrisk {

std::string algorithm_name(Algorithm alg) {
    switch (alg) {
        case Algorithm::GD: return "GD";
        case Algorithm::AGD: return "AGD";
        case Algorithm::ISTA: return "ISTA";
        case Algorithm::FISTA: return "FISTA";
        case Algorithm::LQA_MCP: return "LQA_MCP";
    }
    throw InvalidParameter("unknown algorithm");
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "GD") return Algorithm::GD;
    if (name == "AGD") return Algorithm::AGD;
    if (name == "ISTA") return Algorithm::ISTA;
    if (name == "FISTA") return Algorithm::FISTA;
    if (name == "LQA_MCP") return Algorithm::LQA_MCP;
    throw InvalidParameter("unknown algorithm name '" + name + "'");
}

JacobianBlock JacobianBlock::scaled_identity(double c) {
    JacobianBlock block;
    block.kind = Kind::ScaledIdentity;
    block.scale = c;
    return block;
}

JacobianBlock JacobianBlock::diagonal(Eigen::VectorXd d) {
    JacobianBlock block;
    block.kind = Kind::DiagonalMask;
    block.diag = std::move(d);
    return block;
}

Eigen::MatrixXd JacobianBlock::as_dense(Eigen::Index p) const {
    switch (kind) {
        case Kind::ScaledIdentity:
            return scale * Eigen::MatrixXd::Identity(p, p);
        case Kind::DiagonalMask:
            return Eigen::MatrixXd(diag.asDiagonal());
        case Kind::Dense:
            return dense;
    }
    throw InvalidParameter("unknown block kind");
}

Eigen::MatrixXd JacobianBlock::left_apply(const Eigen::MatrixXd& m) const {
    switch (kind) {
        case Kind::ScaledIdentity:
            return scale * m;
        case Kind::DiagonalMask:
            return diag.asDiagonal() * m;
        case Kind::Dense:
            return dense * m;
    }
    throw InvalidParameter("unknown block kind");
}

Eigen::VectorXd JacobianBlock::apply_vec(const Eigen::VectorXd& v) const {
    switch (kind) {
        case Kind::ScaledIdentity:
            return scale * v;
        case Kind::DiagonalMask:
            return diag.cwiseProduct(v);
        case Kind::Dense:
            return dense * v;
    }
    throw InvalidParameter("unknown block kind");
}

double lipschitz_constant(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    if (n == 0 || p == 0) return 0.0;
    if (X.squaredNorm() == 0.0) return 0.0;

    Eigen::VectorXd u = Eigen::VectorXd::Ones(p) / std::sqrt(static_cast<double>(p));
    double lam = 0.0;
    for (int iter = 0; iter < 1000; ++iter) {
        Eigen::VectorXd w = X.transpose() * (X * u) / static_cast<double>(n);
        const double lam_next = u.dot(w);
        const double norm = w.norm();
        if (norm == 0.0) {
            // All-ones start landed in the null space; restart from e_1.
            u.setZero();
            u(0) = 1.0;
            lam = 0.0;
            continue;
        }
        u = w / norm;
        if (std::abs(lam_next - lam) <= 1e-10 * std::max(std::abs(lam_next), 1e-300)) {
            lam = lam_next;
            break;
        }
        lam = lam_next;
    }
    return lam * (1.0 + 1e-8);
}

double soft_threshold(double u, double theta) {
    if (theta < 0.0) throw InvalidParameter("soft_threshold: theta must be >= 0");
    const double magnitude = std::abs(u) - theta;
    return magnitude > 0.0 ? std::copysign(magnitude, u) : 0.0;
}

MomentumSequence momentum_sequence(Eigen::Index T) {
    if (T < 1) throw InvalidParameter("momentum_sequence: T must be >= 1");
    MomentumSequence seq;
    const auto size = static_cast<std::size_t>(T);
    // One extra a value (a_{T+1}) is needed to form w_T.
    std::vector<double> a_ext(size + 2);
    a_ext[0] = 0.0;
    for (std::size_t t = 1; t < a_ext.size(); ++t)
        a_ext[t] = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * a_ext[t - 1] * a_ext[t - 1]));
    seq.a.assign(a_ext.begin(), a_ext.begin() + static_cast<std::ptrdiff_t>(size + 1));
    seq.w.assign(size + 1, 0.0);
    for (std::size_t t = 1; t <= size; ++t) seq.w[t] = (1.0 - a_ext[t]) / a_ext[t + 1];
    return seq;
}

StepResult gd_step(const StepInput& in, double eta) {
    StepResult out;
    out.b_next = in.b_prev + eta * in.v_prev;
    out.jac.j_prev = JacobianBlock::scaled_identity(1.0);
    out.jac.d_prev = JacobianBlock::scaled_identity(eta);
    return out;
}

StepResult agd_step(const StepInput& in, double eta) {
    const double w = in.w_prev;
    StepResult out;
    out.b_next = (1.0 - w) * (in.b_prev + eta * in.v_prev) + w * (in.b_prev2 + eta * in.v_prev2);
    out.jac.j_prev = JacobianBlock::scaled_identity(1.0 - w);
    out.jac.d_prev = JacobianBlock::scaled_identity(eta * (1.0 - w));
    out.jac.j_prev2 = JacobianBlock::scaled_identity(w);
    out.jac.d_prev2 = JacobianBlock::scaled_identity(eta * w);
    return out;
}

namespace {

// Soft-threshold of b + v/L and the support mask {|b + v/L| > lambda/L}.
void soft_and_mask(const Eigen::VectorXd& b, const Eigen::VectorXd& v, double L, double lambda,
                   Eigen::VectorXd& soft, Eigen::VectorXd& mask) {
    const double theta = lambda / L;
    const Eigen::Index p = b.size();
    soft.resize(p);
    mask.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double u = b(j) + v(j) / L;
        soft(j) = soft_threshold(u, theta);
        mask(j) = std::abs(u) > theta ? 1.0 : 0.0;
    }
}

} // namespace

StepResult ista_step(const StepInput& in, double L, double lambda) {
    if (!(L > 0.0)) throw InvalidParameter("ista_step: L must be > 0");
    Eigen::VectorXd soft, mask;
    soft_and_mask(in.b_prev, in.v_prev, L, lambda, soft, mask);
    StepResult out;
    out.b_next = std::move(soft);
    out.jac.j_prev = JacobianBlock::diagonal(mask);
    out.jac.d_prev = JacobianBlock::diagonal(mask / L);
    return out;
}

StepResult fista_step(const StepInput& in, double L, double lambda) {
    if (!(L > 0.0)) throw InvalidParameter("fista_step: L must be > 0");
    const double w = in.w_prev;
    Eigen::VectorXd soft1, mask1, soft2, mask2;
    soft_and_mask(in.b_prev, in.v_prev, L, lambda, soft1, mask1);
    soft_and_mask(in.b_prev2, in.v_prev2, L, lambda, soft2, mask2);
    StepResult out;
    out.b_next = (1.0 - w) * soft1 + w * soft2;
    out.jac.j_prev = JacobianBlock::diagonal((1.0 - w) * mask1);
    out.jac.d_prev = JacobianBlock::diagonal((1.0 - w) / L * mask1);
    out.jac.j_prev2 = JacobianBlock::diagonal(w * mask2);
    out.jac.d_prev2 = JacobianBlock::diagonal(w / L * mask2);
    return out;
}

StepResult lqa_mcp_step(const StepInput& in, double L, double lambda, double tau) {
    if (!(L > 0.0)) throw InvalidParameter("lqa_mcp_step: L must be > 0");
    if (tau * L < 1.0)
        throw InvalidParameter("lqa_mcp_step: closed form requires tau*L >= 1");
    const double theta = lambda / L;
    const double expand = 1.0 / (1.0 - 1.0 / (tau * L));
    const Eigen::Index p = in.b_prev.size();

    StepResult out;
    out.b_next.resize(p);
    Eigen::VectorXd jac(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double u = in.b_prev(j) + in.v_prev(j) / L;
        const double absu = std::abs(u);
        if (absu > tau * lambda) {
            out.b_next(j) = u;
            jac(j) = 1.0;
        } else if (absu < theta) {
            out.b_next(j) = 0.0;
            jac(j) = 0.0;
        } else {
            out.b_next(j) = soft_threshold(u, theta) * expand;
            jac(j) = expand;
        }
    }
    out.jac.j_prev = JacobianBlock::diagonal(jac);
    out.jac.d_prev = JacobianBlock::diagonal(jac / L);
    return out;
}

StepResult apply_step(const ResolvedSolver& solver, const StepInput& in) {
    switch (solver.algorithm) {
        case Algorithm::GD: return gd_step(in, solver.eta);
        case Algorithm::AGD: return agd_step(in, solver.eta);
        case Algorithm::ISTA: return ista_step(in, solver.L, solver.lambda);
        case Algorithm::FISTA: return fista_step(in, solver.L, solver.lambda);
        case Algorithm::LQA_MCP: return lqa_mcp_step(in, solver.L, solver.lambda, solver.tau);
    }
    throw InvalidParameter("unknown algorithm");
}

namespace {

bool uses_momentum(Algorithm alg) { return alg == Algorithm::AGD || alg == Algorithm::FISTA; }
bool uses_penalty(Algorithm alg) { return alg != Algorithm::GD && alg != Algorithm::AGD; }

} // namespace

Trajectory run_trajectory(const LinearModelInstance& instance, const SolverConfig& config) {
    const Eigen::Index n = instance.n();
    const Eigen::Index p = instance.p();
    const Eigen::Index T = config.T;
    if (T < 1) throw InvalidParameter("run_trajectory: T must be >= 1");
    if (instance.y.size() != n) throw DimensionMismatch("run_trajectory: len(y) != rows(X)");
    if (config.lambda < 0.0) throw InvalidParameter("run_trajectory: lambda must be >= 0");

    const double L_bound = lipschitz_constant(instance.X);
    if (config.eta) {
        const double eta = *config.eta;
        if (!(eta > 0.0)) throw InvalidParameter("run_trajectory: eta must be > 0");
        if (L_bound > 0.0 && !(eta < 2.0 / L_bound))
            throw InvalidParameter("run_trajectory: eta must lie in (0, 2/L)");
    } else if (L_bound == 0.0) {
        throw InvalidParameter("run_trajectory: zero design matrix, cannot default eta = 1/L");
    }

    ResolvedSolver solver;
    solver.algorithm = config.algorithm;
    solver.eta = config.eta ? *config.eta : 1.0 / L_bound;
    solver.L = config.eta ? 1.0 / *config.eta : L_bound;
    solver.lambda = config.lambda;
    solver.tau = config.tau;
    if (config.algorithm == Algorithm::LQA_MCP) {
        if (!(config.tau > 0.0)) throw InvalidParameter("run_trajectory: tau must be > 0");
        if (config.tau * solver.L < 1.0)
            throw InvalidParameter("run_trajectory: LQA_MCP requires tau*L >= 1");
    }

    MomentumSequence momentum;
    if (uses_momentum(config.algorithm)) momentum = momentum_sequence(T);

    Trajectory traj;
    traj.config = config;
    traj.L = uses_penalty(config.algorithm) ? solver.L : L_bound;
    traj.B = Eigen::MatrixXd::Zero(p, T);
    traj.F = Eigen::MatrixXd::Zero(n, T);
    traj.V = Eigen::MatrixXd::Zero(p, T);
    traj.steps.reserve(static_cast<std::size_t>(T - 1));

    // b^1 = 0.
    traj.F.col(0) = instance.y;
    traj.V.col(0) = instance.X.transpose() * traj.F.col(0) / static_cast<double>(n);

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(p);
    for (Eigen::Index t = 2; t <= T; ++t) {
        StepInput in{traj.B.col(t - 2), t >= 3 ? traj.B.col(t - 3) : zero,
                     traj.V.col(t - 2), t >= 3 ? traj.V.col(t - 3) : zero,
                     uses_momentum(config.algorithm) ? momentum.w[static_cast<std::size_t>(t - 1)]
                                                     : 0.0};
        StepResult step = apply_step(solver, in);
        traj.B.col(t - 1) = step.b_next;
        traj.F.col(t - 1) = instance.y - instance.X * traj.B.col(t - 1);
        traj.V.col(t - 1) = instance.X.transpose() * traj.F.col(t - 1) / static_cast<double>(n);

        StepRecord record;
        record.t = t;
        record.jac = std::move(step.jac);
        if (t == 2) {
            // b^0 = v^0 = 0 sit outside the block index range [1, T].
            record.jac.j_prev2.reset();
            record.jac.d_prev2.reset();
        }
        traj.steps.push_back(std::move(record));
    }
    return traj;
}

double lasso_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& b, double lambda) {
    const double n = static_cast<double>(X.rows());
    return (y - X * b).squaredNorm() / (2.0 * n) + lambda * b.lpNorm<1>();
}

namespace {

nlohmann::json block_to_json(const JacobianBlock& block) {
    nlohmann::json j;
    switch (block.kind) {
        case JacobianBlock::Kind::ScaledIdentity:
            j["kind"] = "scaled_identity";
            j["scale"] = block.scale;
            break;
        case JacobianBlock::Kind::DiagonalMask:
            j["kind"] = "diagonal";
            j["diag"] = std::vector<double>(block.diag.data(), block.diag.data() + block.diag.size());
            break;
        case JacobianBlock::Kind::Dense: {
            j["kind"] = "dense";
            std::vector<std::vector<double>> rows;
            for (Eigen::Index r = 0; r < block.dense.rows(); ++r) {
                std::vector<double> row(static_cast<std::size_t>(block.dense.cols()));
                for (Eigen::Index c = 0; c < block.dense.cols(); ++c)
                    row[static_cast<std::size_t>(c)] = block.dense(r, c);
                rows.push_back(std::move(row));
            }
            j["rows"] = rows;
            break;
        }
    }
    return j;
}

} // namespace

void save_trajectory(const Trajectory& traj, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_matrix_csv(dir / "B.csv", traj.B);
    write_matrix_csv(dir / "F.csv", traj.F);

    nlohmann::json steps = nlohmann::json::array();
    for (const StepRecord& record : traj.steps) {
        nlohmann::json entry;
        entry["t"] = record.t;
        entry["J_prev"] = block_to_json(record.jac.j_prev);
        entry["D_prev"] = block_to_json(record.jac.d_prev);
        if (record.jac.j_prev2) entry["J_prev2"] = block_to_json(*record.jac.j_prev2);
        if (record.jac.d_prev2) entry["D_prev2"] = block_to_json(*record.jac.d_prev2);
        steps.push_back(std::move(entry));
    }
    std::ofstream out(dir / "steps.json");
    if (!out) throw IoError("cannot open for writing: " + (dir / "steps.json").string());
    out << steps.dump(2) << '\n';
}

} // namespace itrisk
