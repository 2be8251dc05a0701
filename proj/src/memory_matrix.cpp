#include "itrisk/memory_matrix.hpp"

#include <Eigen/Eigenvalues>
#include <fstream>

#include <json.hpp>

#include "itrisk/csv.hpp"
#include "itrisk/errors.hpp"
#include "itrisk/rng.hpp"

namespace itrisk {

namespace {

void require_complete(const Trajectory& traj) {
    const Eigen::Index T = traj.T();
    if (static_cast<Eigen::Index>(traj.steps.size()) != T - 1)
        throw IncompleteTrajectory("memory matrix: trajectory is missing step records");
    for (Eigen::Index i = 0; i < T - 1; ++i)
        if (traj.steps[static_cast<std::size_t>(i)].t != i + 2)
            throw IncompleteTrajectory("memory matrix: step records out of order");
}

bool all_scaled_identity(const Trajectory& traj) {
    for (const StepRecord& record : traj.steps) {
        if (!record.jac.j_prev.is_scaled_identity() || !record.jac.d_prev.is_scaled_identity())
            return false;
        if (record.jac.j_prev2 && !record.jac.j_prev2->is_scaled_identity()) return false;
        if (record.jac.d_prev2 && !record.jac.d_prev2->is_scaled_identity()) return false;
    }
    return true;
}

// Per-eigenvalue scalar version of the R_t recursion, valid when every
// Jacobian block is a scaled identity (GD, AGD).  In the eigenbasis of
// X'X/n with eigenvalue mu, P_{t,s} acts as (j_scale - d_scale * mu) and the
// trace becomes a sum over eigenvalues, so rows of A_hat come out of an
// O(p T^2) recursion instead of p x p matrix products.
Eigen::MatrixXd exact_spectral(const Trajectory& traj, const Eigen::MatrixXd& X) {
    const Eigen::Index T = traj.T();
    const Eigen::Index p = X.cols();
    const Eigen::Index n = X.rows();

    const Eigen::MatrixXd gram = X.transpose() * X / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd mu = eig.eigenvalues();

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(T, T);
    // rho columns are indexed by s-1 for s = 1..T.
    Eigen::MatrixXd rho_prev = Eigen::MatrixXd::Zero(p, T);
    Eigen::MatrixXd rho_prev2 = Eigen::MatrixXd::Zero(p, T);
    Eigen::MatrixXd rho_t(p, T);
    Eigen::VectorXd pi1(p), pi2(p);

    for (Eigen::Index t = 2; t <= T; ++t) {
        const StepJacobians& jac = traj.steps[static_cast<std::size_t>(t - 2)].jac;
        const double j1 = jac.j_prev.scale;
        const double d1 = jac.d_prev.scale;
        const double j2 = jac.j_prev2 ? jac.j_prev2->scale : 0.0;
        const double d2 = jac.d_prev2 ? jac.d_prev2->scale : 0.0;

        pi1 = Eigen::VectorXd::Constant(p, j1) - d1 * mu;
        pi2 = Eigen::VectorXd::Constant(p, j2) - d2 * mu;

        rho_t.leftCols(t - 1).setZero();
        rho_t.col(t - 2).setConstant(d1);
        if (t >= 3) {
            if (d2 != 0.0) rho_t.col(t - 3).array() += d2;
            rho_t.leftCols(t - 2) += pi1.asDiagonal() * rho_prev.leftCols(t - 2);
        }
        if (t >= 4 && (j2 != 0.0 || d2 != 0.0))
            rho_t.leftCols(t - 3) += pi2.asDiagonal() * rho_prev2.leftCols(t - 3);

        for (Eigen::Index s = 1; s < t; ++s)
            A(t - 1, s - 1) = mu.dot(rho_t.col(s - 1));

        std::swap(rho_prev2, rho_prev);
        std::swap(rho_prev, rho_t);
    }
    return A;
}

// Visits the block rows R_t of the forward-substitution solution for
// t = 2..T, keeping only the last two rows in memory.  The visitor receives
// the p x p column blocks (R_t)_s for s = 1..t-1 through a dense matrix of
// shape p x p(t-1).
template <typename Visitor>
void visit_exact_rows(const Trajectory& traj, const Eigen::MatrixXd& X, Visitor&& visit) {
    const Eigen::Index T = traj.T();
    const Eigen::Index p = X.cols();
    const Eigen::Index n = X.rows();
    const Eigen::MatrixXd gram = X.transpose() * X / static_cast<double>(n);

    Eigen::MatrixXd r_prev;  // p x p(t-2)
    Eigen::MatrixXd r_prev2; // p x p(t-3)

    for (Eigen::Index t = 2; t <= T; ++t) {
        const StepJacobians& jac = traj.steps[static_cast<std::size_t>(t - 2)].jac;
        Eigen::MatrixXd r_t = Eigen::MatrixXd::Zero(p, p * (t - 1));

        r_t.middleCols(p * (t - 2), p) = jac.d_prev.as_dense(p);
        if (t >= 3 && jac.d_prev2)
            r_t.middleCols(p * (t - 3), p) += jac.d_prev2->as_dense(p);

        if (r_prev.cols() > 0) {
            const Eigen::MatrixXd gram_r = gram * r_prev;
            r_t.leftCols(r_prev.cols()) +=
                jac.j_prev.left_apply(r_prev) - jac.d_prev.left_apply(gram_r);
        }
        if (r_prev2.cols() > 0 && jac.j_prev2) {
            const Eigen::MatrixXd gram_r2 = gram * r_prev2;
            r_t.leftCols(r_prev2.cols()) +=
                jac.j_prev2->left_apply(r_prev2) - jac.d_prev2->left_apply(gram_r2);
        }

        visit(t, r_t);

        r_prev2 = std::move(r_prev);
        r_prev = std::move(r_t);
    }
}

} // namespace

MemoryMatrix memory_exact(const Trajectory& traj, const Eigen::MatrixXd& X,
                          const ExactOptions& options) {
    const Eigen::Index T = traj.T();
    if (X.cols() != traj.p()) throw DimensionMismatch("memory_exact: X columns != trajectory p");
    require_complete(traj);

    MemoryMatrix memory;
    memory.method = MemoryMethod::exact();
    if (T == 1) {
        memory.A_hat = Eigen::MatrixXd::Zero(1, 1);
        return memory;
    }

    if (!options.force_generic && all_scaled_identity(traj)) {
        memory.A_hat = exact_spectral(traj, X);
        return memory;
    }

    const Eigen::Index p = X.cols();
    const Eigen::Index n = X.rows();
    const Eigen::MatrixXd gram = X.transpose() * X / static_cast<double>(n);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(T, T);
    // tr[X (R_t)_s X'] / n = <(R_t)_s, X'X/n> for symmetric X'X.
    visit_exact_rows(traj, X, [&](Eigen::Index t, const Eigen::MatrixXd& r_t) {
        for (Eigen::Index s = 1; s < t; ++s)
            A(t - 1, s - 1) = r_t.middleCols(p * (s - 1), p).cwiseProduct(gram).sum();
    });
    memory.A_hat = std::move(A);
    return memory;
}

MemoryMatrix memory_gd_closed_form(const Eigen::MatrixXd& X, double eta, Eigen::Index T) {
    if (T < 1) throw InvalidParameter("memory_gd_closed_form: T must be >= 1");
    const Eigen::Index n = X.rows();
    const Eigen::MatrixXd gram = X.transpose() * X / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd lambda = eig.eigenvalues();

    // A_hat(t,t') = sum_i eta lambda_i (1 - eta lambda_i)^{t-t'-1} depends on
    // t - t' only; one subdiagonal value per power.
    Eigen::VectorXd power = Eigen::VectorXd::Ones(lambda.size());
    Eigen::VectorXd subdiagonal(T >= 2 ? T - 1 : 0);
    for (Eigen::Index k = 0; k + 1 < T; ++k) {
        subdiagonal(k) = eta * lambda.dot(power);
        power.array() *= (1.0 - eta * lambda.array());
    }

    MemoryMatrix memory;
    memory.method = MemoryMethod::closed_form_gd();
    memory.A_hat = Eigen::MatrixXd::Zero(T, T);
    for (Eigen::Index t = 1; t < T; ++t)
        for (Eigen::Index s = 0; s < t; ++s) memory.A_hat(t, s) = subdiagonal(t - s - 1);
    return memory;
}

MemoryMatrix memory_hutchinson(const Trajectory& traj, const Eigen::MatrixXd& X,
                               Eigen::Index m, std::uint64_t seed) {
    if (m < 1) throw InvalidParameter("memory_hutchinson: m must be >= 1");
    const Eigen::Index T = traj.T();
    const Eigen::Index p = X.cols();
    const Eigen::Index n = X.rows();
    if (p != traj.p()) throw DimensionMismatch("memory_hutchinson: X columns != trajectory p");
    require_complete(traj);

    MemoryMatrix memory;
    memory.method = MemoryMethod::hutchinson(m, seed);
    if (T == 1) {
        memory.A_hat = Eigen::MatrixXd::Zero(1, 1);
        return memory;
    }

    // One sign sketch, sampled once and fixed for all (t, t').
    Rng rng = make_rng(seed, 0, Purpose::Sketch);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    Eigen::MatrixXd W(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < m; ++k) W(i, k) = scale * rng.sign();

    const Eigen::MatrixXd XtW = X.transpose() * W; // p x m

    // Apply X'X/n; a precomputed Gram matrix wins unless p >> n.
    const bool use_gram = p <= 2 * n;
    Eigen::MatrixXd gram;
    if (use_gram) gram = X.transpose() * X / static_cast<double>(n);
    auto gram_apply = [&](const Eigen::MatrixXd& mcols) -> Eigen::MatrixXd {
        if (use_gram) return gram * mcols;
        return X.transpose() * (X * mcols) / static_cast<double>(n);
    };

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(T, T);
    Eigen::MatrixXd v_prev;  // p x m(t-2)
    Eigen::MatrixXd v_prev2; // p x m(t-3)

    for (Eigen::Index t = 2; t <= T; ++t) {
        const StepJacobians& jac = traj.steps[static_cast<std::size_t>(t - 2)].jac;
        Eigen::MatrixXd v_t = Eigen::MatrixXd::Zero(p, m * (t - 1));

        v_t.middleCols(m * (t - 2), m) = jac.d_prev.left_apply(XtW);
        if (t >= 3 && jac.d_prev2)
            v_t.middleCols(m * (t - 3), m) += jac.d_prev2->left_apply(XtW);

        if (v_prev.cols() > 0) {
            const Eigen::MatrixXd gram_v = gram_apply(v_prev);
            v_t.leftCols(v_prev.cols()) +=
                jac.j_prev.left_apply(v_prev) - jac.d_prev.left_apply(gram_v);
        }
        if (v_prev2.cols() > 0 && jac.j_prev2) {
            const Eigen::MatrixXd gram_v2 = gram_apply(v_prev2);
            v_t.leftCols(v_prev2.cols()) +=
                jac.j_prev2->left_apply(v_prev2) - jac.d_prev2->left_apply(gram_v2);
        }

        // tr[W' X V_{t,s}] / n = <X'W, V_{t,s}> / n; no n x n intermediates.
        for (Eigen::Index s = 1; s < t; ++s)
            A(t - 1, s - 1) =
                XtW.cwiseProduct(v_t.middleCols(m * (s - 1), m)).sum() / static_cast<double>(n);

        v_prev2 = std::move(v_prev);
        v_prev = std::move(v_t);
    }
    memory.A_hat = std::move(A);
    return memory;
}

WeightMatrix weights(const MemoryMatrix& memory, Eigen::Index n) {
    const Eigen::Index T = memory.A_hat.rows();
    if (memory.A_hat.cols() != T) throw DimensionMismatch("weights: A_hat must be square");
    if (n < 1) throw InvalidParameter("weights: n must be >= 1");

    // Forward substitution on (I - A/n) W = I; unit diagonal is exact.
    WeightMatrix result;
    result.W_hat = Eigen::MatrixXd::Zero(T, T);
    Eigen::MatrixXd& W = result.W_hat;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index t = 0; t < T; ++t) {
        if (t > 0)
            W.row(t).head(t) =
                (memory.A_hat.row(t).head(t) * inv_n) * W.topLeftCorner(t, t);
        W(t, t) = 1.0;
    }
    return result;
}

Eigen::MatrixXd check_weights(const Trajectory& traj, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& sigma) {
    const Eigen::Index T = traj.T();
    const Eigen::Index p = traj.p();
    const Eigen::Index n = X.rows();
    if (sigma.rows() != p || sigma.cols() != p)
        throw DimensionMismatch("check_weights: Sigma must be p x p");
    require_complete(traj);

    Eigen::MatrixXd C = Eigen::MatrixXd::Identity(T, T);
    // tr[Sigma (R_t)_s] = <Sigma, (R_t)_s> for symmetric Sigma.
    visit_exact_rows(traj, X, [&](Eigen::Index t, const Eigen::MatrixXd& r_t) {
        for (Eigen::Index s = 1; s < t; ++s)
            C(t - 1, s - 1) =
                sigma.cwiseProduct(r_t.middleCols(p * (s - 1), p)).sum() / static_cast<double>(n);
    });
    return C;
}

void save_memory(const MemoryMatrix& memory, const std::filesystem::path& csv_path,
                 const std::filesystem::path& meta_path) {
    write_matrix_csv(csv_path, memory.A_hat);
    nlohmann::json meta;
    switch (memory.method.kind) {
        case MemoryMethod::Kind::Exact:
            meta["method"] = "exact";
            break;
        case MemoryMethod::Kind::ClosedFormGD:
            meta["method"] = "gd-closed";
            break;
        case MemoryMethod::Kind::Hutchinson:
            meta["method"] = "hutchinson";
            meta["m"] = memory.method.m;
            meta["seed"] = memory.method.seed;
            break;
    }
    std::ofstream out(meta_path);
    if (!out) throw IoError("cannot open for writing: " + meta_path.string());
    out << meta.dump(2) << '\n';
}

} // namespace itrisk
