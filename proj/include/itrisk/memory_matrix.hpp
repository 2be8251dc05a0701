#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "itrisk/solvers.hpp"

namespace itrisk {

struct MemoryMethod {
    enum class Kind { Exact, ClosedFormGD, Hutchinson };
    Kind kind = Kind::Exact;
    Eigen::Index m = 3;        // sketch columns (Hutchinson)
    std::uint64_t seed = 0;    // sketch seed (Hutchinson)

    static MemoryMethod exact() { return {Kind::Exact, 0, 0}; }
    static MemoryMethod closed_form_gd() { return {Kind::ClosedFormGD, 0, 0}; }
    static MemoryMethod hutchinson(Eigen::Index m, std::uint64_t seed) {
        return {Kind::Hutchinson, m, seed};
    }
};

// T x T strictly lower-triangular memory matrix.
struct MemoryMatrix {
    Eigen::MatrixXd A_hat;
    MemoryMethod method;
};

// Lower-unitriangular weights (I - A_hat/n)^{-1}; C_check optionally holds
// the covariance-adaptive alternative weights.
struct WeightMatrix {
    Eigen::MatrixXd W_hat;
    std::optional<Eigen::MatrixXd> C_check;
};

struct ExactOptions {
    // Skip the spectral fast path used when every recorded block is a
    // scaled identity; the generic block recursion is then used even for
    // GD/AGD.  Exists so tests can exercise both paths.
    bool force_generic = false;
};

// A_hat from the recorded Jacobian blocks by block forward substitution:
// R_t = sum_s e_s' (x) D_{t,s} + sum_s P_{t,s} R_s with
// P_{t,s} = J_{t,s} - D_{t,s} X'X/n, then A_hat(t,t') = tr[X R_t
// (e_t' (x) X')]/n.  Only the two most recent R rows are kept.  When every
// block is a scaled identity the same recursion is run per eigenvalue of
// X'X/n, which gives identical values at a fraction of the cost.
MemoryMatrix memory_exact(const Trajectory& traj, const Eigen::MatrixXd& X,
                          const ExactOptions& options = {});

// GD closed form: A_hat(t,t') = sum_i eta lambda_i (1 - eta lambda_i)^{t-t'-1}
// over the eigenvalues lambda_i of X'X/n.
MemoryMatrix memory_gd_closed_form(const Eigen::MatrixXd& X, double eta, Eigen::Index T);

// Randomized approximation: one n x m sign sketch W (entries +-1/sqrt(m),
// sampled once and fixed), V_t propagated by the two-lag recursion, and
// A_hat(t,t') = tr[W' X V_{t,t'}]/n.
MemoryMatrix memory_hutchinson(const Trajectory& traj, const Eigen::MatrixXd& X,
                               Eigen::Index m, std::uint64_t seed);

// (I - A_hat/n)^{-1} by forward substitution on the unit-lower-triangular
// system; the diagonal is exactly 1.
WeightMatrix weights(const MemoryMatrix& memory, Eigen::Index n);

// Alternative weights c_check(t,s) = 1{t=s} + tr[Sigma R_t (e_s (x) I_p)]/n,
// computed from the same R rows as memory_exact.  Requires Sigma (identity
// allowed).  Lower triangular with unit diagonal.
Eigen::MatrixXd check_weights(const Trajectory& traj, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& sigma);

// A_hat as CSV plus a sidecar JSON recording the construction method.
void save_memory(const MemoryMatrix& memory, const std::filesystem::path& csv_path,
                 const std::filesystem::path& meta_path);

} // namespace itrisk
