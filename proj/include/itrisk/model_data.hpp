#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>

namespace itrisk {

// Ground truth attached to synthetic instances.
struct Truth {
    Eigen::VectorXd b_star;  // length p
    Eigen::MatrixXd sigma;   // p x p, symmetric positive definite
    double sigma2 = 0.0;     // noise variance
    Eigen::VectorXd epsilon; // length n, the realized noise
};

// A regression problem: response y, design X, optional ground truth.
// Instances are immutable after construction and safe to share across
// threads.
struct LinearModelInstance {
    Eigen::MatrixXd X; // n x p
    Eigen::VectorXd y; // length n
    std::optional<Truth> truth;

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index p() const { return X.cols(); }
};

struct SimulationConfig {
    Eigen::Index n = 0;
    Eigen::Index p = 0;
    double rho = 0.5;                  // AR(1) parameter, in [0,1)
    double snr = 5.0;                  // target b*' Sigma b* / sigma2
    double sigma2 = 1.0;               // noise variance
    double sparsity_fraction = 0.05;   // fraction of nonzero coefficients
    std::uint64_t seed = 0;
    std::uint64_t max_elements = 50'000'000; // cap on n*p

    // Throws InvalidParameter/ConfigError on out-of-range fields.
    void validate() const;
};

// Sigma with entries rho^{|j-k|}; unit diagonal, symmetric.
Eigen::MatrixXd ar1_covariance(Eigen::Index p, double rho);

// Lower Cholesky factor S with S S' = Sigma; throws NotPositiveDefinite.
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& sigma);

// Synthetic instance following the simulation design: X has i.i.d. rows
// N(0, Sigma(rho)), epsilon ~ N(0, sigma2), b* supported on the first
// ceil(sparsity_fraction * p) coordinates with a common positive value
// scaled so the signal-to-noise ratio matches exactly, y = X b* + epsilon.
// Deterministic given (cfg.seed, rep).
LinearModelInstance generate_instance(const SimulationConfig& cfg, std::uint64_t rep = 0);

// Out-of-sample prediction error of b_t: ||Sigma^{1/2}(b_t - b*)||^2 + sigma2.
double true_risk(const Eigen::VectorXd& b_t, const std::optional<Truth>& truth);

// sigma2 + (b_t - b*)' Sigma (b_s - b*); symmetric in its two arguments.
double true_cross_risk(const Eigen::VectorXd& b_t, const Eigen::VectorXd& b_s,
                       const std::optional<Truth>& truth);

struct MinNormResult {
    Eigen::VectorXd b;                 // (X'X)^+ X' y
    std::optional<double> r_infinity;  // true risk of b, when truth is known
};

// Minimum-norm least squares via SVD; singular values below
// max(n,p) * eps * sigma_max are treated as zero.
MinNormResult minnorm_limit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const std::optional<Truth>& truth = std::nullopt);

// Instance export/import: X.csv, y.csv and, when truth is present,
// truth.json holding b*, sigma2 and rho (Sigma is rebuilt as AR(1)).
void save_instance(const LinearModelInstance& instance, const std::filesystem::path& dir,
                   std::optional<double> rho = std::nullopt);
LinearModelInstance load_instance(const std::filesystem::path& dir);

} // namespace itrisk
