#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "itrisk/memory_matrix.hpp"
#include "itrisk/model_data.hpp"
#include "itrisk/solvers.hpp"

namespace itrisk {

// All iteration indices t below are 1-based, matching the iterate numbering
// b^1, ..., b^T.

// Weighted residual sum_{s<=t} w_{t,s} (y - X b^s); the common ingredient of
// the risk estimate, cross-risk and debiasing correction.
Eigen::VectorXd weighted_residual(const Eigen::MatrixXd& F, const WeightMatrix& weights,
                                  Eigen::Index t);

// r_hat_t = || sum_{s<=t} w_{t,s} F e_s ||^2 / n
double risk_estimate(const Eigen::MatrixXd& F, const WeightMatrix& weights, Eigen::Index t);

// r_hat_{t,t'} = (weighted residual at t)' (weighted residual at t') / n
double cross_risk_estimate(const Eigen::MatrixXd& F, const WeightMatrix& weights,
                           Eigen::Index t, Eigen::Index t_prime);

// Risk of the average of m consecutive iterates starting at t0:
// (1/m^2) * double sum of cross risks over the window.
double averaged_risk_estimate(const Eigen::MatrixXd& F, const WeightMatrix& weights,
                              Eigen::Index t0, Eigen::Index m);

// Smallest index attaining the minimum (1-based).
Eigen::Index early_stop(const Eigen::VectorXd& r_hat);

// b^t_j + (1/n) (weighted residual at t)' X (Sigma^{-1} e_j)
double debias(const Trajectory& traj, const WeightMatrix& weights,
              const Eigen::VectorXd& sigma_inv_col_j, Eigen::Index t, Eigen::Index j);

// sqrt(n) (b_debias_j - b*_j) / sqrt(sigma_inv_jj * r_hat_t)
double zscore(double b_debias_j, double b_star_j, double r_hat_t, Eigen::Index n,
              double sigma_inv_jj);

struct ConfidenceInterval {
    double lo = 0.0;
    double hi = 0.0;
};

// b_debias_j -+ z_{alpha/2} sqrt(r_hat_t * sigma_inv_jj / n)
ConfidenceInterval confidence_interval(double b_debias_j, double r_hat_t, Eigen::Index n,
                                       double sigma_inv_jj, double alpha);

struct RiskReport {
    Eigen::VectorXd r_hat;                      // length T
    std::optional<Eigen::VectorXd> r_true;      // when truth is known
    std::optional<Eigen::MatrixXd> r_hat_cross; // T x T, on request
    Eigen::Index t_star = 1;                    // early-stopping index
    std::optional<double> r_infinity;
};

struct RiskReportOptions {
    bool with_cross = false;
    std::optional<double> r_infinity;
};

RiskReport compute_risk_report(const Trajectory& traj, const WeightMatrix& weights,
                               const LinearModelInstance& instance,
                               const RiskReportOptions& options = {});

struct InferenceEntry {
    Eigen::Index t = 0;
    Eigen::Index j = 0; // 1-based coordinate
    double b_debias = 0.0;
    std::optional<double> z; // requires ground truth
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::optional<bool> covered;
};

struct InferenceReport {
    std::vector<InferenceEntry> entries;
    double alpha = 0.05;
};

// Debiased estimates, z-scores and confidence intervals at the requested
// (t, j) pairs.  Sigma^{-1} e_j is obtained by solving with the covariance
// factor of the known Sigma; without truth the identity covariance is used
// and z / covered are absent.
InferenceReport compute_inference_report(const Trajectory& traj, const WeightMatrix& weights,
                                         const LinearModelInstance& instance,
                                         const std::vector<Eigen::Index>& times,
                                         const std::vector<Eigen::Index>& coordinates,
                                         double alpha);

} // namespace itrisk
