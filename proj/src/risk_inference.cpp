#include "itrisk/risk_inference.hpp"

#include <cmath>

#include "itrisk/errors.hpp"
#include "itrisk/gaussian.hpp"

namespace itrisk {

namespace {

void check_index(Eigen::Index t, Eigen::Index T, const char* what) {
    if (t < 1 || t > T) throw InvalidParameter(std::string(what) + ": index out of range");
}

} // namespace

Eigen::VectorXd weighted_residual(const Eigen::MatrixXd& F, const WeightMatrix& weights,
                                  Eigen::Index t) {
    const Eigen::Index T = F.cols();
    check_index(t, T, "weighted_residual");
    if (weights.W_hat.rows() < T || weights.W_hat.cols() < T)
        throw DimensionMismatch("weighted_residual: weight matrix smaller than horizon");
    return F.leftCols(t) * weights.W_hat.row(t - 1).head(t).transpose();
}

double risk_estimate(const Eigen::MatrixXd& F, const WeightMatrix& weights, Eigen::Index t) {
    const Eigen::VectorXd u = weighted_residual(F, weights, t);
    return u.squaredNorm() / static_cast<double>(F.rows());
}

double cross_risk_estimate(const Eigen::MatrixXd& F, const WeightMatrix& weights, Eigen::Index t,
                           Eigen::Index t_prime) {
    const Eigen::VectorXd u = weighted_residual(F, weights, t);
    const Eigen::VectorXd u_prime = weighted_residual(F, weights, t_prime);
    return u.dot(u_prime) / static_cast<double>(F.rows());
}

double averaged_risk_estimate(const Eigen::MatrixXd& F, const WeightMatrix& weights,
                              Eigen::Index t0, Eigen::Index m) {
    if (m < 1) throw InvalidParameter("averaged_risk_estimate: m must be >= 1");
    check_index(t0, F.cols(), "averaged_risk_estimate");
    check_index(t0 + m - 1, F.cols(), "averaged_risk_estimate");

    std::vector<Eigen::VectorXd> u;
    u.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index t = t0; t < t0 + m; ++t) u.push_back(weighted_residual(F, weights, t));

    double total = 0.0;
    for (const auto& ut : u)
        for (const auto& us : u) total += ut.dot(us);
    return total / (static_cast<double>(m) * static_cast<double>(m) * static_cast<double>(F.rows()));
}

Eigen::Index early_stop(const Eigen::VectorXd& r_hat) {
    if (r_hat.size() == 0) throw InvalidParameter("early_stop: empty risk vector");
    Eigen::Index best = 0;
    for (Eigen::Index t = 1; t < r_hat.size(); ++t)
        if (r_hat(t) < r_hat(best)) best = t;
    return best + 1;
}

double debias(const Trajectory& traj, const WeightMatrix& weights,
              const Eigen::VectorXd& sigma_inv_col_j, Eigen::Index t, Eigen::Index j) {
    const Eigen::Index T = traj.T();
    const Eigen::Index p = traj.p();
    check_index(t, T, "debias");
    if (j < 1 || j > p) throw InvalidParameter("debias: coordinate out of range");
    if (sigma_inv_col_j.size() != p)
        throw DimensionMismatch("debias: Sigma^{-1} column has wrong length");

    // (sum_s w_{t,s} F e_s)' X Sigma^{-1} e_j / n equals the same weighted
    // combination of the gradient columns V e_s = X' F e_s / n.
    const Eigen::VectorXd weighted_gradient =
        traj.V.leftCols(t) * weights.W_hat.row(t - 1).head(t).transpose();
    return traj.B(j - 1, t - 1) + weighted_gradient.dot(sigma_inv_col_j);
}

double zscore(double b_debias_j, double b_star_j, double r_hat_t, Eigen::Index n,
              double sigma_inv_jj) {
    if (!(r_hat_t > 0.0)) throw InvalidParameter("zscore: r_hat must be > 0");
    if (!(sigma_inv_jj > 0.0)) throw InvalidParameter("zscore: (Sigma^{-1})_jj must be > 0");
    return std::sqrt(static_cast<double>(n)) * (b_debias_j - b_star_j) /
           std::sqrt(sigma_inv_jj * r_hat_t);
}

ConfidenceInterval confidence_interval(double b_debias_j, double r_hat_t, Eigen::Index n,
                                       double sigma_inv_jj, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw InvalidParameter("confidence_interval: alpha must lie in (0,1)");
    if (r_hat_t < 0.0) throw InvalidParameter("confidence_interval: r_hat must be >= 0");
    if (sigma_inv_jj < 0.0) throw InvalidParameter("confidence_interval: (Sigma^{-1})_jj must be >= 0");
    const double half =
        normal_quantile_two_sided(alpha) * std::sqrt(r_hat_t * sigma_inv_jj / static_cast<double>(n));
    return {b_debias_j - half, b_debias_j + half};
}

RiskReport compute_risk_report(const Trajectory& traj, const WeightMatrix& weights,
                               const LinearModelInstance& instance,
                               const RiskReportOptions& options) {
    const Eigen::Index T = traj.T();
    RiskReport report;
    report.r_hat.resize(T);
    for (Eigen::Index t = 1; t <= T; ++t) report.r_hat(t - 1) = risk_estimate(traj.F, weights, t);
    report.t_star = early_stop(report.r_hat);
    report.r_infinity = options.r_infinity;

    if (instance.truth) {
        Eigen::VectorXd r_true(T);
        for (Eigen::Index t = 1; t <= T; ++t)
            r_true(t - 1) = true_risk(traj.B.col(t - 1), instance.truth);
        report.r_true = std::move(r_true);
    }

    if (options.with_cross) {
        std::vector<Eigen::VectorXd> u;
        u.reserve(static_cast<std::size_t>(T));
        for (Eigen::Index t = 1; t <= T; ++t) u.push_back(weighted_residual(traj.F, weights, t));
        Eigen::MatrixXd cross(T, T);
        for (Eigen::Index a = 0; a < T; ++a)
            for (Eigen::Index b = 0; b <= a; ++b) {
                const double value =
                    u[static_cast<std::size_t>(a)].dot(u[static_cast<std::size_t>(b)]) /
                    static_cast<double>(traj.F.rows());
                cross(a, b) = value;
                cross(b, a) = value;
            }
        report.r_hat_cross = std::move(cross);
    }
    return report;
}

InferenceReport compute_inference_report(const Trajectory& traj, const WeightMatrix& weights,
                                         const LinearModelInstance& instance,
                                         const std::vector<Eigen::Index>& times,
                                         const std::vector<Eigen::Index>& coordinates,
                                         double alpha) {
    const Eigen::Index p = traj.p();
    const Eigen::Index n = instance.n();

    // Sigma^{-1} e_j by triangular solves with the covariance factor; the
    // identity is used when no ground-truth covariance is available.
    std::optional<Eigen::MatrixXd> factor;
    if (instance.truth) factor = covariance_factor(instance.truth->sigma);

    auto sigma_inv_col = [&](Eigen::Index j) -> Eigen::VectorXd {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
        e(j - 1) = 1.0;
        if (!factor) return e;
        Eigen::VectorXd u = factor->triangularView<Eigen::Lower>().solve(e);
        return factor->transpose().triangularView<Eigen::Upper>().solve(u);
    };

    InferenceReport report;
    report.alpha = alpha;
    for (Eigen::Index j : coordinates) {
        const Eigen::VectorXd col = sigma_inv_col(j);
        const double sigma_inv_jj = col(j - 1);
        for (Eigen::Index t : times) {
            const double r_hat = risk_estimate(traj.F, weights, t);
            InferenceEntry entry;
            entry.t = t;
            entry.j = j;
            entry.b_debias = debias(traj, weights, col, t, j);
            const ConfidenceInterval ci =
                confidence_interval(entry.b_debias, r_hat, n, sigma_inv_jj, alpha);
            entry.ci_lo = ci.lo;
            entry.ci_hi = ci.hi;
            if (instance.truth) {
                const double b_star_j = instance.truth->b_star(j - 1);
                if (r_hat > 0.0)
                    entry.z = zscore(entry.b_debias, b_star_j, r_hat, n, sigma_inv_jj);
                entry.covered = (ci.lo <= b_star_j && b_star_j <= ci.hi);
            }
            report.entries.push_back(std::move(entry));
        }
    }
    return report;
}

} // namespace itrisk
