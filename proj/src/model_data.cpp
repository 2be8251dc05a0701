#include "itrisk/model_data.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "itrisk/csv.hpp"
#include "itrisk/errors.hpp"
#include "itrisk/gaussian.hpp"
#include "itrisk/rng.hpp"

namespace itrisk {

void SimulationConfig::validate() const {
    if (n < 1 || p < 1) throw InvalidParameter("simulation: n and p must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidParameter("simulation: rho must lie in [0,1)");
    if (!(snr > 0.0)) throw InvalidParameter("simulation: snr must be > 0");
    if (!(sigma2 > 0.0)) throw InvalidParameter("simulation: sigma2 must be > 0");
    if (!(sparsity_fraction > 0.0 && sparsity_fraction <= 1.0))
        throw InvalidParameter("simulation: sparsity_fraction must lie in (0,1]");
    const auto elements = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(p);
    if (elements > max_elements)
        throw InvalidParameter("simulation: n*p exceeds the memory cap of " +
                               std::to_string(max_elements) + " elements");
}

Eigen::MatrixXd ar1_covariance(Eigen::Index p, double rho) {
    if (p < 1) throw InvalidParameter("ar1_covariance: p must be >= 1");
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidParameter("ar1_covariance: rho must lie in [0,1)");
    Eigen::MatrixXd sigma(p, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index k = 0; k <= j; ++k) {
            // 0^0 = 1 keeps the diagonal at 1 for rho = 0.
            const double value = std::pow(rho, static_cast<double>(j - k));
            sigma(j, k) = value;
            sigma(k, j) = value;
        }
    return sigma;
}

Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& sigma) {
    if (sigma.rows() != sigma.cols())
        throw DimensionMismatch("covariance_factor: matrix must be square");
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("covariance_factor: input is not positive definite");
    return llt.matrixL();
}

LinearModelInstance generate_instance(const SimulationConfig& cfg, std::uint64_t rep) {
    cfg.validate();
    const Eigen::Index n = cfg.n;
    const Eigen::Index p = cfg.p;

    const Eigen::MatrixXd sigma = ar1_covariance(p, cfg.rho);
    const Eigen::MatrixXd factor = covariance_factor(sigma);

    Rng design_rng = make_rng(cfg.seed, rep, Purpose::Design);
    Eigen::MatrixXd Z(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) Z(i, j) = standard_normal(design_rng);
    Eigen::MatrixXd X = Z * factor.transpose();

    Rng noise_rng = make_rng(cfg.seed, rep, Purpose::Noise);
    const double noise_sd = std::sqrt(cfg.sigma2);
    Eigen::VectorXd epsilon(n);
    for (Eigen::Index i = 0; i < n; ++i) epsilon(i) = noise_sd * standard_normal(noise_rng);

    // Support on the first ceil(fraction * p) coordinates, all set to the
    // positive constant that hits the target signal-to-noise ratio
    // b*' Sigma b* / sigma2 = snr exactly.
    const auto support = static_cast<Eigen::Index>(
        std::ceil(cfg.sparsity_fraction * static_cast<double>(p)));
    const double block_sum = sigma.topLeftCorner(support, support).sum();
    const double value = std::sqrt(cfg.snr * cfg.sigma2 / block_sum);
    Eigen::VectorXd b_star = Eigen::VectorXd::Zero(p);
    b_star.head(support).setConstant(value);

    LinearModelInstance instance;
    instance.y = X * b_star + epsilon;
    instance.X = std::move(X);
    instance.truth = Truth{std::move(b_star), sigma, cfg.sigma2, std::move(epsilon)};
    return instance;
}

double true_risk(const Eigen::VectorXd& b_t, const std::optional<Truth>& truth) {
    if (!truth) throw TruthRequired("true_risk: ground truth is required");
    if (b_t.size() != truth->b_star.size())
        throw DimensionMismatch("true_risk: coefficient length mismatch");
    const Eigen::VectorXd d = b_t - truth->b_star;
    return d.dot(truth->sigma * d) + truth->sigma2;
}

double true_cross_risk(const Eigen::VectorXd& b_t, const Eigen::VectorXd& b_s,
                       const std::optional<Truth>& truth) {
    if (!truth) throw TruthRequired("true_cross_risk: ground truth is required");
    if (b_t.size() != truth->b_star.size() || b_s.size() != truth->b_star.size())
        throw DimensionMismatch("true_cross_risk: coefficient length mismatch");
    const Eigen::VectorXd dt = b_t - truth->b_star;
    const Eigen::VectorXd ds = b_s - truth->b_star;
    return truth->sigma2 + dt.dot(truth->sigma * ds);
}

MinNormResult minnorm_limit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const std::optional<Truth>& truth) {
    if (X.rows() != y.size()) throw DimensionMismatch("minnorm_limit: X rows != len(y)");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = static_cast<double>(std::max(X.rows(), X.cols())) *
                          std::numeric_limits<double>::epsilon() *
                          (sv.size() ? sv(0) : 0.0);
    Eigen::VectorXd coeffs = svd.matrixU().transpose() * y;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        coeffs(i) = sv(i) > cutoff ? coeffs(i) / sv(i) : 0.0;

    MinNormResult result;
    result.b = svd.matrixV() * coeffs;
    if (truth) result.r_infinity = true_risk(result.b, truth);
    return result;
}

void save_instance(const LinearModelInstance& instance, const std::filesystem::path& dir,
                   std::optional<double> rho) {
    std::filesystem::create_directories(dir);
    write_matrix_csv(dir / "X.csv", instance.X);
    write_vector_csv(dir / "y.csv", instance.y);
    if (!instance.truth) return;

    double rho_value = 0.0;
    if (rho)
        rho_value = *rho;
    else if (instance.p() >= 2)
        rho_value = instance.truth->sigma(0, 1);

    nlohmann::json truth_json;
    truth_json["b_star"] = std::vector<double>(
        instance.truth->b_star.data(), instance.truth->b_star.data() + instance.truth->b_star.size());
    truth_json["sigma2"] = instance.truth->sigma2;
    truth_json["rho"] = rho_value;

    std::ofstream out(dir / "truth.json");
    if (!out) throw IoError("cannot open for writing: " + (dir / "truth.json").string());
    out << truth_json.dump(2) << '\n';
}

LinearModelInstance load_instance(const std::filesystem::path& dir) {
    LinearModelInstance instance;
    instance.X = read_matrix_csv(dir / "X.csv");
    instance.y = read_vector_csv(dir / "y.csv");
    if (instance.X.rows() != instance.y.size())
        throw IoError("instance at " + dir.string() + ": X rows != len(y)");

    const auto truth_path = dir / "truth.json";
    if (std::filesystem::exists(truth_path)) {
        std::ifstream in(truth_path);
        if (!in) throw IoError("cannot open for reading: " + truth_path.string());
        nlohmann::json truth_json;
        try {
            in >> truth_json;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed truth.json at " + truth_path.string() + ": " + e.what());
        }
        Truth truth;
        const auto& b = truth_json.at("b_star");
        truth.b_star.resize(static_cast<Eigen::Index>(b.size()));
        for (Eigen::Index i = 0; i < truth.b_star.size(); ++i)
            truth.b_star(i) = b.at(static_cast<std::size_t>(i)).get<double>();
        if (truth.b_star.size() != instance.p())
            throw IoError("truth.json b_star length does not match X columns");
        truth.sigma2 = truth_json.at("sigma2").get<double>();
        truth.sigma = ar1_covariance(instance.p(), truth_json.at("rho").get<double>());
        truth.epsilon = instance.y - instance.X * truth.b_star;
        instance.truth = std::move(truth);
    }
    return instance;
}

} // namespace itrisk
