#include "tlflr/synth.hpp"

#include "tlflr/errors.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <random>

namespace tlflr {

namespace {

constexpr std::size_t kEvaluationGridSize = 100;

struct HaarIndex {
    std::size_t level; // j
    std::size_t shift; // l
};

HaarIndex haar_index(std::size_t k)
{
    if (k < 1)
        throw DomainError("haar_basis: index must be at least 1");
    const auto level = static_cast<std::size_t>(std::bit_width(k) - 1);
    return {level, k - (std::size_t{1} << level)};
}

Eigen::MatrixXd basis_matrix(BasisKind kind, std::size_t count, const Grid& grid)
{
    Eigen::MatrixXd b(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(count));
    for (std::size_t k = 1; k <= count; ++k) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double t = grid.point(i);
            b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k - 1))
                = kind == BasisKind::cosine ? cosine_value(k, t) : haar_value(k, t);
        }
    }
    return b;
}

Eigen::VectorXd sqrt_eigenvalues(const SyntheticConfig& config)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(config.truncation));
    for (std::size_t k = 1; k <= config.truncation; ++k)
        v(static_cast<Eigen::Index>(k - 1)) = std::sqrt(std::pow(static_cast<double>(k), -config.alpha));
    return v;
}

Eigen::MatrixXd draw_scores(std::size_t rows, std::size_t cols, ScoreDistribution dist, Rng& rng)
{
    Eigen::MatrixXd z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index k = 0; k < z.cols(); ++k)
            z(i, k) = draw_score(dist, rng);
    return z;
}

Eigen::VectorXd draw_noise(std::size_t n, double sigma, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd e(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < e.size(); ++i)
        e(i) = sigma * normal(rng);
    return e;
}

// Curves X = sum_k sqrt(lambda_k) Z_k basis_k and responses
// Y = <slope, X> + eps, where `response_weights` maps the scaled scores to
// <slope, X> exactly.
FunctionalDataset draw_population(std::size_t n, const Eigen::MatrixXd& basis, const Eigen::VectorXd& sqrt_lambda,
                                  const Eigen::VectorXd& response_weights, ScoreDistribution dist, double sigma,
                                  const Grid& grid, Rng& rng, std::string label)
{
    const Eigen::MatrixXd xi = draw_scores(n, static_cast<std::size_t>(sqrt_lambda.size()), dist, rng)
                                   * sqrt_lambda.asDiagonal();
    Eigen::MatrixXd curves = xi * basis.transpose();
    Eigen::VectorXd y = xi * response_weights + draw_noise(n, sigma, rng);
    return {grid, std::move(curves), std::move(y), std::move(label)};
}

} // namespace

void SyntheticConfig::validate() const
{
    if (!(alpha > 1.0))
        throw ConfigError("SyntheticConfig: alpha must exceed 1");
    if (truncation < 1)
        throw ConfigError("SyntheticConfig: truncation must be at least 1");
    if (s < 1 || s > truncation)
        throw ConfigError("SyntheticConfig: contrast support s must lie in [1, truncation]");
    if (informative > sources)
        throw ConfigError("SyntheticConfig: K exceeds L");
    if (!(h >= 0.0))
        throw ConfigError("SyntheticConfig: h must be nonnegative");
    if (!(sigma_eps >= 0.0))
        throw ConfigError("SyntheticConfig: sigma_eps must be nonnegative");
    if (n < 1 || n_source < 1)
        throw ConfigError("SyntheticConfig: sample sizes must be positive");
}

std::size_t SyntheticConfig::default_grid_size() const
{
    return model == SyntheticModel::III || model == SyntheticModel::IV ? 257 : 100;
}

double cosine_value(std::size_t k, double t)
{
    return std::numbers::sqrt2 * std::cos(static_cast<double>(k) * std::numbers::pi * t);
}

double haar_value(std::size_t k, double t)
{
    const auto [level, shift] = haar_index(k);
    const double scale = std::ldexp(1.0, static_cast<int>(level)); // 2^j
    const double height = std::sqrt(scale);
    const double x = t * scale - static_cast<double>(shift); // position inside the support, [0, 1]
    if (x >= 0.0 && x < 0.5)
        return height;
    if (x >= 0.5 && x <= 1.0)
        return -height;
    return 0.0;
}

GridFunction cosine_basis(std::size_t k, const Grid& grid)
{
    if (k < 1)
        throw DomainError("cosine_basis: index must be at least 1");
    return {grid, basis_matrix(BasisKind::cosine, k, grid).col(static_cast<Eigen::Index>(k - 1))};
}

GridFunction haar_basis(std::size_t k, const Grid& grid)
{
    haar_index(k);
    Eigen::VectorXd v(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = haar_value(k, grid.point(i));
    return {grid, std::move(v)};
}

Eigen::MatrixXd cosine_haar_cross_gram(std::size_t count)
{
    using std::numbers::pi;
    const auto c = static_cast<Eigen::Index>(count);
    Eigen::MatrixXd gram(c, c);
    for (std::size_t j = 1; j <= count; ++j) {
        const double freq = static_cast<double>(j) * pi;
        auto integral = [&](double a, double b) {
            return std::numbers::sqrt2 * (std::sin(freq * b) - std::sin(freq * a)) / freq;
        };
        for (std::size_t k = 1; k <= count; ++k) {
            const auto [level, shift] = haar_index(k);
            const double width = std::ldexp(1.0, -static_cast<int>(level));
            const double a = static_cast<double>(shift) * width;
            const double mid = a + 0.5 * width;
            const double b = a + width;
            gram(static_cast<Eigen::Index>(j - 1), static_cast<Eigen::Index>(k - 1))
                = std::sqrt(1.0 / width) * (integral(a, mid) - integral(mid, b));
        }
    }
    return gram;
}

double draw_score(ScoreDistribution dist, Rng& rng)
{
    switch (dist) {
    case ScoreDistribution::uniform: {
        std::uniform_real_distribution<double> u(-std::numbers::sqrt3, std::numbers::sqrt3);
        return u(rng);
    }
    case ScoreDistribution::gaussian: {
        std::normal_distribution<double> g(0.0, 1.0);
        return g(rng);
    }
    case ScoreDistribution::scaled_t5: {
        std::student_t_distribution<double> t(5.0);
        return std::sqrt(3.0 / 5.0) * t(rng);
    }
    case ScoreDistribution::zero:
        return 0.0;
    }
    return 0.0;
}

Eigen::VectorXd target_slope_coefficients(const SyntheticConfig& config)
{
    Eigen::VectorXd b(static_cast<Eigen::Index>(config.truncation));
    for (std::size_t k = 1; k <= config.truncation; ++k) {
        const double sign = k % 2 == 1 ? 1.0 : -1.0;
        b(static_cast<Eigen::Index>(k - 1)) = 4.0 * std::pow(static_cast<double>(k), -config.beta) * sign;
    }
    return b;
}

SyntheticTarget generate_target(const SyntheticConfig& config, const Grid& grid)
{
    config.validate();
    Rng rng(derive_seed(config.seed, {0}));
    const Eigen::MatrixXd basis = basis_matrix(BasisKind::cosine, config.truncation, grid);
    Eigen::VectorXd coeffs = target_slope_coefficients(config);
    const Eigen::VectorXd sqrt_lambda = sqrt_eigenvalues(config);

    // Cosine functions are orthonormal, so <b, X_i> = sum_k b_k xi_ik.
    FunctionalDataset data = draw_population(config.n, basis, sqrt_lambda, coeffs, config.score_dist,
                                             config.sigma_eps, grid, rng, "target");
    GridFunction slope(grid, basis * coeffs);
    return {std::move(data), {std::move(slope), std::move(coeffs), BasisKind::cosine}};
}

std::vector<SyntheticSource> generate_sources(const SyntheticConfig& config, const Grid& grid,
                                              const SyntheticTruth& truth)
{
    config.validate();
    const std::size_t T = config.truncation;
    if (static_cast<std::size_t>(truth.slope_coeffs.size()) != T)
        throw DimensionError("generate_sources: truth has a different truncation");

    const Eigen::VectorXd sqrt_lambda = sqrt_eigenvalues(config);
    const Eigen::MatrixXd cosine = basis_matrix(BasisKind::cosine, T, grid);
    Eigen::MatrixXd haar;
    Eigen::MatrixXd cross; // <phi_j, psi_k>
    if (config.model == SyntheticModel::III || config.model == SyntheticModel::IV) {
        haar = basis_matrix(BasisKind::haar, T, grid);
        cross = cosine_haar_cross_gram(T);
    }

    // Model (I) has informative sources only.
    const std::size_t count = config.model == SyntheticModel::I ? config.informative : config.sources;
    std::vector<SyntheticSource> out;
    out.reserve(count);
    for (std::size_t l = 0; l < count; ++l) {
        Rng rng(derive_seed(config.seed, {1, l}));
        std::bernoulli_distribution coin(0.5);
        Eigen::VectorXd rademacher(static_cast<Eigen::Index>(T));
        for (Eigen::Index k = 0; k < rademacher.size(); ++k)
            rademacher(k) = coin(rng) ? 1.0 : -1.0;

        const bool informative = l < config.informative;
        Eigen::VectorXd w = truth.slope_coeffs;
        if (config.model == SyntheticModel::I) {
            const auto s = static_cast<Eigen::Index>(config.s);
            w.head(s) -= rademacher.head(s) * (config.h / static_cast<double>(config.s));
        } else if (informative) {
            w -= rademacher * (config.h / static_cast<double>(T));
        } else {
            w -= rademacher * 40.0;
        }

        const bool haar_curves = config.model == SyntheticModel::IV
                                 || (config.model == SyntheticModel::III && !informative);
        // Responses integrate the cosine-basis slope against the curve:
        // with Haar curves that is sum_k xi_k sum_j w_j <phi_j, psi_k>.
        const Eigen::VectorXd response_weights = haar_curves ? Eigen::VectorXd(cross.transpose() * w) : w;
        FunctionalDataset data
            = draw_population(config.n_source, haar_curves ? haar : cosine, sqrt_lambda, response_weights,
                              ScoreDistribution::gaussian, config.sigma_eps, grid, rng, "source" + std::to_string(l + 1));
        out.push_back({std::move(data), std::move(w), informative, haar_curves ? BasisKind::haar : BasisKind::cosine});
    }
    return out;
}

double mise(const GridFunction& estimate, const SyntheticTruth& truth)
{
    const Grid eval(kEvaluationGridSize);
    const GridFunction est = estimate.resample(eval);
    Eigen::VectorXd diff(static_cast<Eigen::Index>(eval.size()));
    for (std::size_t i = 0; i < eval.size(); ++i) {
        const double t = eval.point(i);
        double b = 0.0;
        for (Eigen::Index k = 0; k < truth.slope_coeffs.size(); ++k) {
            const auto idx = static_cast<std::size_t>(k + 1);
            b += truth.slope_coeffs(k) * (truth.basis_used == BasisKind::cosine ? cosine_value(idx, t) : haar_value(idx, t));
        }
        diff(static_cast<Eigen::Index>(i)) = est[i] - b;
    }
    return diff.cwiseAbs2().dot(eval.weights());
}

double mise(const SlopeEstimate& estimate, const SyntheticTruth& truth)
{
    return mise(estimate.slope_curve, truth);
}

std::string to_string(SyntheticModel model)
{
    switch (model) {
    case SyntheticModel::I:
        return "I";
    case SyntheticModel::II:
        return "II";
    case SyntheticModel::III:
        return "III";
    case SyntheticModel::IV:
        return "IV";
    }
    return "?";
}

std::string to_string(ScoreDistribution dist)
{
    switch (dist) {
    case ScoreDistribution::uniform:
        return "uniform";
    case ScoreDistribution::gaussian:
        return "gaussian";
    case ScoreDistribution::scaled_t5:
        return "t5";
    case ScoreDistribution::zero:
        return "zero";
    }
    return "?";
}

SyntheticModel parse_model(const std::string& text)
{
    if (text == "I" || text == "1")
        return SyntheticModel::I;
    if (text == "II" || text == "2")
        return SyntheticModel::II;
    if (text == "III" || text == "3")
        return SyntheticModel::III;
    if (text == "IV" || text == "4")
        return SyntheticModel::IV;
    throw ConfigError("unknown model '" + text + "' (expected I, II, III or IV)");
}

ScoreDistribution parse_score_distribution(const std::string& text)
{
    if (text == "uniform")
        return ScoreDistribution::uniform;
    if (text == "gaussian")
        return ScoreDistribution::gaussian;
    if (text == "t5" || text == "scaled-t5")
        return ScoreDistribution::scaled_t5;
    if (text == "zero")
        return ScoreDistribution::zero;
    throw ConfigError("unknown score distribution '" + text + "' (expected uniform, gaussian or t5)");
}

} // namespace tlflr
