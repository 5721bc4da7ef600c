#pragma once

// Synthetic target/source populations built from truncated Karhunen-Loeve
// expansions, plus the integrated squared error used to score estimates.

#include "tlflr/funcore.hpp"
#include "tlflr/modelsel.hpp"
#include "tlflr/regress.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace tlflr {

enum class SyntheticModel { I, II, III, IV };

enum class ScoreDistribution {
    uniform,  // uniform on [-sqrt 3, sqrt 3]
    gaussian,
    scaled_t5, // sqrt(3/5) * t_5
    zero,      // degenerate; every score is 0 (test hook)
};

enum class BasisKind { cosine, haar };

struct SyntheticConfig {
    double alpha = 2.0;
    double beta = 2.5;
    std::size_t n = 150;
    std::size_t n_source = 100;
    std::size_t sources = 20; // L
    std::size_t informative = 20; // K = |A_h|
    double h = 2.0;
    std::size_t s = 1;
    double sigma_eps = 0.5;
    SyntheticModel model = SyntheticModel::I;
    ScoreDistribution score_dist = ScoreDistribution::uniform;
    std::size_t truncation = 50;
    std::uint64_t seed = 0;

    /// Throws ConfigError on an inconsistent configuration.
    void validate() const;

    /// Grid size the benchmarks use: 100, or 257 (dyadic plus endpoint)
    /// when Haar-basis sources are involved.
    std::size_t default_grid_size() const;
};

struct SyntheticTruth {
    GridFunction slope;
    Eigen::VectorXd slope_coeffs;
    BasisKind basis_used = BasisKind::cosine;
};

struct SyntheticTarget {
    FunctionalDataset data;
    SyntheticTruth truth;
};

struct SyntheticSource {
    FunctionalDataset data;
    Eigen::VectorXd coeffs; // w_k in the cosine basis
    bool informative = true;
    BasisKind curve_basis = BasisKind::cosine;
};

/// sqrt(2) cos(k pi t).
double cosine_value(std::size_t k, double t);

/// Haar function k = 2^j + l: 2^{j/2} on [l/2^j, (l+0.5)/2^j),
/// -2^{j/2} on [(l+0.5)/2^j, (l+1)/2^j], zero elsewhere.
double haar_value(std::size_t k, double t);

GridFunction cosine_basis(std::size_t k, const Grid& grid);
GridFunction haar_basis(std::size_t k, const Grid& grid);

/// Exact L2 inner products C(j, k) = <phi_{j+1}, psi_{k+1}> between the
/// first `count` cosine and Haar functions.
Eigen::MatrixXd cosine_haar_cross_gram(std::size_t count);

/// One unit-variance score draw.
double draw_score(ScoreDistribution dist, Rng& rng);

/// b_k = 4 k^{-beta} (-1)^{k+1}, k = 1..truncation.
Eigen::VectorXd target_slope_coefficients(const SyntheticConfig& config);

SyntheticTarget generate_target(const SyntheticConfig& config, const Grid& grid);

std::vector<SyntheticSource> generate_sources(const SyntheticConfig& config, const Grid& grid,
                                              const SyntheticTruth& truth);

/// Trapezoid integral of (estimate - truth)^2 on 100 equally spaced points.
double mise(const GridFunction& estimate, const SyntheticTruth& truth);
double mise(const SlopeEstimate& estimate, const SyntheticTruth& truth);

std::string to_string(SyntheticModel model);
std::string to_string(ScoreDistribution dist);
SyntheticModel parse_model(const std::string& text);
ScoreDistribution parse_score_distribution(const std::string& text);

} // namespace tlflr
