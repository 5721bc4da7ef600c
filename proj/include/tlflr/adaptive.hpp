#pragma once

// Adaptive transfer: rank sources by how far their cross-covariance with the
// response sits from the target's, fit one candidate per nested source set,
// and aggregate the candidates on held-out target data.

#include "tlflr/funcore.hpp"
#include "tlflr/modelsel.hpp"
#include "tlflr/regress.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace tlflr {

/// Random partition of the target rows into a fitting half and an
/// aggregation half.
struct SplitSpec {
    std::vector<std::size_t> first;  // candidate construction
    std::vector<std::size_t> second; // aggregation
    std::uint64_t seed = 0;
};

/// |first| = ceil(n * fraction), kept within [1, n - 1].
SplitSpec make_split(std::size_t n, double fraction, std::uint64_t seed);

struct CandidateSets {
    std::vector<double> zeta;
    // sets[l] holds the l sources with the smallest zeta (0-based indices);
    // sets[0] is empty.
    std::vector<std::vector<std::size_t>> sets;
};

struct AggregationChoice {
    std::size_t first = 0;  // empirical risk minimizer
    std::size_t second = 0; // partner in the convex combination
    double lambda = 1.0;    // weight on `first`
};

struct AggregationResult {
    AggregationChoice chosen;
    SlopeEstimate aggregate;
    std::vector<double> empirical_risks; // one per candidate
    double aggregate_risk = 0.0;
};

struct QAggWeights {
    Eigen::VectorXd rho;
    double temperature = 1.0;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Squared L2 distance between the empirical cross-moment curves
/// n_l^{-1} sum X_i (Y_i - Ybar) of a source and of the target half.
/// Curves enter uncentered, responses centered.
double zeta_statistic(const FunctionalDataset& source, const FunctionalDataset& target_first);

/// Nested sets by ascending zeta; ties keep the lower source index first.
CandidateSets build_candidate_sets(std::span<const double> zeta);

/// R(b) = mean over the held-out rows of (Y - Ybar - <b, X - Xbar>)^2 with
/// means taken over those same rows.
double empirical_risk(const GridFunction& slope, const FunctionalDataset& target_second);

AggregationResult sparse_aggregate(std::span<const SlopeEstimate> candidates, const FunctionalDataset& target_second);

/// Q-aggregation objective at weights rho (0 log 0 taken as 0).
double q_objective(std::span<const SlopeEstimate> candidates, const FunctionalDataset& target_second,
                   const Eigen::VectorXd& rho, double temperature);

/// Minimizes the Q-aggregation objective over the simplex by exponentiated
/// gradient with backtracking. Non-convergence is reported in the result.
QAggWeights q_aggregate(std::span<const SlopeEstimate> candidates, const FunctionalDataset& target_second,
                        double temperature, double tol = 1e-8, std::size_t max_iterations = 50000);

/// Convex combination sum_l rho_l b_l as an estimate.
SlopeEstimate combine(std::span<const SlopeEstimate> candidates, const Eigen::VectorXd& weights);

enum class Aggregation { sparse, q };

struct AdaptiveConfig {
    double split_fraction = 0.5;
    std::uint64_t seed = 0;
    CVConfig cv{};
    // Re-tune (m, tau) per candidate by cross-validation on the fitting half;
    // otherwise every candidate uses shared_m / shared_tau.
    bool retune_per_candidate = true;
    std::size_t shared_m = 5;
    double shared_tau = 0.0;
    Aggregation aggregation = Aggregation::sparse;
    double temperature = 1.0;
};

struct AdaptiveFit {
    SplitSpec split;
    CandidateSets candidates;
    std::vector<SlopeEstimate> estimates; // candidate l fitted on the first half plus sets[l]
    AggregationResult aggregation;
    std::optional<QAggWeights> q_weights;
    // The estimate to use: the sparse aggregate (or the Q aggregate when
    // requested), re-centered on the whole target sample.
    SlopeEstimate estimate;
};

AdaptiveFit adaptive_fit(const FunctionalDataset& target, std::span<const FunctionalDataset> sources,
                         const AdaptiveConfig& config);

} // namespace tlflr
