#pragma once

// K-fold cross-validation over (m, tau) and the seeding contract shared by
// every randomized component.

#include "tlflr/funcore.hpp"
#include "tlflr/regress.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace tlflr {

using Rng = std::mt19937_64;

/// Deterministic sub-seed: splitmix64 folded over (master, path...).
/// Used so that every random stream is a pure function of its coordinates.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

enum class Estimator { tlflr, flr };

struct CVConfig {
    std::size_t folds = 5;
    // Empty grids are replaced by the defaults in resolved().
    std::vector<std::size_t> m_grid;
    std::vector<double> tau_grid;
    std::uint64_t seed = 0;

    /// Default grids: m in 1..min(20, n-2, G-1); tau = c / sqrt(n) for
    /// c in {0, 0.25, 0.5, 1, 2, 4}.
    CVConfig resolved(std::size_t n, std::size_t grid_size) const;

    /// Throws ConfigError unless folds >= 2, grids nonempty, m >= 1, tau
    /// sorted ascending, nonnegative and containing 0.
    void validate() const;
};

struct CVReport {
    std::vector<std::size_t> m_grid;
    std::vector<double> tau_grid;
    Eigen::MatrixXd risks; // rows follow m_grid, columns tau_grid; +inf when infeasible
    std::size_t best_m = 0;
    double best_tau = 0.0;
};

/// Fold id in [0, folds) for each of n observations.
std::vector<std::size_t> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

/// Held-out squared prediction error averaged over folds. Only target rows
/// are folded; sources join every training split.
CVReport cross_validate(const FunctionalDataset& target, std::span<const FunctionalDataset> sources,
                        const CVConfig& config, Estimator estimator);

/// Transfer-estimator cross-validation on an already prepared source side.
CVReport cross_validate(const FunctionalDataset& target, const TransferModel& model, const CVConfig& config);

/// Cross-validate, then refit on the whole target at the selected (m, tau).
SlopeEstimate fit_tuned(const FunctionalDataset& target, std::span<const FunctionalDataset> sources,
                        const CVConfig& config, Estimator estimator);

SlopeEstimate fit_tuned(const FunctionalDataset& target, const TransferModel& model, const CVConfig& config);

} // namespace tlflr
