#pragma once

// Grid-discretized functional data: quadrature, mean and covariance
// estimation, pooled covariance, functional PCA and score projection.

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tlflr {

/// G equally spaced points on [0, 1], both endpoints included.
class Grid {
public:
    Grid() = default;
    explicit Grid(std::size_t size);

    std::size_t size() const noexcept { return size_; }
    double step() const noexcept { return 1.0 / static_cast<double>(size_ - 1); }
    double point(std::size_t i) const noexcept { return static_cast<double>(i) * step(); }
    Eigen::VectorXd points() const;

    /// Composite trapezoid weights: step inside, step/2 at the two ends.
    Eigen::VectorXd weights() const;

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t size_ = 2;
};

class GridFunction {
public:
    GridFunction() : values_(Eigen::VectorXd::Zero(2)) {}
    GridFunction(Grid grid, Eigen::VectorXd values);

    static GridFunction zero(Grid grid) { return {grid, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()))}; }

    const Grid& grid() const noexcept { return grid_; }
    const Eigen::VectorXd& values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_(static_cast<Eigen::Index>(i)); }

    /// Linear interpolation at an arbitrary t in [0, 1].
    double at(double t) const;

    /// Piecewise-linear resampling onto another grid.
    GridFunction resample(const Grid& target) const;

private:
    Grid grid_;
    Eigen::VectorXd values_;
};

/// n curves on a shared grid plus their scalar responses.
class FunctionalDataset {
public:
    FunctionalDataset(Grid grid, Eigen::MatrixXd curves, Eigen::VectorXd responses, std::string label = {});

    const Grid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(curves_.rows()); }
    const std::string& label() const noexcept { return label_; }

    /// Row i holds curve i sampled on the grid.
    const Eigen::MatrixXd& curves() const noexcept { return curves_; }
    const Eigen::VectorXd& responses() const noexcept { return responses_; }

    GridFunction curve(std::size_t i) const;
    double response(std::size_t i) const { return responses_(static_cast<Eigen::Index>(i)); }

    FunctionalDataset subset(std::span<const std::size_t> rows, std::string label = {}) const;
    FunctionalDataset relabeled(std::string label) const;

private:
    Grid grid_;
    Eigen::MatrixXd curves_;
    Eigen::VectorXd responses_;
    std::string label_;
};

/// Discretized covariance kernel K(s_i, t_j).
struct CovMatrix {
    Grid grid;
    Eigen::MatrixXd entries;
    // Filled when the kernel is a pooled estimate: pi_l = n_l / N.
    std::vector<double> source_weights{};

    double asymmetry() const;
};

/// Leading eigenpairs of a covariance operator under trapezoid quadrature.
class EigenSystem {
public:
    EigenSystem(Grid grid, Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenfunctions,
                std::vector<double> source_weights = {});

    const Grid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(eigenvalues_.size()); }
    const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
    /// Column k is eigenfunction k on the grid.
    const Eigen::MatrixXd& eigenfunctions() const noexcept { return eigenfunctions_; }
    const std::vector<double>& source_weights() const noexcept { return source_weights_; }

    GridFunction eigenfunction(std::size_t k) const;

    /// First m eigenpairs.
    EigenSystem truncated(std::size_t m) const;

private:
    Grid grid_;
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd eigenfunctions_;
    std::vector<double> source_weights_;
};

/// Projection scores of centered curves onto a basis.
struct ScoreMatrix {
    Eigen::MatrixXd scores; // n x m
    GridFunction center;
    std::shared_ptr<const EigenSystem> basis;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(scores.rows()); }
    std::size_t cols() const noexcept { return static_cast<std::size_t>(scores.cols()); }
};

double inner_product(const GridFunction& f, const GridFunction& g);

GridFunction mean_function(const FunctionalDataset& data);

/// Sample covariance with divisor n - 1.
CovMatrix covariance_estimate(const FunctionalDataset& data);

/// Size-weighted average of per-source covariances.
CovMatrix pooled_covariance(std::span<const FunctionalDataset> sources);

/// Same pooling from covariances that were already estimated.
CovMatrix pool_covariances(std::span<const CovMatrix* const> covariances, std::span<const std::size_t> sizes);

/// Top-m eigenpairs of the quadrature-weighted kernel operator.
///
/// The kernel is symmetrized as W^{1/2} K W^{1/2} with W the trapezoid
/// weights, so the returned eigenfunctions are orthonormal under the same
/// quadrature used by inner_product. Negative eigenvalues are clamped to 0
/// and each eigenfunction is signed so that its largest-magnitude entry is
/// positive (first such entry on ties).
EigenSystem eigendecompose(const CovMatrix& cov, std::size_t m);

/// scores(i, k) = <X_i - mean, phi_k>, each dataset centered by its own mean.
ScoreMatrix compute_scores(const FunctionalDataset& data, std::shared_ptr<const EigenSystem> basis, std::size_t m);

/// Curves centered by a given mean, projected onto the first m eigenfunctions.
Eigen::MatrixXd project_centered(const Eigen::MatrixXd& curves, const Eigen::VectorXd& center,
                                 const EigenSystem& basis, std::size_t m);

} // namespace tlflr
