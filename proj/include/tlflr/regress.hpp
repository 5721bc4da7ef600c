#pragma once

// Two-step transfer estimator (pooled-source initial fit, lasso bias
// correction on the target), the target-only FPCA baseline, and prediction.

#include "tlflr/funcore.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace tlflr {

struct SlopeEstimate {
    // Coefficients in `basis`; both are empty for estimates that are not a
    // single basis expansion (aggregates).
    Eigen::VectorXd coefficients;
    std::shared_ptr<const EigenSystem> basis;
    GridFunction slope_curve;

    // Target means re-added at prediction time.
    double response_mean = 0.0;
    GridFunction curve_mean;

    std::size_t m = 0;
    double tau = 0.0;
};

struct LassoOptions {
    double tol = 1e-8;
    std::size_t max_sweeps = 10000;
};

struct LassoSolution {
    Eigen::VectorXd delta;
    std::vector<double> objective_trace;
    std::size_t iterations = 0;
    bool converged = false;
};

double soft_threshold(double z, double tau);

/// Minimizes (1/2n)||r - S d||^2 + tau ||d||_1 by cyclic coordinate descent.
///
/// `partial_residual` is Y - Ybar - S w, computed by the caller. Coordinates
/// are visited in order 0..m-1 with exact minimization; iteration stops once
/// the largest coordinate change in a sweep is at most `tol`, after which the
/// point is refined by an exact solve on the detected support when that solve
/// passes the optimality check. With tau = 0 a rank-deficient design is
/// rejected as ill-conditioned.
LassoSolution lasso_cd(const Eigen::MatrixXd& scores, const Eigen::VectorXd& partial_residual, double tau,
                       double tol = 1e-8, std::size_t max_sweeps = 10000);

LassoSolution lasso_cd(const ScoreMatrix& scores, const Eigen::VectorXd& partial_residual, double tau,
                       double tol = 1e-8, std::size_t max_sweeps = 10000);

double lasso_objective(const Eigen::MatrixXd& scores, const Eigen::VectorXd& partial_residual,
                       const Eigen::VectorXd& delta, double tau);

/// Largest deviation from the lasso optimality conditions:
/// |g_k| <= tau where delta_k = 0, g_k = tau sign(delta_k) elsewhere,
/// with g = S^T (r - S delta) / n.
double kkt_violation(const Eigen::MatrixXd& scores, const Eigen::VectorXd& partial_residual,
                     const Eigen::VectorXd& delta, double tau);

/// Step 1: least squares on the pooled sources, solved through the diagonal
/// pooled Gram matrix. Diagonality is verified before dividing.
Eigen::VectorXd fit_initial(std::span<const ScoreMatrix> source_scores,
                            std::span<const Eigen::VectorXd> source_responses);

SlopeEstimate fit_tlflr(const FunctionalDataset& target, std::span<const FunctionalDataset> sources, std::size_t m,
                        double tau, const LassoOptions& options = {});

/// The transfer fit on a caller-supplied basis (the pooled FPCA is skipped).
SlopeEstimate fit_tlflr_with_basis(const FunctionalDataset& target, std::span<const FunctionalDataset> sources,
                                   std::shared_ptr<const EigenSystem> basis, std::size_t m, double tau,
                                   const LassoOptions& options = {});

/// Target-only FPCA estimator: b_k = <g, phi_k> / lambda_k.
SlopeEstimate fit_flr(const FunctionalDataset& target, std::size_t m);

double predict(const SlopeEstimate& estimate, const GridFunction& curve);

/// Predictions for every curve of a dataset.
Eigen::VectorXd predict(const SlopeEstimate& estimate, const FunctionalDataset& data);

GridFunction assemble_slope(const EigenSystem& basis, const Eigen::VectorXd& coefficients);

// Sufficient statistics of one source population. Everything the source side
// of the transfer fit needs can be computed from these, which lets repeated
// fits (cross-validation folds, candidate source sets) share the work.
struct SourceMoments {
    std::size_t n = 0;
    CovMatrix cov;
    Eigen::VectorXd cross; // sum_i (X_i - Xbar)(Y_i - Ybar), unnormalized
};

SourceMoments source_moments(const FunctionalDataset& source);

/// Source side of the transfer fit, prepared once for truncation levels up
/// to `max_m` and reused for any target sample.
class TransferModel {
public:
    static TransferModel prepare(std::span<const SourceMoments* const> sources, std::size_t max_m);
    static TransferModel prepare(std::span<const FunctionalDataset> sources, std::size_t max_m);

    const std::shared_ptr<const EigenSystem>& basis() const noexcept { return basis_; }
    std::size_t max_m() const noexcept { return basis_->size(); }

    /// Initial estimate restricted to the first m coordinates; throws
    /// IllConditionedError when the m-th pooled eigenvalue is degenerate.
    Eigen::VectorXd initial(std::size_t m) const;

    SlopeEstimate fit(const FunctionalDataset& target, std::size_t m, double tau,
                      const LassoOptions& options = {}) const;

private:
    TransferModel(std::shared_ptr<const EigenSystem> basis, Eigen::VectorXd numerator)
        : basis_(std::move(basis)), numerator_(std::move(numerator))
    {}

    std::shared_ptr<const EigenSystem> basis_;
    Eigen::VectorXd numerator_;
};

} // namespace tlflr
