#include "tlflr/regress.hpp"

#include "tlflr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace tlflr {

namespace {

constexpr double kDegenerateEigenvalue = 1e-12;
constexpr double kGramDiagonalTolerance = 1e-6;
constexpr double kRankTolerance = 1e-12;

void check_pooled_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& eigenvalues)
{
    const Eigen::Index m = gram.rows();
    const double scale = std::max(gram.diagonal().cwiseAbs().maxCoeff(), eigenvalues.head(m).maxCoeff());
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index k = 0; k < m; ++k) {
            const double expected = j == k ? eigenvalues(k) : 0.0;
            if (std::abs(gram(j, k) - expected) > kGramDiagonalTolerance * scale)
                throw InvariantViolation("pooled source Gram is not diag(eigenvalues) at (" + std::to_string(j) + ", "
                                         + std::to_string(k) + ")");
        }
    }
}

void check_eigenvalues(const Eigen::VectorXd& eigenvalues, std::size_t m, const char* where)
{
    for (std::size_t k = 0; k < m; ++k) {
        if (eigenvalues(static_cast<Eigen::Index>(k)) < kDegenerateEigenvalue)
            throw IllConditionedError(std::string(where) + ": eigenvalue " + std::to_string(k + 1)
                                      + " is degenerate, m = " + std::to_string(m) + " is too large");
    }
}

Eigen::VectorXd centered(const Eigen::VectorXd& y)
{
    return y.array() - y.mean();
}

// CD stops on step size, which leaves an error of order tol / (1 - contraction).
// Once the support and signs have settled, the optimum solves a linear system
// on the support; take that point when it is sign consistent and keeps the
// inactive coordinates optimal (together these certify the minimum).
void polish_on_support(LassoSolution& sol, const Eigen::MatrixXd& gram, const Eigen::VectorXd& corr, double tau,
                       double tol)
{
    std::vector<Eigen::Index> support;
    for (Eigen::Index k = 0; k < sol.delta.size(); ++k)
        if (sol.delta(k) != 0.0)
            support.push_back(k);
    if (support.empty())
        return;

    const auto a = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd q(a, a);
    Eigen::VectorXd rhs(a);
    for (Eigen::Index i = 0; i < a; ++i) {
        for (Eigen::Index j = 0; j < a; ++j)
            q(i, j) = gram(support[static_cast<std::size_t>(i)], support[static_cast<std::size_t>(j)]);
        const double d = sol.delta(support[static_cast<std::size_t>(i)]);
        rhs(i) = corr(support[static_cast<std::size_t>(i)]) - tau * (d > 0.0 ? 1.0 : -1.0);
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(q);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        return;
    const Eigen::VectorXd solved = ldlt.solve(rhs);
    if (!solved.allFinite())
        return;

    Eigen::VectorXd candidate = Eigen::VectorXd::Zero(sol.delta.size());
    for (Eigen::Index i = 0; i < a; ++i) {
        const Eigen::Index k = support[static_cast<std::size_t>(i)];
        if (solved(i) == 0.0 || (solved(i) > 0.0) != (sol.delta(k) > 0.0))
            return;
        candidate(k) = solved(i);
    }
    const Eigen::VectorXd candidate_gram = gram * candidate;
    for (Eigen::Index k = 0; k < candidate.size(); ++k)
        if (candidate(k) == 0.0 && std::abs(corr(k) - candidate_gram(k)) > tau + tol)
            return;

    sol.delta = candidate;
}

} // namespace

double soft_threshold(double z, double tau)
{
    if (z > tau)
        return z - tau;
    if (z < -tau)
        return z + tau;
    return 0.0;
}

double lasso_objective(const Eigen::MatrixXd& scores, const Eigen::VectorXd& partial_residual,
                       const Eigen::VectorXd& delta, double tau)
{
    const auto n = static_cast<double>(scores.rows());
    return (partial_residual - scores * delta).squaredNorm() / (2.0 * n) + tau * delta.lpNorm<1>();
}

double kkt_violation(const Eigen::MatrixXd& scores, const Eigen::VectorXd& partial_residual,
                     const Eigen::VectorXd& delta, double tau)
{
    const auto n = static_cast<double>(scores.rows());
    const Eigen::VectorXd grad = scores.transpose() * (partial_residual - scores * delta) / n;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < delta.size(); ++k) {
        const double v = delta(k) == 0.0 ? std::max(0.0, std::abs(grad(k)) - tau)
                                         : std::abs(grad(k) - tau * (delta(k) > 0.0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

LassoSolution lasso_cd(const Eigen::MatrixXd& scores, const Eigen::VectorXd& partial_residual, double tau, double tol,
                       std::size_t max_sweeps)
{
    if (scores.rows() != partial_residual.size())
        throw DimensionError("lasso_cd: " + std::to_string(scores.rows()) + " score rows for "
                             + std::to_string(partial_residual.size()) + " residuals");
    if (scores.rows() == 0)
        throw DomainError("lasso_cd: no observations");
    if (!scores.allFinite() || !partial_residual.allFinite() || !std::isfinite(tau) || !std::isfinite(tol))
        throw ValidationError("lasso_cd: non-finite input");
    if (tau < 0.0)
        throw DomainError("lasso_cd: tau must be nonnegative");

    const auto n = static_cast<double>(scores.rows());
    const Eigen::Index m = scores.cols();

    // Covariance-form updates: all sweeps work on the m x m Gram.
    const Eigen::MatrixXd gram = scores.transpose() * scores / n;
    const Eigen::VectorXd corr = scores.transpose() * partial_residual / n;
    const double base = partial_residual.squaredNorm() / (2.0 * n);

    if (tau == 0.0) {
        for (Eigen::Index k = 0; k < m; ++k) {
            if (gram(k, k) == 0.0)
                throw IllConditionedError("lasso_cd: zero score column " + std::to_string(k) + " with tau = 0");
        }
        if (m > 0) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> spectrum(gram, Eigen::EigenvaluesOnly);
            const double top = spectrum.eigenvalues()(m - 1);
            if (spectrum.eigenvalues()(0) <= kRankTolerance * top)
                throw IllConditionedError("lasso_cd: rank-deficient scores with tau = 0");
        }
    }

    LassoSolution sol;
    sol.delta = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd gram_delta = Eigen::VectorXd::Zero(m);

    auto objective = [&] {
        return base - corr.dot(sol.delta) + 0.5 * sol.delta.dot(gram_delta) + tau * sol.delta.lpNorm<1>();
    };

    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index k = 0; k < m; ++k) {
            const double qkk = gram(k, k);
            const double old = sol.delta(k);
            double updated = 0.0;
            if (qkk > 0.0) {
                const double z = corr(k) - gram_delta(k) + qkk * old;
                updated = soft_threshold(z, tau) / qkk;
            }
            const double change = updated - old;
            if (change != 0.0) {
                sol.delta(k) = updated;
                gram_delta.noalias() += change * gram.col(k);
                max_change = std::max(max_change, std::abs(change));
            }
        }
        sol.objective_trace.push_back(objective());
        sol.iterations = sweep + 1;
        if (max_change <= tol) {
            sol.converged = true;
            break;
        }
    }
    if (sol.converged)
        polish_on_support(sol, gram, corr, tau, tol);
    return sol;
}

LassoSolution lasso_cd(const ScoreMatrix& scores, const Eigen::VectorXd& partial_residual, double tau, double tol,
                       std::size_t max_sweeps)
{
    return lasso_cd(scores.scores, partial_residual, tau, tol, max_sweeps);
}

Eigen::VectorXd fit_initial(std::span<const ScoreMatrix> source_scores, std::span<const Eigen::VectorXd> source_responses)
{
    if (source_scores.empty())
        throw DomainError("fit_initial: no sources");
    if (source_scores.size() != source_responses.size())
        throw DimensionError("fit_initial: one response vector per score matrix required");

    const auto& basis = source_scores.front().basis;
    const Eigen::Index m = source_scores.front().scores.cols();
    double total = 0.0;
    for (std::size_t l = 0; l < source_scores.size(); ++l) {
        const auto& s = source_scores[l];
        if (s.basis != basis || s.scores.cols() != m)
            throw DimensionError("fit_initial: score matrices use different bases");
        if (s.scores.rows() != source_responses[l].size())
            throw DimensionError("fit_initial: response count does not match score rows");
        if (s.scores.rows() < 2)
            throw DomainError("fit_initial: each source needs at least 2 observations");
        total += static_cast<double>(s.scores.rows());
    }
    if (!basis)
        throw DomainError("fit_initial: null basis");

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd numerator = Eigen::VectorXd::Zero(m);
    for (std::size_t l = 0; l < source_scores.size(); ++l) {
        const auto& xi = source_scores[l].scores;
        const auto nl = static_cast<double>(xi.rows());
        const double weight = (nl / total) / (nl - 1.0);
        gram.noalias() += weight * xi.transpose() * xi;
        numerator.noalias() += weight * xi.transpose() * centered(source_responses[l]);
    }

    for (Eigen::Index k = 0; k < m; ++k) {
        if (gram(k, k) < kDegenerateEigenvalue)
            throw IllConditionedError("fit_initial: pooled Gram diagonal entry " + std::to_string(k + 1)
                                      + " is degenerate, m = " + std::to_string(m) + " is too large");
    }
    const Eigen::VectorXd lambda = basis->eigenvalues().head(m);
    check_pooled_gram(gram, lambda);
    check_eigenvalues(lambda, static_cast<std::size_t>(m), "fit_initial");
    return numerator.cwiseQuotient(lambda);
}

GridFunction assemble_slope(const EigenSystem& basis, const Eigen::VectorXd& coefficients)
{
    if (static_cast<std::size_t>(coefficients.size()) > basis.size())
        throw DimensionError("assemble_slope: more coefficients than basis functions");
    return {basis.grid(), basis.eigenfunctions().leftCols(coefficients.size()) * coefficients};
}

SlopeEstimate fit_tlflr_with_basis(const FunctionalDataset& target, std::span<const FunctionalDataset> sources,
                                   std::shared_ptr<const EigenSystem> basis, std::size_t m, double tau,
                                   const LassoOptions& options)
{
    if (sources.empty())
        throw DomainError("fit_tlflr: no sources");
    if (!basis)
        throw DomainError("fit_tlflr: null basis");
    if (m == 0)
        throw DomainError("fit_tlflr: m must be at least 1");

    std::vector<ScoreMatrix> scores;
    std::vector<Eigen::VectorXd> responses;
    scores.reserve(sources.size());
    for (const auto& s : sources) {
        scores.push_back(compute_scores(s, basis, m));
        responses.push_back(s.responses());
    }
    const Eigen::VectorXd w = fit_initial(scores, responses);

    const ScoreMatrix target_scores = compute_scores(target, basis, m);
    const Eigen::VectorXd residual = centered(target.responses()) - target_scores.scores * w;
    const LassoSolution correction = lasso_cd(target_scores, residual, tau, options.tol, options.max_sweeps);

    Eigen::VectorXd b = w + correction.delta;
    GridFunction slope = assemble_slope(*basis, b);
    return {std::move(b), std::move(basis), std::move(slope), target.responses().mean(), target_scores.center, m, tau};
}

SlopeEstimate fit_tlflr(const FunctionalDataset& target, std::span<const FunctionalDataset> sources, std::size_t m,
                        double tau, const LassoOptions& options)
{
    if (sources.empty())
        throw DomainError("fit_tlflr: no sources");
    for (const auto& s : sources) {
        if (!(s.grid() == target.grid()))
            throw DimensionError("fit_tlflr: source and target grids differ");
    }
    auto basis = std::make_shared<const EigenSystem>(eigendecompose(pooled_covariance(sources), m));
    return fit_tlflr_with_basis(target, sources, std::move(basis), m, tau, options);
}

SlopeEstimate fit_flr(const FunctionalDataset& target, std::size_t m)
{
    const std::size_t n = target.size();
    if (n < 2)
        throw DomainError("fit_flr: need at least 2 observations");
    if (m == 0)
        throw DomainError("fit_flr: m must be at least 1");

    auto basis = std::make_shared<const EigenSystem>(eigendecompose(covariance_estimate(target), m));
    check_eigenvalues(basis->eigenvalues(), m, "fit_flr");

    GridFunction mean = mean_function(target);
    const Eigen::VectorXd yc = centered(target.responses());
    // g(t) = (n-1)^{-1} sum_i (X_i(t) - Xbar(t)) (Y_i - Ybar)
    const Eigen::VectorXd cross
        = (target.curves().rowwise() - mean.values().transpose()).transpose() * yc / static_cast<double>(n - 1);
    const Eigen::VectorXd projected
        = basis->eigenfunctions().transpose() * target.grid().weights().cwiseProduct(cross);
    Eigen::VectorXd b = projected.cwiseQuotient(basis->eigenvalues());

    GridFunction slope = assemble_slope(*basis, b);
    return {std::move(b), std::move(basis), std::move(slope), target.responses().mean(), std::move(mean), m, 0.0};
}

double predict(const SlopeEstimate& estimate, const GridFunction& curve)
{
    if (!(curve.grid() == estimate.slope_curve.grid()))
        throw DimensionError("predict: curve and slope are on different grids");
    const Eigen::VectorXd diff = curve.values() - estimate.curve_mean.values();
    return estimate.response_mean + diff.cwiseProduct(estimate.slope_curve.values()).dot(curve.grid().weights());
}

Eigen::VectorXd predict(const SlopeEstimate& estimate, const FunctionalDataset& data)
{
    if (!(data.grid() == estimate.slope_curve.grid()))
        throw DimensionError("predict: data and slope are on different grids");
    const Eigen::VectorXd weighted_slope = data.grid().weights().cwiseProduct(estimate.slope_curve.values());
    const Eigen::VectorXd offset = estimate.curve_mean.values();
    return ((data.curves().rowwise() - offset.transpose()) * weighted_slope).array() + estimate.response_mean;
}

SourceMoments source_moments(const FunctionalDataset& source)
{
    CovMatrix cov = covariance_estimate(source);
    const Eigen::RowVectorXd mean = source.curves().colwise().mean();
    Eigen::VectorXd cross = (source.curves().rowwise() - mean).transpose() * centered(source.responses());
    return {source.size(), std::move(cov), std::move(cross)};
}

TransferModel TransferModel::prepare(std::span<const SourceMoments* const> sources, std::size_t max_m)
{
    if (sources.empty())
        throw DomainError("TransferModel: no sources");
    std::vector<const CovMatrix*> covs;
    std::vector<std::size_t> sizes;
    for (const auto* s : sources) {
        if (s->n < 2)
            throw DomainError("TransferModel: each source needs at least 2 observations");
        covs.push_back(&s->cov);
        sizes.push_back(s->n);
    }
    const CovMatrix pooled = pool_covariances(covs, sizes);
    auto basis = std::make_shared<const EigenSystem>(eigendecompose(pooled, max_m));

    const Eigen::VectorXd w = pooled.grid.weights();
    const Eigen::MatrixXd weighted = w.asDiagonal() * basis->eigenfunctions();
    Eigen::VectorXd numerator = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(max_m));
    for (std::size_t l = 0; l < sources.size(); ++l) {
        const double nl = static_cast<double>(sources[l]->n);
        numerator.noalias() += pooled.source_weights[l] / (nl - 1.0) * (weighted.transpose() * sources[l]->cross);
    }

    const Eigen::MatrixXd gram = weighted.transpose() * pooled.entries * weighted;
    check_pooled_gram(gram, basis->eigenvalues());
    return {std::move(basis), std::move(numerator)};
}

TransferModel TransferModel::prepare(std::span<const FunctionalDataset> sources, std::size_t max_m)
{
    std::vector<SourceMoments> moments;
    std::vector<const SourceMoments*> ptrs;
    moments.reserve(sources.size());
    for (const auto& s : sources)
        moments.push_back(source_moments(s));
    for (const auto& mo : moments)
        ptrs.push_back(&mo);
    return prepare(ptrs, max_m);
}

Eigen::VectorXd TransferModel::initial(std::size_t m) const
{
    if (m == 0 || m > max_m())
        throw DomainError("TransferModel: m must lie in [1, prepared truncation]");
    check_eigenvalues(basis_->eigenvalues(), m, "fit_initial");
    const auto mm = static_cast<Eigen::Index>(m);
    return numerator_.head(mm).cwiseQuotient(basis_->eigenvalues().head(mm));
}

SlopeEstimate TransferModel::fit(const FunctionalDataset& target, std::size_t m, double tau,
                                 const LassoOptions& options) const
{
    if (!(target.grid() == basis_->grid()))
        throw DimensionError("TransferModel::fit: target grid differs from source grid");
    const Eigen::VectorXd w = initial(m);
    GridFunction mean = mean_function(target);
    const Eigen::MatrixXd scores = project_centered(target.curves(), mean.values(), *basis_, m);
    const Eigen::VectorXd residual = centered(target.responses()) - scores * w;
    const LassoSolution correction = lasso_cd(scores, residual, tau, options.tol, options.max_sweeps);

    Eigen::VectorXd b = w + correction.delta;
    GridFunction slope = assemble_slope(*basis_, b);
    return {std::move(b), basis_, std::move(slope), target.responses().mean(), std::move(mean), m, tau};
}

} // namespace tlflr
