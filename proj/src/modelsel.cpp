#include "tlflr/modelsel.hpp"

#include "tlflr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace tlflr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct FoldSplit {
    FunctionalDataset train;
    FunctionalDataset test;
};

std::vector<FoldSplit> split_folds(const FunctionalDataset& target, const CVConfig& config)
{
    const auto assignment = make_folds(target.size(), config.folds, config.seed);
    std::vector<FoldSplit> out;
    out.reserve(config.folds);
    for (std::size_t f = 0; f < config.folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            (assignment[i] == f ? test : train).push_back(i);
        out.push_back({target.subset(train), target.subset(test)});
    }
    return out;
}

// Held-out MSE of slope coefficients `b` in the first b.size() columns of
// `phi`, centered by the training means.
double held_out_error(const FunctionalDataset& train, const FunctionalDataset& test, const Eigen::MatrixXd& weighted_phi,
                      const Eigen::VectorXd& b)
{
    const Eigen::RowVectorXd xbar = train.curves().colwise().mean();
    const double ybar = train.responses().mean();
    const Eigen::VectorXd pred
        = ((test.curves().rowwise() - xbar) * (weighted_phi.leftCols(b.size()) * b)).array() + ybar;
    const double mse = (test.responses() - pred).squaredNorm() / static_cast<double>(test.size());
    return std::isfinite(mse) ? mse : kInf;
}

void select_best(CVReport& report)
{
    double best = kInf;
    bool found = false;
    for (std::size_t i = 0; i < report.m_grid.size(); ++i) {
        for (std::size_t j = 0; j < report.tau_grid.size(); ++j) {
            const double r = report.risks(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (r < best) {
                best = r;
                report.best_m = report.m_grid[i];
                report.best_tau = report.tau_grid[j];
                found = true;
            }
        }
    }
    if (!found)
        throw DomainError("cross_validate: every (m, tau) configuration is infeasible");
}

CVReport empty_report(const CVConfig& config)
{
    CVReport report;
    report.m_grid = config.m_grid;
    report.tau_grid = config.tau_grid;
    report.risks = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(config.m_grid.size()),
                                         static_cast<Eigen::Index>(config.tau_grid.size()));
    return report;
}

CVConfig prepared_config(const CVConfig& config, const FunctionalDataset& target)
{
    CVConfig cfg = config.resolved(target.size(), target.grid().size());
    cfg.validate();
    if (cfg.folds > target.size())
        throw ConfigError("cross_validate: more folds than target observations");
    return cfg;
}

CVReport cross_validate_flr(const FunctionalDataset& target, const CVConfig& cfg)
{
    CVReport report = empty_report(cfg);
    const Eigen::VectorXd w = target.grid().weights();
    const std::size_t max_m = cfg.m_grid.back();

    for (const auto& fold : split_folds(target, cfg)) {
        Eigen::VectorXd fold_risk = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(cfg.m_grid.size()), kInf);
        if (fold.train.size() >= 2 && max_m <= target.grid().size()) {
            const EigenSystem basis = eigendecompose(covariance_estimate(fold.train), max_m);
            const Eigen::MatrixXd weighted_phi = w.asDiagonal() * basis.eigenfunctions();
            const Eigen::RowVectorXd xbar = fold.train.curves().colwise().mean();
            const Eigen::VectorXd yc = fold.train.responses().array() - fold.train.responses().mean();
            const Eigen::VectorXd projected = weighted_phi.transpose()
                                              * ((fold.train.curves().rowwise() - xbar).transpose() * yc)
                                              / static_cast<double>(fold.train.size() - 1);
            for (std::size_t i = 0; i < cfg.m_grid.size(); ++i) {
                const auto m = static_cast<Eigen::Index>(cfg.m_grid[i]);
                if (basis.eigenvalues()(m - 1) < 1e-12)
                    continue;
                const Eigen::VectorXd b = projected.head(m).cwiseQuotient(basis.eigenvalues().head(m));
                fold_risk(static_cast<Eigen::Index>(i)) = held_out_error(fold.train, fold.test, weighted_phi, b);
            }
        }
        // FLR has no tau: every column carries the same risk.
        report.risks.colwise() += fold_risk;
    }
    report.risks /= static_cast<double>(cfg.folds);
    select_best(report);
    return report;
}

} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t s = splitmix64(master);
    for (auto p : path)
        s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

CVConfig CVConfig::resolved(std::size_t n, std::size_t grid_size) const
{
    CVConfig out = *this;
    if (out.m_grid.empty()) {
        const std::size_t cap_n = n > 3 ? n - 2 : 1;
        const std::size_t upper = std::max<std::size_t>(1, std::min({std::size_t{20}, cap_n, grid_size - 1}));
        out.m_grid.resize(upper);
        std::iota(out.m_grid.begin(), out.m_grid.end(), std::size_t{1});
    }
    if (out.tau_grid.empty()) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(n, 1)));
        for (double c : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0})
            out.tau_grid.push_back(c * scale);
    }
    std::sort(out.m_grid.begin(), out.m_grid.end());
    out.m_grid.erase(std::unique(out.m_grid.begin(), out.m_grid.end()), out.m_grid.end());
    return out;
}

void CVConfig::validate() const
{
    if (folds < 2)
        throw ConfigError("CVConfig: need at least 2 folds");
    if (m_grid.empty() || tau_grid.empty())
        throw ConfigError("CVConfig: empty tuning grid");
    if (std::any_of(m_grid.begin(), m_grid.end(), [](std::size_t m) { return m == 0; }))
        throw ConfigError("CVConfig: m must be at least 1");
    if (!std::is_sorted(tau_grid.begin(), tau_grid.end()))
        throw ConfigError("CVConfig: tau grid must be sorted ascending");
    if (tau_grid.front() != 0.0)
        throw ConfigError("CVConfig: tau grid must start at 0");
    if (std::any_of(tau_grid.begin(), tau_grid.end(), [](double t) { return !std::isfinite(t); }))
        throw ConfigError("CVConfig: non-finite tau");
}

std::vector<std::size_t> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed)
{
    if (folds == 0 || folds > n)
        throw DomainError("make_folds: need 1 <= folds <= n");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> assignment(n);
    for (std::size_t i = 0; i < n; ++i)
        assignment[order[i]] = i % folds;
    return assignment;
}

CVReport cross_validate(const FunctionalDataset& target, const TransferModel& model, const CVConfig& config)
{
    const CVConfig cfg = prepared_config(config, target);
    if (cfg.m_grid.back() > model.max_m())
        throw ConfigError("cross_validate: m grid exceeds the prepared truncation level");
    if (!(target.grid() == model.basis()->grid()))
        throw DimensionError("cross_validate: target and sources are on different grids");

    CVReport report = empty_report(cfg);
    const Eigen::MatrixXd weighted_phi = target.grid().weights().asDiagonal() * model.basis()->eigenfunctions();

    // Initial estimates do not depend on the fold.
    std::vector<std::optional<Eigen::VectorXd>> initial(cfg.m_grid.size());
    for (std::size_t i = 0; i < cfg.m_grid.size(); ++i) {
        try {
            initial[i] = model.initial(cfg.m_grid[i]);
        } catch (const IllConditionedError&) {
        }
    }

    for (const auto& fold : split_folds(target, cfg)) {
        const Eigen::RowVectorXd xbar = fold.train.curves().colwise().mean();
        const Eigen::MatrixXd all_scores = (fold.train.curves().rowwise() - xbar) * weighted_phi;
        const Eigen::VectorXd yc = fold.train.responses().array() - fold.train.responses().mean();

        for (std::size_t i = 0; i < cfg.m_grid.size(); ++i) {
            const auto mi = static_cast<Eigen::Index>(i);
            if (!initial[i]) {
                report.risks.row(mi).array() += kInf;
                continue;
            }
            const Eigen::VectorXd& w = *initial[i];
            const Eigen::MatrixXd scores = all_scores.leftCols(w.size());
            const Eigen::VectorXd residual = yc - scores * w;
            for (std::size_t j = 0; j < cfg.tau_grid.size(); ++j) {
                const auto tj = static_cast<Eigen::Index>(j);
                try {
                    const LassoSolution sol = lasso_cd(scores, residual, cfg.tau_grid[j]);
                    report.risks(mi, tj) += held_out_error(fold.train, fold.test, weighted_phi, w + sol.delta);
                } catch (const IllConditionedError&) {
                    report.risks(mi, tj) = kInf;
                }
            }
        }
    }
    report.risks /= static_cast<double>(cfg.folds);
    select_best(report);
    return report;
}

CVReport cross_validate(const FunctionalDataset& target, std::span<const FunctionalDataset> sources,
                        const CVConfig& config, Estimator estimator)
{
    const CVConfig cfg = prepared_config(config, target);
    if (estimator == Estimator::flr)
        return cross_validate_flr(target, cfg);
    if (sources.empty())
        throw DomainError("cross_validate: the transfer estimator needs sources");
    if (cfg.m_grid.back() > target.grid().size())
        throw ConfigError("cross_validate: m grid exceeds the grid size");
    const TransferModel model = TransferModel::prepare(sources, cfg.m_grid.back());
    return cross_validate(target, model, cfg);
}

SlopeEstimate fit_tuned(const FunctionalDataset& target, std::span<const FunctionalDataset> sources,
                        const CVConfig& config, Estimator estimator)
{
    if (estimator == Estimator::flr) {
        const CVReport report = cross_validate(target, sources, config, estimator);
        return fit_flr(target, report.best_m);
    }
    const CVConfig cfg = prepared_config(config, target);
    if (sources.empty())
        throw DomainError("fit_tuned: the transfer estimator needs sources");
    const TransferModel model = TransferModel::prepare(sources, cfg.m_grid.back());
    return fit_tuned(target, model, cfg);
}

SlopeEstimate fit_tuned(const FunctionalDataset& target, const TransferModel& model, const CVConfig& config)
{
    const CVReport report = cross_validate(target, model, config);
    return model.fit(target, report.best_m, report.best_tau);
}

} // namespace tlflr
