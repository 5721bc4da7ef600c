#include "tlflr/adaptive.hpp"

#include "tlflr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tlflr {

namespace {

constexpr double kDegenerateCurvature = 1e-14;
constexpr double kDominanceSlack = 1e-10;

// Column l: <X_i - Xbar_2, b_l> for every held-out row i.
Eigen::MatrixXd candidate_predictions(std::span<const SlopeEstimate> candidates, const FunctionalDataset& held_out)
{
    const Eigen::RowVectorXd xbar = held_out.curves().colwise().mean();
    const Eigen::VectorXd w = held_out.grid().weights();
    Eigen::MatrixXd slopes(static_cast<Eigen::Index>(held_out.grid().size()),
                           static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t l = 0; l < candidates.size(); ++l) {
        if (!(candidates[l].slope_curve.grid() == held_out.grid()))
            throw DimensionError("aggregation: candidate and target grids differ");
        slopes.col(static_cast<Eigen::Index>(l)) = candidates[l].slope_curve.values();
    }
    return (held_out.curves().rowwise() - xbar) * (w.asDiagonal() * slopes);
}

Eigen::VectorXd centered_responses(const FunctionalDataset& d)
{
    return d.responses().array() - d.responses().mean();
}

double entropy_term(const Eigen::VectorXd& rho)
{
    double s = 0.0;
    for (Eigen::Index l = 0; l < rho.size(); ++l) {
        if (rho(l) > 0.0)
            s += rho(l) * std::log(rho(l));
    }
    return s;
}

struct QProblem {
    Eigen::MatrixXd predictions;
    Eigen::VectorXd response;
    Eigen::VectorXd risks;
    double n;
    double temperature;

    double objective(const Eigen::VectorXd& rho) const
    {
        return (response - predictions * rho).squaredNorm() / n + risks.dot(rho)
               + 2.0 * temperature / n * entropy_term(rho);
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& rho) const
    {
        Eigen::VectorXd g = -2.0 / n * (predictions.transpose() * (response - predictions * rho)) + risks;
        for (Eigen::Index l = 0; l < rho.size(); ++l) {
            if (rho(l) > 0.0)
                g(l) += 2.0 * temperature / n * (std::log(rho(l)) + 1.0);
        }
        return g;
    }
};

QProblem make_q_problem(std::span<const SlopeEstimate> candidates, const FunctionalDataset& held_out,
                        double temperature)
{
    QProblem p{candidate_predictions(candidates, held_out), centered_responses(held_out), {},
               static_cast<double>(held_out.size()), temperature};
    p.risks = (p.predictions.colwise() - p.response).colwise().squaredNorm().transpose() / p.n;
    return p;
}

} // namespace

SplitSpec make_split(std::size_t n, double fraction, std::uint64_t seed)
{
    if (n < 2)
        throw DomainError("make_split: need at least 2 observations");
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("make_split: split fraction must lie in (0, 1)");
    auto first_size = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * fraction));
    first_size = std::clamp<std::size_t>(first_size, 1, n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    SplitSpec split;
    split.seed = seed;
    split.first.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first_size));
    split.second.assign(order.begin() + static_cast<std::ptrdiff_t>(first_size), order.end());
    std::sort(split.first.begin(), split.first.end());
    std::sort(split.second.begin(), split.second.end());
    return split;
}

double zeta_statistic(const FunctionalDataset& source, const FunctionalDataset& target_first)
{
    if (!(source.grid() == target_first.grid()))
        throw DimensionError("zeta_statistic: source and target grids differ");
    auto cross_moment = [](const FunctionalDataset& d) -> Eigen::VectorXd {
        const Eigen::VectorXd yc = d.responses().array() - d.responses().mean();
        return d.curves().transpose() * yc / static_cast<double>(d.size());
    };
    const Eigen::VectorXd diff = cross_moment(source) - cross_moment(target_first);
    return diff.cwiseAbs2().dot(source.grid().weights());
}

CandidateSets build_candidate_sets(std::span<const double> zeta)
{
    for (double z : zeta) {
        if (!std::isfinite(z))
            throw ValidationError("build_candidate_sets: non-finite statistic");
    }
    std::vector<std::size_t> order(zeta.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return zeta[a] < zeta[b]; });

    CandidateSets out;
    out.zeta.assign(zeta.begin(), zeta.end());
    out.sets.reserve(zeta.size() + 1);
    for (std::size_t l = 0; l <= zeta.size(); ++l) {
        std::vector<std::size_t> set(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(l));
        std::sort(set.begin(), set.end());
        out.sets.push_back(std::move(set));
    }
    return out;
}

double empirical_risk(const GridFunction& slope, const FunctionalDataset& target_second)
{
    if (!(slope.grid() == target_second.grid()))
        throw DimensionError("empirical_risk: slope and target grids differ");
    const Eigen::RowVectorXd xbar = target_second.curves().colwise().mean();
    const Eigen::VectorXd fitted
        = (target_second.curves().rowwise() - xbar) * target_second.grid().weights().cwiseProduct(slope.values());
    return (centered_responses(target_second) - fitted).squaredNorm() / static_cast<double>(target_second.size());
}

SlopeEstimate combine(std::span<const SlopeEstimate> candidates, const Eigen::VectorXd& weights)
{
    if (candidates.empty())
        throw DomainError("combine: no candidates");
    if (static_cast<std::size_t>(weights.size()) != candidates.size())
        throw DimensionError("combine: one weight per candidate required");

    const Grid grid = candidates.front().slope_curve.grid();
    Eigen::VectorXd slope = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
    Eigen::VectorXd curve_mean = Eigen::VectorXd::Zero(slope.size());
    double response_mean = 0.0;
    Eigen::Index heaviest = 0;
    for (std::size_t l = 0; l < candidates.size(); ++l) {
        const auto& c = candidates[l];
        const double w = weights(static_cast<Eigen::Index>(l));
        if (!(c.slope_curve.grid() == grid))
            throw DimensionError("combine: candidates live on different grids");
        slope += w * c.slope_curve.values();
        curve_mean += w * c.curve_mean.values();
        response_mean += w * c.response_mean;
        if (w > weights(heaviest))
            heaviest = static_cast<Eigen::Index>(l);
    }
    const auto& lead = candidates[static_cast<std::size_t>(heaviest)];
    return {Eigen::VectorXd{}, nullptr, GridFunction(grid, std::move(slope)), response_mean,
            GridFunction(grid, std::move(curve_mean)), lead.m, lead.tau};
}

AggregationResult sparse_aggregate(std::span<const SlopeEstimate> candidates, const FunctionalDataset& target_second)
{
    if (candidates.empty())
        throw DomainError("sparse_aggregate: no candidates");

    const Eigen::MatrixXd pred = candidate_predictions(candidates, target_second);
    const Eigen::VectorXd r = centered_responses(target_second);
    const double n = static_cast<double>(target_second.size());
    const auto count = static_cast<Eigen::Index>(candidates.size());

    AggregationResult out;
    out.empirical_risks.resize(candidates.size());
    Eigen::Index best = 0;
    for (Eigen::Index l = 0; l < count; ++l) {
        out.empirical_risks[static_cast<std::size_t>(l)] = (r - pred.col(l)).squaredNorm() / n;
        if (out.empirical_risks[static_cast<std::size_t>(l)] < out.empirical_risks[static_cast<std::size_t>(best)])
            best = l;
    }

    // For each partner l, R(lambda) = mean((e - lambda d)^2) with
    // e = r - p_l and d = p_best - p_l: a 1-D quadratic in lambda.
    double best_risk = std::numeric_limits<double>::infinity();
    AggregationChoice choice{static_cast<std::size_t>(best), static_cast<std::size_t>(best), 1.0};
    for (Eigen::Index l = 0; l < count; ++l) {
        const Eigen::VectorXd e = r - pred.col(l);
        const Eigen::VectorXd d = pred.col(best) - pred.col(l);
        const double curvature = d.squaredNorm() / n;
        double lambda = 1.0;
        if (curvature >= kDegenerateCurvature)
            lambda = std::clamp(e.dot(d) / n / curvature, 0.0, 1.0);
        const double risk = (e - lambda * d).squaredNorm() / n;
        if (risk < best_risk) {
            best_risk = risk;
            choice = {static_cast<std::size_t>(best), static_cast<std::size_t>(l), lambda};
        }
    }

    Eigen::VectorXd weights = Eigen::VectorXd::Zero(count);
    weights(static_cast<Eigen::Index>(choice.first)) += choice.lambda;
    weights(static_cast<Eigen::Index>(choice.second)) += 1.0 - choice.lambda;
    out.aggregate = combine(candidates, weights);
    const auto& lead = candidates[choice.first];
    out.aggregate.m = lead.m;
    out.aggregate.tau = lead.tau;
    out.chosen = choice;
    out.aggregate_risk = empirical_risk(out.aggregate.slope_curve, target_second);

    const double floor = out.empirical_risks[choice.first];
    if (out.aggregate_risk > floor + kDominanceSlack)
        throw InvariantViolation("sparse_aggregate: aggregate risk exceeds the best candidate risk");
    return out;
}

double q_objective(std::span<const SlopeEstimate> candidates, const FunctionalDataset& target_second,
                   const Eigen::VectorXd& rho, double temperature)
{
    return make_q_problem(candidates, target_second, temperature).objective(rho);
}

QAggWeights q_aggregate(std::span<const SlopeEstimate> candidates, const FunctionalDataset& target_second,
                        double temperature, double tol, std::size_t max_iterations)
{
    if (candidates.empty())
        throw DomainError("q_aggregate: no candidates");
    if (!(temperature > 0.0))
        throw DomainError("q_aggregate: temperature must be positive");

    const QProblem problem = make_q_problem(candidates, target_second, temperature);
    const auto count = static_cast<Eigen::Index>(candidates.size());

    QAggWeights out;
    out.temperature = temperature;
    out.rho = Eigen::VectorXd::Constant(count, 1.0 / static_cast<double>(count));
    double value = problem.objective(out.rho);
    if (count == 1) {
        out.objective = value;
        out.converged = true;
        return out;
    }

    double step = 1.0;
    for (std::size_t it = 0; it < max_iterations; ++it) {
        const Eigen::VectorXd g = problem.gradient(out.rho);
        Eigen::VectorXd candidate;
        double next = value;
        // Backtrack until the multiplicative update does not increase F.
        for (int tries = 0; tries < 60; ++tries) {
            Eigen::VectorXd logits = -step * g;
            const double shift = logits.maxCoeff();
            candidate = out.rho.cwiseProduct((logits.array() - shift).exp().matrix());
            candidate /= candidate.sum();
            next = problem.objective(candidate);
            if (next <= value)
                break;
            step *= 0.5;
        }
        out.iterations = it + 1;
        if (!(next <= value)) {
            // No descent at any step size: already at the minimum to precision.
            out.converged = true;
            break;
        }
        const double change = value - next;
        out.rho = candidate;
        value = next;
        step = std::min(step * 2.0, 1e6);
        if (change <= tol) {
            out.converged = true;
            break;
        }
    }
    out.objective = value;
    return out;
}

AdaptiveFit adaptive_fit(const FunctionalDataset& target, std::span<const FunctionalDataset> sources,
                         const AdaptiveConfig& config)
{
    if (target.size() < 4)
        throw DomainError("adaptive_fit: need at least 4 target observations");
    for (const auto& s : sources) {
        if (!(s.grid() == target.grid()))
            throw DimensionError("adaptive_fit: source and target grids differ");
    }

    AdaptiveFit fit;
    fit.split = make_split(target.size(), config.split_fraction, config.seed);
    const FunctionalDataset first = target.subset(fit.split.first);
    const FunctionalDataset second = target.subset(fit.split.second);

    std::vector<double> zeta;
    zeta.reserve(sources.size());
    for (const auto& s : sources)
        zeta.push_back(zeta_statistic(s, first));
    fit.candidates = build_candidate_sets(zeta);

    std::vector<SourceMoments> moments;
    moments.reserve(sources.size());
    for (const auto& s : sources)
        moments.push_back(source_moments(s));

    const CVConfig cv = config.cv.resolved(first.size(), target.grid().size());
    const std::size_t max_m = config.retune_per_candidate ? cv.m_grid.back() : config.shared_m;

    fit.estimates.reserve(fit.candidates.sets.size());
    // No sources: the pooled FPCA is undefined, so candidate 0 is the
    // target-only estimator on the fitting half.
    fit.estimates.push_back(config.retune_per_candidate ? fit_tuned(first, {}, cv, Estimator::flr)
                                                        : fit_flr(first, config.shared_m));
    for (std::size_t l = 1; l < fit.candidates.sets.size(); ++l) {
        std::vector<const SourceMoments*> chosen;
        for (std::size_t idx : fit.candidates.sets[l])
            chosen.push_back(&moments[idx]);
        const TransferModel model = TransferModel::prepare(chosen, max_m);
        fit.estimates.push_back(config.retune_per_candidate ? fit_tuned(first, model, cv)
                                                            : model.fit(first, config.shared_m, config.shared_tau));
    }

    fit.aggregation = sparse_aggregate(fit.estimates, second);
    if (config.aggregation == Aggregation::q) {
        fit.q_weights = q_aggregate(fit.estimates, second, config.temperature);
        fit.estimate = combine(fit.estimates, fit.q_weights->rho);
    } else {
        fit.estimate = fit.aggregation.aggregate;
    }
    fit.estimate.response_mean = target.responses().mean();
    fit.estimate.curve_mean = mean_function(target);
    return fit;
}

} // namespace tlflr
