#include "tlflr/funcore.hpp"

#include "tlflr/errors.hpp"

#include <algorithm>
#include <cmath>

namespace tlflr {

namespace {

constexpr double kSymmetryTolerance = 1e-10;

void require_same_grid(const Grid& a, const Grid& b, const char* where)
{
    if (!(a == b)) {
        throw DimensionError(std::string(where) + ": grids differ (" + std::to_string(a.size()) + " vs "
                             + std::to_string(b.size()) + " points)");
    }
}

} // namespace

Grid::Grid(std::size_t size) : size_(size)
{
    if (size < 2)
        throw DomainError("Grid: need at least 2 points");
}

Eigen::VectorXd Grid::points() const
{
    Eigen::VectorXd p(static_cast<Eigen::Index>(size_));
    for (std::size_t i = 0; i < size_; ++i)
        p(static_cast<Eigen::Index>(i)) = point(i);
    // exact endpoint regardless of rounding in i * step
    p(p.size() - 1) = 1.0;
    return p;
}

Eigen::VectorXd Grid::weights() const
{
    Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(size_), step());
    w(0) *= 0.5;
    w(w.size() - 1) *= 0.5;
    return w;
}

GridFunction::GridFunction(Grid grid, Eigen::VectorXd values) : grid_(grid), values_(std::move(values))
{
    if (static_cast<std::size_t>(values_.size()) != grid_.size())
        throw DimensionError("GridFunction: " + std::to_string(values_.size()) + " values for a grid of "
                             + std::to_string(grid_.size()) + " points");
    if (!values_.allFinite())
        throw ValidationError("GridFunction: non-finite value");
}

double GridFunction::at(double t) const
{
    const auto last = static_cast<double>(grid_.size() - 1);
    const double x = std::clamp(t, 0.0, 1.0) * last;
    auto lo = static_cast<Eigen::Index>(std::floor(x));
    if (lo >= values_.size() - 1)
        lo = values_.size() - 2;
    const double frac = x - static_cast<double>(lo);
    return (1.0 - frac) * values_(lo) + frac * values_(lo + 1);
}

GridFunction GridFunction::resample(const Grid& target) const
{
    if (target == grid_)
        return *this;
    Eigen::VectorXd v(static_cast<Eigen::Index>(target.size()));
    for (std::size_t i = 0; i < target.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = at(target.point(i));
    return {target, std::move(v)};
}

FunctionalDataset::FunctionalDataset(Grid grid, Eigen::MatrixXd curves, Eigen::VectorXd responses, std::string label)
    : grid_(grid), curves_(std::move(curves)), responses_(std::move(responses)), label_(std::move(label))
{
    if (curves_.rows() == 0)
        throw DomainError("FunctionalDataset: no observations");
    if (static_cast<std::size_t>(curves_.cols()) != grid_.size())
        throw DimensionError("FunctionalDataset: curves have " + std::to_string(curves_.cols())
                             + " columns, grid has " + std::to_string(grid_.size()) + " points");
    if (responses_.size() != curves_.rows())
        throw DimensionError("FunctionalDataset: " + std::to_string(responses_.size()) + " responses for "
                             + std::to_string(curves_.rows()) + " curves");
    if (!curves_.allFinite() || !responses_.allFinite())
        throw ValidationError("FunctionalDataset: non-finite value");
}

GridFunction FunctionalDataset::curve(std::size_t i) const
{
    return {grid_, curves_.row(static_cast<Eigen::Index>(i)).transpose()};
}

FunctionalDataset FunctionalDataset::subset(std::span<const std::size_t> rows, std::string label) const
{
    Eigen::MatrixXd c(static_cast<Eigen::Index>(rows.size()), curves_.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= size())
            throw DomainError("FunctionalDataset::subset: row index out of range");
        const auto src = static_cast<Eigen::Index>(rows[r]);
        c.row(static_cast<Eigen::Index>(r)) = curves_.row(src);
        y(static_cast<Eigen::Index>(r)) = responses_(src);
    }
    return {grid_, std::move(c), std::move(y), label.empty() ? label_ : std::move(label)};
}

FunctionalDataset FunctionalDataset::relabeled(std::string label) const
{
    FunctionalDataset copy = *this;
    copy.label_ = std::move(label);
    return copy;
}

double CovMatrix::asymmetry() const
{
    return (entries - entries.transpose()).cwiseAbs().maxCoeff();
}

EigenSystem::EigenSystem(Grid grid, Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenfunctions,
                         std::vector<double> source_weights)
    : grid_(grid),
      eigenvalues_(std::move(eigenvalues)),
      eigenfunctions_(std::move(eigenfunctions)),
      source_weights_(std::move(source_weights))
{
    if (static_cast<std::size_t>(eigenfunctions_.rows()) != grid_.size()
        || eigenfunctions_.cols() != eigenvalues_.size())
        throw DimensionError("EigenSystem: eigenfunction matrix does not match grid and eigenvalue count");
}

GridFunction EigenSystem::eigenfunction(std::size_t k) const
{
    return {grid_, eigenfunctions_.col(static_cast<Eigen::Index>(k))};
}

EigenSystem EigenSystem::truncated(std::size_t m) const
{
    if (m > size())
        throw DomainError("EigenSystem::truncated: m exceeds basis size");
    const auto mm = static_cast<Eigen::Index>(m);
    return {grid_, eigenvalues_.head(mm), eigenfunctions_.leftCols(mm), source_weights_};
}

double inner_product(const GridFunction& f, const GridFunction& g)
{
    require_same_grid(f.grid(), g.grid(), "inner_product");
    return f.values().cwiseProduct(g.values()).dot(f.grid().weights());
}

GridFunction mean_function(const FunctionalDataset& data)
{
    if (data.size() == 0)
        throw DomainError("mean_function: empty dataset");
    return {data.grid(), data.curves().colwise().mean().transpose()};
}

CovMatrix covariance_estimate(const FunctionalDataset& data)
{
    const std::size_t n = data.size();
    if (n < 2)
        throw DomainError("covariance_estimate: need at least 2 curves");
    const Eigen::RowVectorXd mean = data.curves().colwise().mean();
    const Eigen::MatrixXd centered = data.curves().rowwise() - mean;
    const auto G = static_cast<Eigen::Index>(data.grid().size());

    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(G, G);
    k.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(n - 1));
    k.triangularView<Eigen::StrictlyUpper>() = k.transpose();
    return {data.grid(), std::move(k)};
}

CovMatrix pool_covariances(std::span<const CovMatrix* const> covariances, std::span<const std::size_t> sizes)
{
    if (covariances.empty())
        throw DomainError("pooled_covariance: no sources");
    if (covariances.size() != sizes.size())
        throw DimensionError("pooled_covariance: one size per covariance required");

    const Grid grid = covariances.front()->grid;
    double total = 0.0;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
        require_same_grid(grid, covariances[l]->grid, "pooled_covariance");
        total += static_cast<double>(sizes[l]);
    }

    CovMatrix pooled{grid, Eigen::MatrixXd::Zero(covariances.front()->entries.rows(), covariances.front()->entries.cols()),
                     {}};
    pooled.source_weights.reserve(sizes.size());
    for (std::size_t l = 0; l < sizes.size(); ++l) {
        const double pi = static_cast<double>(sizes[l]) / total;
        pooled.entries.noalias() += pi * covariances[l]->entries;
        pooled.source_weights.push_back(pi);
    }
    return pooled;
}

CovMatrix pooled_covariance(std::span<const FunctionalDataset> sources)
{
    if (sources.empty())
        throw DomainError("pooled_covariance: no sources");
    std::vector<CovMatrix> covs;
    std::vector<const CovMatrix*> ptrs;
    std::vector<std::size_t> sizes;
    covs.reserve(sources.size());
    for (const auto& s : sources) {
        require_same_grid(sources.front().grid(), s.grid(), "pooled_covariance");
        covs.push_back(covariance_estimate(s));
        sizes.push_back(s.size());
    }
    for (const auto& c : covs)
        ptrs.push_back(&c);
    return pool_covariances(ptrs, sizes);
}

EigenSystem eigendecompose(const CovMatrix& cov, std::size_t m)
{
    const std::size_t G = cov.grid.size();
    if (m > G)
        throw DomainError("eigendecompose: m = " + std::to_string(m) + " exceeds grid size " + std::to_string(G));
    if (static_cast<std::size_t>(cov.entries.rows()) != G || static_cast<std::size_t>(cov.entries.cols()) != G)
        throw DimensionError("eigendecompose: kernel shape does not match grid");
    if (!cov.entries.allFinite())
        throw ValidationError("eigendecompose: non-finite kernel entry");
    if (cov.asymmetry() > kSymmetryTolerance)
        throw ValidationError("eigendecompose: kernel is not symmetric");

    const Eigen::VectorXd sqrt_w = cov.grid.weights().cwiseSqrt();
    const Eigen::MatrixXd sym = sqrt_w.asDiagonal() * (0.5 * (cov.entries + cov.entries.transpose())) * sqrt_w.asDiagonal();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success)
        throw InvariantViolation("eigendecompose: symmetric eigensolver failed");

    // Eigen returns ascending order.
    const auto mm = static_cast<Eigen::Index>(m);
    const auto g = static_cast<Eigen::Index>(G);
    Eigen::VectorXd values(mm);
    Eigen::MatrixXd functions(g, mm);
    for (Eigen::Index k = 0; k < mm; ++k) {
        values(k) = std::max(0.0, solver.eigenvalues()(g - 1 - k));
        Eigen::VectorXd phi = solver.eigenvectors().col(g - 1 - k).cwiseQuotient(sqrt_w);

        const double peak = phi.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < g; ++i) {
            if (std::abs(phi(i)) >= peak * (1.0 - 1e-9)) {
                if (phi(i) < 0.0)
                    phi = -phi;
                break;
            }
        }
        functions.col(k) = phi;
    }
    return {cov.grid, std::move(values), std::move(functions), cov.source_weights};
}

Eigen::MatrixXd project_centered(const Eigen::MatrixXd& curves, const Eigen::VectorXd& center,
                                 const EigenSystem& basis, std::size_t m)
{
    if (m > basis.size())
        throw DomainError("compute_scores: m exceeds basis size");
    if (curves.cols() != center.size() || static_cast<std::size_t>(curves.cols()) != basis.grid().size())
        throw DimensionError("compute_scores: curves and basis are on different grids");
    const Eigen::MatrixXd weighted_basis
        = basis.grid().weights().asDiagonal() * basis.eigenfunctions().leftCols(static_cast<Eigen::Index>(m));
    return (curves.rowwise() - center.transpose()) * weighted_basis;
}

ScoreMatrix compute_scores(const FunctionalDataset& data, std::shared_ptr<const EigenSystem> basis, std::size_t m)
{
    if (!basis)
        throw DomainError("compute_scores: null basis");
    require_same_grid(data.grid(), basis->grid(), "compute_scores");
    GridFunction center = mean_function(data);
    Eigen::MatrixXd scores = project_centered(data.curves(), center.values(), *basis, m);
    return {std::move(scores), std::move(center), std::move(basis)};
}

} // namespace tlflr
