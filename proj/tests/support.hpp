#pragma once

// Shared test fixtures and independent oracles. Nothing here calls into the
// solver code it is used to check.

#include "tlflr/funcore.hpp"
#include "tlflr/modelsel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

namespace tlflr::testing {

inline double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double sqrt2cos(std::size_t k, double t) { return std::sqrt(2.0) * std::cos(static_cast<double>(k) * std::numbers::pi * t); }

/// n smooth random curves: sum_k sqrt(k^-2) z_k sqrt2 cos(k pi t), plus a
/// random linear response.
inline FunctionalDataset random_curves(Rng& rng, std::size_t n, std::size_t G, std::size_t terms = 6,
                                       double noise = 0.1)
{
    std::normal_distribution<double> z(0.0, 1.0);
    const Grid grid(G);
    Eigen::MatrixXd curves(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(G));
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double resp = 0.0;
        std::vector<double> c(terms);
        for (std::size_t k = 0; k < terms; ++k) {
            c[k] = z(rng) / static_cast<double>(k + 1);
            resp += c[k] * (k % 2 == 0 ? 1.0 : -0.5);
        }
        for (std::size_t j = 0; j < G; ++j) {
            double v = 0.3; // nonzero mean so centering matters
            for (std::size_t k = 0; k < terms; ++k)
                v += c[k] * sqrt2cos(k + 1, grid.point(j));
            curves(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
        y(static_cast<Eigen::Index>(i)) = 1.0 + resp + noise * z(rng);
    }
    return {grid, std::move(curves), std::move(y)};
}

/// Plain trapezoid rule written out independently of Grid::weights.
inline double trapezoid(const std::vector<double>& f)
{
    const double h = 1.0 / static_cast<double>(f.size() - 1);
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < f.size(); ++i)
        s += 0.5 * h * (f[i] + f[i + 1]);
    return s;
}

// Held-out risk with everything written out: plain loops and the trapezoid rule.
inline double heldout_risk(const Eigen::VectorXd& slope, const FunctionalDataset& d)
{
    const auto n = d.size();
    const auto G = d.grid().size();
    std::vector<double> xbar(G, 0.0);
    double ybar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ybar += d.response(i) / static_cast<double>(n);
        for (std::size_t j = 0; j < G; ++j)
            xbar[j] += d.curves()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / static_cast<double>(n);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> f(G);
        for (std::size_t j = 0; j < G; ++j)
            f[j] = (d.curves()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - xbar[j])
                   * slope(static_cast<Eigen::Index>(j));
        const double e = d.response(i) - ybar - trapezoid(f);
        total += e * e;
    }
    return total / static_cast<double>(n);
}

struct LassoInstance {
    Eigen::MatrixXd S;
    Eigen::VectorXd r;
    double tau = 0.0;
};

/// Random well-conditioned instance whose solution lies well inside [-3, 3]^m.
inline LassoInstance random_lasso(Rng& rng, std::size_t n, std::size_t m, double tau)
{
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    LassoInstance inst;
    while (true) {
        inst.S = Eigen::MatrixXd::NullaryExpr(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m),
                                              [&] { return z(rng); });
        const Eigen::MatrixXd Q = inst.S.transpose() * inst.S / static_cast<double>(n);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
        if (es.eigenvalues().minCoeff() > 0.2)
            break;
    }
    Eigen::VectorXd d0(static_cast<Eigen::Index>(m));
    for (Eigen::Index k = 0; k < d0.size(); ++k)
        d0(k) = u(rng);
    inst.r = inst.S * d0;
    for (Eigen::Index i = 0; i < inst.r.size(); ++i)
        inst.r(i) += 0.2 * z(rng);
    inst.tau = tau;
    return inst;
}

inline double lasso_value(const LassoInstance& inst, const Eigen::VectorXd& d)
{
    const double n = static_cast<double>(inst.S.rows());
    return (inst.r - inst.S * d).squaredNorm() / (2.0 * n) + inst.tau * d.lpNorm<1>();
}

/// Brute-force minimizer: exhaustive grid over [-lim, lim]^m, then repeated
/// halving of a window around the incumbent until the spacing is below tol.
inline Eigen::VectorXd lasso_grid_oracle(const LassoInstance& inst, double lim = 3.0, double tol = 1e-7)
{
    const auto m = static_cast<std::size_t>(inst.S.cols());
    Eigen::VectorXd center = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    double half = lim;
    const int points = m == 1 ? 401 : m == 2 ? 121 : 41;
    while (true) {
        const double step = 2.0 * half / (points - 1);
        Eigen::VectorXd best = center;
        double best_value = lasso_value(inst, center);
        std::vector<int> idx(m, 0);
        while (true) {
            Eigen::VectorXd d(static_cast<Eigen::Index>(m));
            for (std::size_t k = 0; k < m; ++k)
                d(static_cast<Eigen::Index>(k)) = center(static_cast<Eigen::Index>(k)) - half + step * idx[k];
            const double v = lasso_value(inst, d);
            if (v < best_value) {
                best_value = v;
                best = d;
            }
            std::size_t k = 0;
            while (k < m && ++idx[k] == points)
                idx[k++] = 0;
            if (k == m)
                break;
        }
        center = best;
        if (step < tol)
            return center;
        half = 4.0 * step;
    }
}

inline Eigen::VectorXd dense_least_squares(const Eigen::MatrixXd& S, const Eigen::VectorXd& r)
{
    return S.colPivHouseholderQr().solve(r);
}

} // namespace tlflr::testing
