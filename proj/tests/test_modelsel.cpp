#include "support.hpp"

#include "tlflr/errors.hpp"
#include "tlflr/modelsel.hpp"
#include "tlflr/regress.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace tlflr;
using namespace tlflr::testing;

TEST_CASE("derive_seed is a pure function of its path")
{
    CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
    CHECK(derive_seed(1, {0}) != derive_seed(1, {0, 0}));
}

TEST_CASE("make_folds examples")
{
    SUBCASE("n=10, five folds of two")
    {
        const auto a = make_folds(10, 5, 7);
        std::vector<int> count(5, 0);
        for (auto f : a)
            ++count[f];
        for (int c : count)
            CHECK(c == 2);
    }
    SUBCASE("folds = n is leave-one-out")
    {
        const auto a = make_folds(6, 6, 1);
        CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 6);
    }
    SUBCASE("fixed seed is reproducible")
    {
        CHECK(make_folds(37, 5, 99) == make_folds(37, 5, 99));
        CHECK(make_folds(37, 5, 99) != make_folds(37, 5, 100));
    }
    CHECK_THROWS_AS(make_folds(3, 4, 0), DomainError);
}

TEST_CASE("fold coverage and balance for random sizes")
{
    Rng rng(5);
    std::uniform_int_distribution<std::size_t> size(2, 200);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = size(rng);
        const std::size_t folds = std::min<std::size_t>(n, 2 + static_cast<std::size_t>(trial % 9));
        const auto a = make_folds(n, folds, rng());
        REQUIRE(a.size() == n);
        std::vector<std::size_t> count(folds, 0);
        for (auto f : a) {
            REQUIRE(f < folds);
            ++count[f];
        }
        for (auto c : count) {
            CHECK(c >= n / folds);
            CHECK(c <= (n + folds - 1) / folds);
        }
    }
}

TEST_CASE("CVConfig defaults and validation")
{
    const CVConfig cfg = CVConfig{}.resolved(150, 100);
    CHECK(cfg.m_grid.size() == 20);
    CHECK(cfg.m_grid.front() == 1);
    CHECK(cfg.m_grid.back() == 20);
    REQUIRE(cfg.tau_grid.size() == 6);
    CHECK(cfg.tau_grid[0] == 0.0);
    CHECK(cfg.tau_grid[3] == doctest::Approx(1.0 / std::sqrt(150.0)));
    CHECK(CVConfig{}.resolved(8, 100).m_grid.back() == 6);
    CHECK(CVConfig{}.resolved(150, 5).m_grid.back() == 4);
    CHECK_NOTHROW(cfg.validate());

    CVConfig bad = cfg;
    bad.folds = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.tau_grid = {0.1, 0.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.tau_grid = {0.1, 0.2};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.m_grid = {0, 1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("singleton grids select the only pair")
{
    Rng rng(1);
    const auto target = random_curves(rng, 30, 40);
    const std::vector<FunctionalDataset> src{random_curves(rng, 50, 40)};
    CVConfig cfg;
    cfg.m_grid = {3};
    cfg.tau_grid = {0.0};
    const auto rep = cross_validate(target, src, cfg, Estimator::tlflr);
    CHECK(rep.best_m == 3);
    CHECK(rep.best_tau == 0.0);
    CHECK(std::isfinite(rep.risks(0, 0)));
}

TEST_CASE("noiseless one-component model selects m = 1")
{
    const Grid g(50);
    Rng rng(4);
    std::normal_distribution<double> z(0, 1);
    Eigen::MatrixXd c(30, 50);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) {
        const double s = z(rng);
        for (std::size_t j = 0; j < 50; ++j)
            c(i, static_cast<Eigen::Index>(j)) = s * sqrt2cos(1, g.point(j));
        y(i) = 2.0 * s;
    }
    // a little variation in other directions so higher components exist
    c += 1e-3 * Eigen::MatrixXd::NullaryExpr(30, 50, [&] { return z(rng); });
    const FunctionalDataset target(g, c, y);

    CVConfig cfg;
    cfg.m_grid = {1, 40};
    cfg.tau_grid = {0.0};
    cfg.seed = 17;
    const auto rep = cross_validate(target, {}, cfg, Estimator::flr);
    CHECK(rep.best_m == 1);
    CHECK(std::isinf(rep.risks(1, 0)));

    // scripted recomputation of the m = 1 fold risks
    const auto folds = make_folds(30, 5, 17);
    double total = 0;
    for (std::size_t f = 0; f < 5; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < 30; ++i)
            (folds[i] == f ? test : train).push_back(i);
        const auto est = fit_flr(target.subset(train), 1);
        const auto held = target.subset(test);
        const Eigen::VectorXd e = held.responses() - predict(est, held);
        total += e.squaredNorm() / static_cast<double>(held.size());
    }
    CHECK(rep.risks(0, 0) == doctest::Approx(total / 5).epsilon(1e-9));
}

TEST_CASE("FLR risks are constant across tau")
{
    Rng rng(2);
    const auto target = random_curves(rng, 40, 30);
    CVConfig cfg;
    cfg.m_grid = {1, 2, 3, 4};
    cfg.tau_grid = {0.0, 0.1, 1.0};
    const auto rep = cross_validate(target, {}, cfg, Estimator::flr);
    for (Eigen::Index i = 0; i < rep.risks.rows(); ++i) {
        CHECK(rep.risks(i, 1) == rep.risks(i, 0));
        CHECK(rep.risks(i, 2) == rep.risks(i, 0));
    }
    CHECK(rep.best_tau == 0.0);
}

TEST_CASE("transfer CV agrees with refitting every fold from scratch")
{
    Rng rng(12);
    const auto target = random_curves(rng, 35, 40, 6, 0.3);
    const std::vector<FunctionalDataset> src{random_curves(rng, 60, 40, 6, 0.3), random_curves(rng, 45, 40, 6, 0.3)};
    CVConfig cfg;
    cfg.m_grid = {1, 2, 4};
    cfg.tau_grid = {0.0, 0.05, 0.2};
    cfg.seed = 3;
    const auto rep = cross_validate(target, src, cfg, Estimator::tlflr);
    const auto folds = make_folds(target.size(), 5, 3);
    for (std::size_t i = 0; i < cfg.m_grid.size(); ++i) {
        for (std::size_t j = 0; j < cfg.tau_grid.size(); ++j) {
            double total = 0;
            for (std::size_t f = 0; f < 5; ++f) {
                std::vector<std::size_t> train, test;
                for (std::size_t r = 0; r < target.size(); ++r)
                    (folds[r] == f ? test : train).push_back(r);
                const auto est = fit_tlflr(target.subset(train), src, cfg.m_grid[i], cfg.tau_grid[j]);
                const auto held = target.subset(test);
                total += (held.responses() - predict(est, held)).squaredNorm() / static_cast<double>(held.size());
            }
            CHECK(rep.risks(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                  == doctest::Approx(total / 5).epsilon(1e-8));
        }
    }
}

TEST_CASE("CV determinism, finiteness and tie-breaking")
{
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const auto target = random_curves(rng, 25 + 5 * static_cast<std::size_t>(trial), 30, 6, 0.2);
        const std::vector<FunctionalDataset> src{random_curves(rng, 40, 30, 6, 0.2)};
        CVConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(trial);
        const auto a = cross_validate(target, src, cfg, Estimator::tlflr);
        const auto b = cross_validate(target, src, cfg, Estimator::tlflr);
        CHECK(a.best_m == b.best_m);
        CHECK(a.best_tau == b.best_tau);
        CHECK((a.risks.array() == b.risks.array()).all());
        CHECK(!a.risks.array().isNaN().any());
        CHECK((a.risks.array() >= 0).all());
        const double best = a.risks.minCoeff();
        // the reported pair is the first minimum in (m, tau) order
        bool seen = false;
        for (Eigen::Index i = 0; i < a.risks.rows() && !seen; ++i)
            for (Eigen::Index j = 0; j < a.risks.cols() && !seen; ++j)
                if (a.risks(i, j) == best) {
                    CHECK(a.m_grid[static_cast<std::size_t>(i)] == a.best_m);
                    CHECK(a.tau_grid[static_cast<std::size_t>(j)] == a.best_tau);
                    seen = true;
                }
    }
}

TEST_CASE("all-infeasible grid is a domain error")
{
    Rng rng(3);
    const auto target = random_curves(rng, 10, 30);
    CVConfig cfg;
    cfg.m_grid = {25};
    cfg.tau_grid = {0.0};
    CHECK_THROWS_AS(cross_validate(target, {}, cfg, Estimator::flr), DomainError);
}

TEST_CASE("fit_tuned refits at the selected pair")
{
    Rng rng(8);
    const auto target = random_curves(rng, 40, 30, 6, 0.2);
    const std::vector<FunctionalDataset> src{random_curves(rng, 60, 30, 6, 0.2)};
    CVConfig cfg;
    cfg.seed = 5;
    const auto rep = cross_validate(target, src, cfg, Estimator::tlflr);
    const auto est = fit_tuned(target, src, cfg, Estimator::tlflr);
    CHECK(est.m == rep.best_m);
    CHECK(est.tau == rep.best_tau);
    const auto direct = fit_tlflr(target, src, rep.best_m, rep.best_tau);
    CHECK((est.slope_curve.values() - direct.slope_curve.values()).cwiseAbs().maxCoeff() <= 1e-9);
}
