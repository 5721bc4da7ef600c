#include "support.hpp"

#include "tlflr/errors.hpp"
#include "tlflr/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace tlflr;
using namespace tlflr::testing;

TEST_CASE("cosine basis values and orthogonality")
{
    const Grid g(201);
    const auto phi1 = cosine_basis(1, g);
    const auto phi2 = cosine_basis(2, g);
    CHECK(phi1[0] == doctest::Approx(1.414214).epsilon(1e-6));
    CHECK(phi2[100] == doctest::Approx(-std::numbers::sqrt2).epsilon(1e-12));
    CHECK(std::abs(inner_product(phi1, phi2)) <= 1e-4);
    for (std::size_t j = 1; j <= 12; ++j)
        for (std::size_t k = 1; k <= 12; ++k)
            CHECK(std::abs(inner_product(cosine_basis(j, g), cosine_basis(k, g)) - (j == k ? 1.0 : 0.0)) <= 1e-4);
    CHECK_THROWS_AS(cosine_basis(0, g), DomainError);
}

TEST_CASE("haar basis values")
{
    CHECK(haar_value(1, 0.25) == 1.0);
    CHECK(haar_value(1, 0.75) == -1.0);
    CHECK(haar_value(1, 0.5) == -1.0); // half-open upper half starts at the midpoint
    CHECK(haar_value(2, 0.1) == doctest::Approx(std::numbers::sqrt2));
    CHECK(haar_value(2, 0.6) == 0.0);
    CHECK(haar_value(3, 0.6) == doctest::Approx(std::numbers::sqrt2));
    CHECK(haar_value(3, 1.0) == doctest::Approx(-std::numbers::sqrt2));
    CHECK_THROWS_AS(haar_basis(0, Grid(9)), DomainError);
}

TEST_CASE("haar quadrature orthonormality on a dyadic grid")
{
    const Grid g(257);
    const double h = g.step();
    for (std::size_t j = 1; j <= 50; ++j) {
        for (std::size_t k = j; k <= 50; ++k) {
            const double ip = inner_product(haar_basis(j, g), haar_basis(k, g));
            const double exact = j == k ? 1.0 : 0.0;
            // Each discontinuity that falls on a grid node costs one trapezoid
            // panel of size |jump| h / 2; the product of two level-j, level-k
            // functions jumps by at most 2^{(j+k)/2} * 2 at a node.
            const auto level = [](std::size_t i) {
                std::size_t lv = 0;
                while ((std::size_t{2} << lv) <= i)
                    ++lv;
                return static_cast<double>(lv);
            };
            const double bound = std::exp2(std::max(level(j), level(k))) * 2.0 * h;
            CHECK(std::abs(ip - exact) <= bound);
        }
    }
    CHECK(std::abs(inner_product(haar_basis(2, g), haar_basis(3, g))) <= 2.0 * 2.0 / 256.0 + 1e-15);
}

TEST_CASE("cosine-haar cross Gram against fine quadrature")
{
    const Eigen::MatrixXd C = cosine_haar_cross_gram(16);
    const std::size_t N = 1 << 16;
    for (std::size_t j = 1; j <= 16; j += 3) {
        for (std::size_t k = 1; k <= 16; ++k) {
            // midpoint rule, which never samples a Haar discontinuity
            double s = 0;
            for (std::size_t i = 0; i < N; ++i) {
                const double t = (static_cast<double>(i) + 0.5) / N;
                s += sqrt2cos(j, t) * haar_value(k, t);
            }
            CHECK(std::abs(C(static_cast<Eigen::Index>(j - 1), static_cast<Eigen::Index>(k - 1)) - s / N) <= 1e-7);
        }
    }
}

TEST_CASE("target slope coefficients")
{
    SyntheticConfig cfg;
    cfg.beta = 2.0;
    const auto b = target_slope_coefficients(cfg);
    CHECK(b(0) == doctest::Approx(4.0));
    CHECK(b(1) == doctest::Approx(-1.0));
    CHECK(b(2) == doctest::Approx(4.0 / 9.0));
    CHECK(b.size() == 50);
}

TEST_CASE("score distributions have unit variance")
{
    for (auto dist : {ScoreDistribution::uniform, ScoreDistribution::gaussian, ScoreDistribution::scaled_t5}) {
        Rng rng(derive_seed(2024, {static_cast<std::uint64_t>(dist)}));
        const int n = 100000;
        double sum = 0, sq = 0;
        for (int i = 0; i < n; ++i) {
            const double z = draw_score(dist, rng);
            sum += z;
            sq += z * z;
        }
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        CAPTURE(to_string(dist));
        CHECK(std::abs(var - 1.0) <= 0.02);
    }
}

TEST_CASE("generate_target")
{
    const Grid g(100);
    SUBCASE("degenerate scores and no noise give zero responses")
    {
        SyntheticConfig cfg;
        cfg.n = 1;
        cfg.sigma_eps = 0.0;
        cfg.score_dist = ScoreDistribution::zero;
        const auto t = generate_target(cfg, g);
        CHECK(t.data.response(0) == 0.0);
        CHECK(t.data.curves().cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("first score variance")
    {
        SyntheticConfig cfg;
        cfg.n = 10000;
        cfg.seed = 7;
        const Grid fine(201);
        const auto t = generate_target(cfg, fine);
        const auto phi1 = cosine_basis(1, fine);
        Eigen::VectorXd xi(static_cast<Eigen::Index>(cfg.n));
        for (std::size_t i = 0; i < cfg.n; ++i)
            xi(static_cast<Eigen::Index>(i)) = inner_product(t.data.curve(i), phi1);
        const double var = (xi.array() - xi.mean()).square().sum() / static_cast<double>(cfg.n - 1);
        CHECK(std::abs(var - 1.0) <= 0.05);
    }
    SUBCASE("truth slope equals its expansion")
    {
        SyntheticConfig cfg;
        const auto t = generate_target(cfg, g);
        for (std::size_t i = 0; i < g.size(); i += 7) {
            double b = 0;
            for (std::size_t k = 1; k <= 50; ++k)
                b += t.truth.slope_coeffs(static_cast<Eigen::Index>(k - 1)) * sqrt2cos(k, g.point(i));
            CHECK(std::abs(t.truth.slope[i] - b) <= 1e-10);
        }
    }
    SUBCASE("same seed, same data")
    {
        SyntheticConfig cfg;
        cfg.seed = 99;
        const auto a = generate_target(cfg, g);
        const auto b = generate_target(cfg, g);
        CHECK((a.data.curves().array() == b.data.curves().array()).all());
        CHECK((a.data.responses().array() == b.data.responses().array()).all());
    }
}

TEST_CASE("curves lie in the span of the first 50 basis functions")
{
    const Grid g(257);
    SyntheticConfig cfg;
    cfg.model = SyntheticModel::III;
    cfg.informative = 5;
    cfg.sources = 8;
    cfg.n_source = 20;
    cfg.n = 20;
    const auto t = generate_target(cfg, g);
    const auto src = generate_sources(cfg, g, t.truth);
    auto residual = [&](const FunctionalDataset& d, BasisKind kind) {
        Eigen::MatrixXd B(static_cast<Eigen::Index>(g.size()), 50);
        for (std::size_t k = 1; k <= 50; ++k)
            B.col(static_cast<Eigen::Index>(k - 1))
                = (kind == BasisKind::cosine ? cosine_basis(k, g) : haar_basis(k, g)).values();
        const auto qr = B.colPivHouseholderQr();
        double worst = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const Eigen::VectorXd x = d.curves().row(static_cast<Eigen::Index>(i)).transpose();
            const Eigen::VectorXd fit = B * qr.solve(x);
            worst = std::max(worst, (x - fit).cwiseAbs().maxCoeff());
        }
        return worst;
    };
    CHECK(residual(t.data, BasisKind::cosine) <= 1e-10);
    for (const auto& s : src)
        CHECK(residual(s.data, s.curve_basis) <= 1e-10);
}

TEST_CASE("generate_sources contrasts")
{
    const Grid g(100);
    const auto contrast = [](const SyntheticSource& s, const SyntheticTruth& t) {
        return (s.coeffs - t.slope_coeffs).lpNorm<1>();
    };
    SUBCASE("model I with h = 0 copies b")
    {
        SyntheticConfig cfg;
        cfg.h = 0.0;
        cfg.n_source = 5;
        const auto t = generate_target(cfg, g);
        for (const auto& s : generate_sources(cfg, g, t.truth))
            CHECK(contrast(s, t.truth) == 0.0);
    }
    SUBCASE("model I, s = 1, h = 2")
    {
        SyntheticConfig cfg;
        cfg.n_source = 5;
        const auto t = generate_target(cfg, g);
        const auto src = generate_sources(cfg, g, t.truth);
        CHECK(src.size() == 20);
        for (const auto& s : src) {
            CHECK(contrast(s, t.truth) == doctest::Approx(2.0).epsilon(1e-14));
            CHECK((s.coeffs - t.truth.slope_coeffs).tail(49).cwiseAbs().maxCoeff() == 0.0);
        }
    }
    SUBCASE("model I with K < L keeps only the informative sources")
    {
        SyntheticConfig cfg;
        cfg.informative = 7;
        cfg.n_source = 5;
        const auto t = generate_target(cfg, g);
        CHECK(generate_sources(cfg, g, t.truth).size() == 7);
    }
    SUBCASE("model II")
    {
        SyntheticConfig cfg;
        cfg.model = SyntheticModel::II;
        cfg.informative = 4;
        cfg.h = 10;
        cfg.n_source = 5;
        const auto t = generate_target(cfg, g);
        const auto src = generate_sources(cfg, g, t.truth);
        REQUIRE(src.size() == 20);
        for (std::size_t l = 0; l < src.size(); ++l) {
            CHECK(src[l].informative == (l < 4));
            CHECK(src[l].curve_basis == BasisKind::cosine);
            CHECK(contrast(src[l], t.truth) == doctest::Approx(l < 4 ? 10.0 : 2000.0).epsilon(1e-12));
        }
    }
    SUBCASE("models III and IV basis assignment")
    {
        SyntheticConfig cfg;
        cfg.informative = 3;
        cfg.sources = 6;
        cfg.n_source = 5;
        cfg.model = SyntheticModel::III;
        const Grid dy(257);
        const auto t = generate_target(cfg, dy);
        auto src = generate_sources(cfg, dy, t.truth);
        for (std::size_t l = 0; l < src.size(); ++l)
            CHECK(src[l].curve_basis == (l < 3 ? BasisKind::cosine : BasisKind::haar));
        cfg.model = SyntheticModel::IV;
        src = generate_sources(cfg, dy, t.truth);
        for (const auto& s : src)
            CHECK(s.curve_basis == BasisKind::haar);
    }
}

TEST_CASE("haar-curve responses integrate the cosine slope")
{
    // With no noise, Y must equal the quadrature of w * X on a fine grid.
    SyntheticConfig cfg;
    cfg.model = SyntheticModel::IV;
    cfg.informative = 2;
    cfg.sources = 2;
    cfg.n_source = 4;
    cfg.sigma_eps = 0.0;
    cfg.seed = 3;
    const Grid g(1025);
    const auto t = generate_target(cfg, g);
    const auto src = generate_sources(cfg, g, t.truth);
    for (const auto& s : src) {
        Eigen::VectorXd w(static_cast<Eigen::Index>(g.size()));
        for (std::size_t i = 0; i < g.size(); ++i) {
            double v = 0;
            for (std::size_t k = 1; k <= 50; ++k)
                v += s.coeffs(static_cast<Eigen::Index>(k - 1)) * sqrt2cos(k, g.point(i));
            w(static_cast<Eigen::Index>(i)) = v;
        }
        for (std::size_t i = 0; i < s.data.size(); ++i) {
            const double quad = inner_product(s.data.curve(i), GridFunction(g, w));
            CHECK(std::abs(quad - s.data.response(i)) <= 0.05);
        }
    }
}

TEST_CASE("mise examples")
{
    SyntheticConfig cfg;
    const Grid g(100);
    const auto t = generate_target(cfg, g);
    CHECK(mise(t.truth.slope, t.truth) <= 1e-20);
    const GridFunction shifted(g, t.truth.slope.values().array() + 1.0);
    CHECK(mise(shifted, t.truth) == doctest::Approx(1.0).epsilon(1e-10));
    const GridFunction plus_phi(g, t.truth.slope.values() + cosine_basis(1, g).values());
    CHECK(std::abs(mise(plus_phi, t.truth) - 1.0) <= 5e-4);

    // estimates on another grid are resampled
    const Grid fine(257);
    const auto t2 = generate_target(cfg, fine);
    CHECK(mise(t2.truth.slope, t2.truth) <= 1e-3);
    CHECK(mise(GridFunction::zero(g), t.truth) > 0.0);
}

TEST_CASE("config validation and parsing")
{
    SyntheticConfig cfg;
    cfg.s = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.informative = 21;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.h = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_model("IV") == SyntheticModel::IV);
    CHECK(parse_score_distribution("t5") == ScoreDistribution::scaled_t5);
    CHECK_THROWS_AS(parse_model("V"), ConfigError);
    CHECK(SyntheticConfig{}.default_grid_size() == 100);
}
