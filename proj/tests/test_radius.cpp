#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "test_support.hpp"
#include "wdro/radius.hpp"

using namespace wdro;
using wdro::testing::random_returns;
using wdro::testing::separated_gaussian;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double mid_rho(const ReturnsMatrix& r) {
    const Vector m = r.mean();
    return 0.5 * (m.minCoeff() + m.maxCoeff());
}

ReturnsMatrix replicate(const ReturnsMatrix& r, int times) {
    return ReturnsMatrix(r.values().replicate(times, 1));
}

}  // namespace

TEST_CASE("empirical quantile is left-continuous", "[radius]") {
    CHECK(empirical_quantile(std::vector<double>{4, 1, 3, 2}, 0.5) == 2.0);
    CHECK(empirical_quantile(std::vector<double>{4, 1, 3, 2}, 0.51) == 3.0);
    CHECK(empirical_quantile(std::vector<double>{4, 1, 3, 2}, 1.0) == 4.0);
    CHECK(empirical_quantile(std::vector<double>{7}, 0.95) == 7.0);
    CHECK_THROWS_AS(empirical_quantile(std::vector<double>{}, 0.5), ArgumentError);
}

TEST_CASE("Z covariance examples", "[radius]") {
    Matrix R(1, 2);
    R << 1.0, 0.0;
    const Matrix C = ztilde_covariance(ReturnsMatrix(R), 0.0, 0.0, TailSpec(0.5));
    CHECK((C - Matrix{{4.0, 0.0}, {0.0, 0.0}}).cwiseAbs().maxCoeff() == 0.0);

    const Matrix Z = ztilde_covariance(ReturnsMatrix(Matrix::Zero(5, 3)), 2.0, 0.0, TailSpec(0.05));
    CHECK(Z.cwiseAbs().maxCoeff() == 0.0);

    const auto r = random_returns(200, 4, 3);
    const Matrix S = ztilde_covariance(r, -3.2, 0.7, TailSpec(0.05));
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(S).eigenvalues().minCoeff() >= -1e-12);
    // independent evaluation of E[v v'] one sample at a time
    Matrix ref = Matrix::Zero(4, 4);
    for (std::size_t i = 0; i < r.samples(); ++i) {
        const Vector v = ((1.0 / 0.05 + 3.2) * r.row(i).transpose().cwiseAbs()).array() + 0.7;
        ref += v * v.transpose();
    }
    ref /= 200.0;
    CHECK((S - ref).cwiseAbs().maxCoeff() <= 1e-12 * ref.cwiseAbs().maxCoeff());
}

TEST_CASE("Monte-Carlo bound samples", "[radius]") {
    RadiusConfig cfg;
    cfg.seed = 11;
    SECTION("identity covariance gives chi(2) norms") {
        const Vector s = sample_rwp_bound(cfg, Matrix::Identity(2, 2), 0.0);
        REQUIRE(s.size() == 10000);
        const double mean = s.mean();
        const double sd = std::sqrt((s.array() - mean).square().mean());
        CHECK(std::abs(mean - std::sqrt(M_PI / 2.0)) <= 3.0 * sd / 100.0);
    }
    SECTION("kappa 2 divides the squared norm by |c|") {
        cfg.kappa = 2;
        const Vector s = sample_rwp_bound(cfg, Matrix::Identity(2, 2), -2.0);
        const double mean = s.mean();
        const double sd = std::sqrt((s.array() - mean).square().mean());
        CHECK(std::abs(mean - 1.0) <= 3.0 * sd / 100.0);  // E[chi2_2] / 2
        CHECK_THROWS_AS(sample_rwp_bound(cfg, Matrix::Identity(2, 2), 1e-12), DegenerateError);
    }
    SECTION("zero covariance gives zeros") {
        CHECK(sample_rwp_bound(cfg, Matrix::Zero(3, 3), 0.0).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("deterministic for a seed, independent of threads") {
        const Matrix C = (Matrix(2, 2) << 2.0, 0.5, 0.5, 1.0).finished();
        RadiusConfig one = cfg, many = cfg;
        one.threads = 1;
        many.threads = 6;
        const Vector a = sample_rwp_bound(one, C, 0.0), b = sample_rwp_bound(many, C, 0.0);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
        RadiusConfig other = cfg;
        other.seed = 12;
        CHECK((a - sample_rwp_bound(other, C, 0.0)).cwiseAbs().maxCoeff() > 0.0);
    }
    SECTION("non-PSD covariance is rejected") {
        CHECK_THROWS_AS(sample_rwp_bound(cfg, Matrix{{1.0, 0.0}, {0.0, -0.1}}, 0.0), CovarianceError);
    }
    SECTION("config validation") {
        RadiusConfig bad = cfg;
        bad.mc_samples = 99;
        CHECK_THROWS_AS(sample_rwp_bound(bad, Matrix::Identity(2, 2), 0.0), ArgumentError);
        bad = cfg;
        bad.confidence = 1.0;
        CHECK_THROWS_AS(bad.validate(), ArgumentError);
        bad = cfg;
        bad.kappa = 3;
        CHECK_THROWS_AS(bad.validate(), ArgumentError);
    }
}

TEST_CASE("kappa 2 constant", "[radius]") {
    // A = pi'R + a for R = (-0.03, 0.00, 0.01, 0.02) with pi = 1, a = 0
    Matrix R(4, 1);
    R << -0.03, 0.0, 0.01, 0.02;
    const ReturnsMatrix r(R);
    const Vector pi = Vector::Ones(1);
    const TailSpec tail(0.25);
    // A <= 0 for two samples (the tie at zero counts as negative)
    const double l1 = 1.5;
    const double expected = 0.5 * (-l1) + 0.5 * (-(1.0 + 0.25 * l1) / 0.25);
    CHECK_THAT(kappa2_constant(pi, 0.0, r, l1, tail), WithinAbs(expected, 1e-15));
}

TEST_CASE("radius scales exactly under row replication", "[radius][property]") {
    const auto r = separated_gaussian(300, 5);
    const double rho = mid_rho(r);
    const TailSpec tail(0.05);
    for (int kappa : {1, 2}) {
        RadiusConfig cfg;
        cfg.kappa = kappa;
        cfg.seed = 9;
        const auto base = select_radius(r, rho, tail, cfg);
        const auto big = select_radius(replicate(r, 4), rho, tail, cfg);
        REQUIRE(base.smooth_converged);
        CHECK_THAT(big.eta_quantile, WithinRel(base.eta_quantile, 1e-9));
        CHECK_THAT(big.delta_star, WithinRel(base.delta_star * (kappa == 1 ? 0.5 : 0.25), 1e-9));
        if (kappa == 2) CHECK(base.c_negative == (base.c_constant < 0));
    }
}

TEST_CASE("radius is invariant to row order", "[radius][property]") {
    const auto r = separated_gaussian(250, 6);
    std::vector<Eigen::Index> perm(250);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(6));
    Matrix P(250, 2);
    for (Eigen::Index i = 0; i < 250; ++i) P.row(i) = r.values().row(perm[static_cast<std::size_t>(i)]);
    RadiusConfig cfg;
    cfg.seed = 4;
    const double rho = mid_rho(r);
    const auto a = select_radius(r, rho, TailSpec(0.05), cfg);
    const auto b = select_radius(ReturnsMatrix(P), rho, TailSpec(0.05), cfg);
    CHECK_THAT(b.delta_star, WithinRel(a.delta_star, 1e-9));
}

TEST_CASE("radius grows with confidence", "[radius][property]") {
    const auto r = separated_gaussian(400, 7);
    const double rho = mid_rho(r);
    for (int kappa : {1, 2}) {
        double prev = -1.0;
        for (double conf : {0.5, 0.8, 0.9, 0.95, 0.99}) {
            RadiusConfig cfg;
            cfg.kappa = kappa;
            cfg.confidence = conf;
            cfg.seed = 2;
            const auto res = select_radius(r, rho, TailSpec(0.05), cfg);
            CHECK(res.delta_star >= prev);
            prev = res.delta_star;
        }
    }
}

TEST_CASE("quantile estimates from two seeds agree within the order-statistic error", "[radius][property]") {
    const auto r = separated_gaussian(500, 8);
    const double rho = mid_rho(r);
    RadiusConfig cfg;
    cfg.seed = 100;
    const auto a = select_radius(r, rho, TailSpec(0.05), cfg);
    cfg.seed = 101;
    const auto b = select_radius(r, rho, TailSpec(0.05), cfg);
    // standard error of the 0.95 order statistic from the spacing of the
    // sorted draws: sqrt(p (1 - p) M) ranks on either side
    cfg.seed = 100;
    Vector draws = sample_rwp_bound(cfg, a.covariance, a.c_constant);
    std::sort(draws.data(), draws.data() + draws.size());
    const double M = 10000, p = 0.95;
    const auto m = static_cast<Eigen::Index>(std::ceil(std::sqrt(p * (1 - p) * M)));
    const auto k = static_cast<Eigen::Index>(std::ceil(p * M)) - 1;
    const double se = (draws(k + m) - draws(k - m)) / 2.0;
    CHECK(std::abs(a.eta_quantile - b.eta_quantile) < 4.0 * se);
    CHECK(a.eta_quantile != b.eta_quantile);
}

TEST_CASE("radius decays with the sample size", "[radius][property]") {
    const auto full = separated_gaussian(2000, 1);
    for (int kappa : {1, 2}) {
        std::vector<double> x, y;
        for (int N : {250, 500, 1000, 2000}) {
            RadiusConfig cfg;
            cfg.kappa = kappa;
            cfg.seed = 3;
            const auto part = full.slice(0, static_cast<std::size_t>(N));
            const auto res = select_radius(part, mid_rho(part), TailSpec(0.05), cfg);
            x.push_back(std::log(N));
            y.push_back(std::log(res.delta_star));
        }
        const double mx = std::accumulate(x.begin(), x.end(), 0.0) / 4, my = std::accumulate(y.begin(), y.end(), 0.0) / 4;
        double sxy = 0, sxx = 0;
        for (int i = 0; i < 4; ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
        }
        const double slope = sxy / sxx;
        if (kappa == 1) {
            CHECK(slope >= -0.65);
            CHECK(slope <= -0.35);
        } else {
            CHECK(slope >= -1.25);
            CHECK(slope <= -0.75);
        }
    }
}

TEST_CASE("select_radius propagates degenerate inputs", "[radius]") {
    const auto r = random_returns(100, 3, 4);
    const Vector m = r.mean();
    CHECK_THROWS_AS(select_radius(r, m.maxCoeff() + 0.01, TailSpec(0.05), RadiusConfig{}), ArgumentError);
}
