#include <catch_amalgamated.hpp>

#include <random>

#include "test_support.hpp"
#include "wdro/oracle.hpp"

using namespace wdro;
using Catch::Matchers::WithinAbs;

namespace {

Matrix random_atoms(std::mt19937_64& rng, int N, int n) {
    std::normal_distribution<double> Z;
    Matrix R(N, n);
    for (int i = 0; i < R.size(); ++i) R(i) = 0.05 * Z(rng);
    return R;
}

Vector random_weights(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Vector pi(n);
    if (n == 1) {
        pi << 1.0;
    } else {
        const double w = U(rng);
        pi << w, 1.0 - w;
    }
    return pi;
}

// Dual of the kappa = 2 inner problem, minimized over gamma directly:
//   min_gamma gamma delta + mean(max(l_i + ||pi||^2 / (4 gamma), 0)).
double quadratic_cost_dual(const Vector& ell, double p, double delta) {
    auto f = [&](double lg) {
        const double g = std::exp(lg);
        return g * delta + (ell.array() + p * p / (4.0 * g)).max(0.0).mean();
    };
    return wdro::testing::golden_min(f, -30.0, 30.0, 1e-12);
}

}  // namespace

TEST_CASE("zero radius returns the empirical expectation", "[oracle]") {
    std::mt19937_64 rng(2);
    const Matrix R = random_atoms(rng, 3, 2);
    const Vector pi = random_weights(rng, 2);
    const TinyInstance inst(R, 0.0, 1);
    const Vector ell = -(R * pi).array() - 0.01;
    CHECK(brute_force_worst_plus(inst, pi, 0.01) == ell.cwiseMax(0.0).mean());
    CHECK(brute_force_worst_mean(inst, pi) == (R * pi).mean());
}

TEST_CASE("single active atom moves straight along the ray", "[oracle]") {
    Matrix R(1, 2);
    R << -0.03, 0.01;
    Vector pi(2);
    pi << 0.6, 0.4;
    const double a = 0.0;
    const double ell = -R.row(0).dot(pi) - a;  // 0.014 >= 0
    REQUIRE(ell >= 0);
    for (double d : {0.01, 0.05, 0.1}) {
        const TinyInstance inst(R, d, 1);
        CHECK_THAT(brute_force_worst_plus(inst, pi, a), WithinAbs(ell + d * pi.norm(), 1e-9));
    }
}

TEST_CASE("kappa 1 oracle matches the norm-penalty dual", "[oracle][property]") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> D(0.001, 0.1), A(-0.05, 0.05);
    int active_cases = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const int N = 1 + trial % 3, n = 1 + (trial / 3) % 2;
        const Matrix R = random_atoms(rng, N, n);
        const Vector pi = random_weights(rng, n);
        const double delta = D(rng);
        double a = A(rng);
        if (trial < 20) a = (-(R * pi)).minCoeff() - 0.01;  // every atom active
        const Vector ell = -(R * pi).array() - a;
        const double dual = ell.cwiseMax(0.0).mean() + delta * pi.norm();
        const double primal = brute_force_worst_plus(TinyInstance(R, delta, 1), pi, a);
        CHECK(primal <= dual + 1e-12);
        CHECK_THAT(primal, WithinAbs(dual, 1e-4));
        if (ell.minCoeff() >= 0) ++active_cases;
    }
    CHECK(active_cases >= 20);
}

TEST_CASE("kappa 2 oracle matches the quadratic-cost dual", "[oracle][property]") {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> D(0.0005, 0.01), A(-0.05, 0.05);
    for (int trial = 0; trial < 40; ++trial) {
        const int N = 1 + trial % 3, n = 1 + (trial / 3) % 2;
        const Matrix R = random_atoms(rng, N, n);
        const Vector pi = random_weights(rng, n);
        const double delta = D(rng), a = A(rng);
        const Vector ell = -(R * pi).array() - a;
        const double dual = quadratic_cost_dual(ell, pi.norm(), delta);
        const double primal = brute_force_worst_plus(TinyInstance(R, delta, 2), pi, a);
        CHECK(primal <= dual + 1e-9);
        CHECK_THAT(primal, WithinAbs(dual, 1e-4));
    }
}

TEST_CASE("worst-case mean oracle reproduces the shrinkage formulas", "[oracle][property]") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> D(0.001, 0.1);
    for (int trial = 0; trial < 30; ++trial) {
        const int N = 1 + trial % 3, n = 1 + (trial / 3) % 2;
        const Matrix R = random_atoms(rng, N, n);
        const Vector pi = random_weights(rng, n);
        const double delta = D(rng);
        const double mean = (R * pi).mean();
        CHECK_THAT(brute_force_worst_mean(TinyInstance(R, delta, 1), pi), WithinAbs(mean - delta * pi.norm(), 1e-9));
        CHECK_THAT(brute_force_worst_mean(TinyInstance(R, delta, 2), pi),
                   WithinAbs(mean - std::sqrt(delta) * pi.norm(), 1e-7));
    }
    Matrix R(2, 2);
    R << 0.1, -0.2, 0.3, 0.0;
    CHECK(brute_force_worst_mean(TinyInstance(R, 0.05, 2), Vector::Zero(2)) == 0.0);
}

TEST_CASE("oracle values grow with the radius", "[oracle][property]") {
    std::mt19937_64 rng(24);
    const Matrix R = random_atoms(rng, 3, 2);
    const Vector pi = random_weights(rng, 2);
    for (int kappa : {1, 2}) {
        double prev_plus = -1.0, prev_mean = 1e9;
        for (double d : {0.0, 0.001, 0.01, 0.05, 0.1}) {
            const TinyInstance inst(R, d, kappa);
            const double wp = brute_force_worst_plus(inst, pi, 0.0);
            const double wm = brute_force_worst_mean(inst, pi);
            CHECK(wp >= prev_plus - 1e-12);
            CHECK(wm <= prev_mean + 1e-12);
            prev_plus = wp;
            prev_mean = wm;
        }
    }
}

TEST_CASE("tiny instance validation", "[oracle]") {
    CHECK_THROWS_AS(TinyInstance(Matrix::Zero(4, 2), 0.1, 1), ArgumentError);
    CHECK_THROWS_AS(TinyInstance(Matrix::Zero(2, 3), 0.1, 1), ArgumentError);
    CHECK_THROWS_AS(TinyInstance(Matrix::Zero(2, 2), -0.1, 1), ArgumentError);
    CHECK_THROWS_AS(TinyInstance(Matrix::Zero(2, 2), 0.1, 3), ArgumentError);
}
