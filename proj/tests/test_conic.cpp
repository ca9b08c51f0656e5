#include <catch_amalgamated.hpp>

#include <random>

#include "wdro/conic.hpp"

using namespace wdro;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// KKT check independent of the solver internals.
void require_kkt(const ConicProblem& P, const ConicSolution& s, double tol) {
    REQUIRE(s.status == ConicStatus::optimal);
    const Eigen::VectorXd stat = P.c + Eigen::VectorXd(P.A.transpose() * s.y) + Eigen::VectorXd(P.G.transpose() * s.z);
    CHECK(stat.lpNorm<Eigen::Infinity>() < tol);
    if (P.A.rows() > 0) CHECK((P.A * s.x - P.b).lpNorm<Eigen::Infinity>() < tol);
    CHECK((P.G * s.x + s.s - P.h).lpNorm<Eigen::Infinity>() < tol);
    CHECK(std::abs(s.s.dot(s.z)) < tol);
    for (int i = 0; i < P.nonneg; ++i) {
        CHECK(s.s(i) > -tol);
        CHECK(s.z(i) > -tol);
    }
    int off = P.nonneg;
    for (int d : P.soc) {
        CHECK(s.s(off) - s.s.segment(off + 1, d - 1).norm() > -tol);
        CHECK(s.z(off) - s.z.segment(off + 1, d - 1).norm() > -tol);
        off += d;
    }
}

}  // namespace

TEST_CASE("NT scaling maps z to s and inverts cleanly", "[conic]") {
    using namespace conic_detail;
    const Cones K(2, {3, 4});
    std::mt19937_64 rng(7);
    std::normal_distribution<double> N01;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd s(K.m), z(K.m);
        for (int i = 0; i < K.m; ++i) {
            s(i) = N01(rng);
            z(i) = N01(rng);
        }
        for (int i = 0; i < K.l; ++i) {
            s(i) = std::abs(s(i)) + 0.1;
            z(i) = std::abs(z(i)) + 0.1;
        }
        for (std::size_t k = 0; k < K.q.size(); ++k) {
            const int o = K.start[k], d = K.q[k];
            s(o) = s.segment(o + 1, d - 1).norm() + 0.3;
            z(o) = z.segment(o + 1, d - 1).norm() + 0.2;
        }
        const auto W = Scaling::compute(K, s, z);
        const Eigen::VectorXd Wz = W.apply(K, z, false);
        CHECK((W.apply(K, Wz, false) - s).norm() < 1e-10 * (1 + s.norm()));
        CHECK((W.apply(K, s, true) - Wz).norm() < 1e-10 * (1 + s.norm()));
        const Eigen::VectorXd v = Eigen::VectorXd::Random(K.m);
        CHECK((W.apply(K, W.apply(K, v, true), false) - v).norm() < 1e-12);
        for (std::size_t k = 0; k < K.q.size(); ++k) {
            const int o = K.start[k], d = K.q[k];
            const Eigen::VectorXd Wv = W.apply(K, v, false).segment(o, d);
            CHECK((W.soc_square(k) * v.segment(o, d) - W.apply(K, W.apply(K, v, false), false).segment(o, d)).norm() <
                  1e-10);
            (void)Wv;
        }
    }
}

TEST_CASE("Jordan division inverts the product", "[conic]") {
    using namespace conic_detail;
    const Cones K(1, {3});
    Eigen::VectorXd lam(4), v(4);
    lam << 2.0, 3.0, 0.5, -0.4;
    v << 0.3, -1.0, 2.0, 0.7;
    const auto u = jordan_divide(K, lam, v);
    CHECK((jordan_product(K, lam, u) - v).norm() < 1e-13);
}

TEST_CASE("Step length stops at the cone boundary", "[conic]") {
    using namespace conic_detail;
    const Cones K(0, {3});
    Eigen::VectorXd x(3), d(3);
    x << 2.0, 0.0, 0.0;
    d << -1.0, 1.0, 0.0;
    // (2 - a)^2 = a^2  ->  a = 1
    CHECK_THAT(max_step(K, x, d, 10.0), WithinAbs(1.0, 1e-14));
    d << 1.0, 0.0, 0.0;
    CHECK(max_step(K, x, d, 10.0) == 10.0);
}

TEST_CASE("Small LP hits the known vertex", "[conic]") {
    // max x1 + x2  s.t.  x1 + 2 x2 <= 4,  3 x1 + x2 <= 6,  x >= 0
    ModelBuilder mb;
    const int x = mb.add_variables(2);
    mb.set_cost(x, -1);
    mb.set_cost(x + 1, -1);
    mb.add_nonneg(LinearExpr(4.0).add(x, -1).add(x + 1, -2));
    mb.add_nonneg(LinearExpr(6.0).add(x, -3).add(x + 1, -1));
    mb.add_nonneg(LinearExpr::var(x));
    mb.add_nonneg(LinearExpr::var(x + 1));
    const auto P = mb.build();
    const auto sol = solve_conic(P);
    require_kkt(P, sol, 1e-8);
    CHECK_THAT(sol.x(0), WithinAbs(1.6, 1e-8));
    CHECK_THAT(sol.x(1), WithinAbs(1.2, 1e-8));
    CHECK_THAT(sol.pobj, WithinAbs(-2.8, 1e-8));
}

TEST_CASE("Distance to a line via a second-order cone", "[conic]") {
    // min t  s.t.  t >= ||x - (3,4)||,  x1 + x2 = 0
    ModelBuilder mb;
    const int x = mb.add_variables(2);
    const int t = mb.add_variables(1);
    mb.set_cost(t, 1.0);
    mb.add_equality(LinearExpr::var(x).add(x + 1, 1.0));
    mb.add_soc({LinearExpr::var(t), LinearExpr(-3.0).add(x, 1.0), LinearExpr(-4.0).add(x + 1, 1.0)});
    const auto P = mb.build();
    const auto sol = solve_conic(P);
    require_kkt(P, sol, 1e-8);
    CHECK_THAT(sol.pobj, WithinAbs(7.0 / std::sqrt(2.0), 1e-8));
    CHECK_THAT(sol.x(0), WithinAbs(-0.5, 1e-7));
}

TEST_CASE("Infeasible and unbounded problems are certified", "[conic]") {
    {
        ModelBuilder mb;
        const int x = mb.add_variables(1);
        mb.set_cost(x, 1.0);
        mb.add_nonneg(LinearExpr(-1.0).add(x, 1.0));  // x >= 1
        mb.add_nonneg(LinearExpr::var(x, -1.0));      // x <= 0
        CHECK(solve_conic(mb.build()).status == ConicStatus::infeasible);
    }
    {
        ModelBuilder mb;
        const int x = mb.add_variables(2);
        mb.set_cost(x, -1.0);
        mb.add_nonneg(LinearExpr::var(x));
        mb.add_nonneg(LinearExpr::var(x + 1));
        mb.add_equality(LinearExpr(-1.0).add(x + 1, 1.0));
        CHECK(solve_conic(mb.build()).status == ConicStatus::unbounded);
    }
}

TEST_CASE("Random feasible conic programs satisfy KKT", "[conic]") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> N01;
    for (int trial = 0; trial < 25; ++trial) {
        // min c'x  s.t.  1'x = 1, x >= -1, ||x - x0|| <= 3 with a random cost.
        const int n = 2 + trial % 5;
        ModelBuilder mb;
        const int x = mb.add_variables(n);
        LinearExpr budget(-1.0);
        std::vector<LinearExpr> cone{LinearExpr(3.0)};
        for (int j = 0; j < n; ++j) {
            mb.set_cost(x + j, N01(rng));
            budget.add(x + j, 1.0);
            mb.add_nonneg(LinearExpr(1.0).add(x + j, 1.0));
            cone.push_back(LinearExpr(-0.2 * N01(rng)).add(x + j, 1.0));
        }
        mb.add_equality(budget);
        mb.add_soc(cone);
        const auto P = mb.build();
        require_kkt(P, solve_conic(P), 1e-7);
    }
}
