#include <catch_amalgamated.hpp>

#include <limits>

#include "test_support.hpp"
#include "wdro/backtest.hpp"

using namespace wdro;
using wdro::testing::random_returns;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

ReturnsMatrix dated(Matrix R) {
    std::vector<std::string> dates;
    for (Eigen::Index i = 0; i < R.rows(); ++i) dates.push_back("d" + std::to_string(i));
    return ReturnsMatrix(std::move(R), {}, std::move(dates));
}

}  // namespace

TEST_CASE("drift examples", "[backtest]") {
    CHECK(drift(vec({0.3, 0.7}), vec({0.3, 0.7})) == 0.0);
    // scale of the holdings does not matter
    CHECK_THAT(drift(vec({1.0, 1.0}), vec({0.475, 0.525})), WithinAbs(0.05, 1e-15));
    CHECK_THAT(drift(vec({0.6, 0.4}), vec({0.5, 0.5})), WithinAbs(0.25, 1e-15));
    CHECK(drift(vec({0.0, 2.0}), vec({0.0, 1.0})) == 0.0);
    CHECK(drift(vec({0.0, 2.0}), vec({0.1, 0.9})) == std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(drift(vec({0.0, 0.0}), vec({0.5, 0.5})), InvalidStateError);
    CHECK_THROWS_AS(drift(vec({1.0}), vec({0.5, 0.5})), ArgumentError);
}

TEST_CASE("transaction cost example", "[backtest]") {
    CHECK_THAT(transaction_cost(vec({0.6, 0.5}), vec({0.55, 0.55}), 0.002), WithinAbs(0.0002, 1e-18));
}

TEST_CASE("drift exactly at the threshold does not trigger", "[backtest]") {
    // flat returns keep the weights at (0.5, 0.5); the second target sits at
    // drift 0.05 exactly
    Matrix R(3, 2);
    R << 0.0, 0.0, 0.0, 0.0, 0.0, 0.0;
    StrategySchedule s{{{0, vec({0.5, 0.5})}, {1, vec({0.475, 0.525})}}, 504};
    BacktestOptions opt;
    const auto res = run_backtest(s, dated(R), opt);
    CHECK(res.rebalance_rows.empty());
    opt.threshold = 0.049;
    CHECK(run_backtest(s, dated(R), opt).rebalance_rows.size() == 1);
}

TEST_CASE("identical asset returns never rebalance", "[backtest]") {
    Matrix R(300, 4);
    const auto base = random_returns(300, 1, 2);
    for (int j = 0; j < 4; ++j) R.col(j) = base.values().col(0);
    const auto res = run_backtest(StrategySchedule::constant(vec({0.1, 0.2, 0.3, 0.4})), dated(R));
    CHECK(res.rebalance_rows.empty());
    CHECK(res.total_tc == 0.0);
    double w = 1.0;
    for (Eigen::Index t = 0; t < 300; ++t) w *= 1.0 + base.values()(t, 0);
    CHECK_THAT(res.wealth.back(), WithinRel(w, 1e-12));
}

TEST_CASE("infinite threshold is buy-and-hold", "[backtest]") {
    const auto r = random_returns(250, 3, 5);
    const Vector pi = vec({0.2, 0.5, 0.3});
    BacktestOptions opt;
    opt.threshold = std::numeric_limits<double>::infinity();
    const auto res = run_backtest(StrategySchedule::constant(pi), r, opt);
    CHECK(res.rebalance_rows.empty());
    double expected = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i) {
        double g = 1.0;
        for (Eigen::Index t = 0; t < 250; ++t) g *= 1.0 + r.values()(t, i);
        expected += pi(i) * g;
    }
    CHECK_THAT(res.wealth.back(), WithinRel(expected, 1e-12));
    REQUIRE(res.wealth.size() == 251);
    REQUIRE(res.daily_returns.size() == 250);
    for (std::size_t t = 0; t < 250; ++t)
        CHECK_THAT(res.wealth[t + 1], WithinRel(res.wealth[t] * (1.0 + res.daily_returns[t]), 1e-13));
}

TEST_CASE("hand-checked single rebalance", "[backtest]") {
    // day 0: asset 1 gains 20%, asset 2 flat -> holdings (0.6, 0.5), drift 0.1
    Matrix R(2, 2);
    R << 0.2, 0.0, 0.0, 0.0;
    const auto r = dated(R);
    BacktestOptions opt;
    const auto res = run_backtest(StrategySchedule::constant(vec({0.5, 0.5})), r, opt);
    REQUIRE(res.rebalance_rows == std::vector<std::size_t>{1});
    CHECK(res.rebalance_dates == std::vector<std::string>{"d0"});
    CHECK_THAT(res.rebalance_costs[0], WithinAbs(0.0002, 1e-15));
    CHECK_THAT(res.wealth[1], WithinAbs(1.1 - 0.0002, 1e-15));
    CHECK_THAT(res.weights_path(1, 0), WithinAbs(0.5, 1e-15));

    opt.cost_mode = CostMode::report_only;
    const auto rep = run_backtest(StrategySchedule::constant(vec({0.5, 0.5})), r, opt);
    CHECK_THAT(rep.total_tc, WithinAbs(0.0002, 1e-15));
    CHECK_THAT(rep.wealth[1], WithinAbs(1.1, 1e-15));
}

TEST_CASE("costs only subtract", "[backtest][property]") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto r = random_returns(500, 4, seed, 0.02);
        const auto sched = StrategySchedule::constant(vec({0.25, 0.25, 0.25, 0.25}));
        BacktestOptions with, without;
        without.charge_tc = false;
        const auto a = run_backtest(sched, r, with), b = run_backtest(sched, r, without);
        REQUIRE_FALSE(a.rebalance_rows.empty());
        CHECK(b.total_tc == 0.0);
        for (std::size_t t = 0; t < a.wealth.size(); ++t) CHECK(a.wealth[t] <= b.wealth[t]);
        // pro-rata deduction keeps the weights, so the triggers coincide
        CHECK(a.rebalance_rows == b.rebalance_rows);
        BacktestOptions rep;
        rep.cost_mode = CostMode::report_only;
        const auto c = run_backtest(sched, r, rep);
        CHECK(c.rebalance_rows == a.rebalance_rows);
        CHECK(c.wealth == b.wealth);
        for (std::size_t k = 1; k < a.rebalance_rows.size(); ++k) CHECK(a.rebalance_rows[k] > a.rebalance_rows[k - 1]);
    }
}

TEST_CASE("rebalance count is non-increasing in the threshold", "[backtest][property]") {
    for (std::uint64_t seed : {4u, 5u, 6u}) {
        const auto r = random_returns(400, 3, seed, 0.02);
        const auto sched = StrategySchedule::constant(vec({0.3, 0.3, 0.4}));
        std::size_t prev = std::numeric_limits<std::size_t>::max();
        for (double th : {0.01, 0.05, 0.2}) {
            BacktestOptions opt;
            opt.threshold = th;
            const auto n = run_backtest(sched, r, opt).rebalance_rows.size();
            CHECK(n <= prev);
            prev = n;
        }
    }
}

TEST_CASE("schedules switch targets at their start rows", "[backtest]") {
    StrategySchedule s{{{0, vec({1.0, 0.0})}, {5, vec({0.0, 1.0})}}, 504};
    CHECK(s.at(4)(0) == 1.0);
    CHECK(s.at(5)(1) == 1.0);
    Matrix R = Matrix::Constant(10, 2, 0.001);
    const auto res = run_backtest(s, dated(R));
    // zero weight with a nonzero target forces the switch at row 5
    CHECK(res.rebalance_rows == std::vector<std::size_t>{5});
    CHECK(res.weights_path(9, 1) == 1.0);
}

TEST_CASE("backtest input validation", "[backtest]") {
    const auto r = random_returns(20, 2, 1);
    CHECK_THROWS_AS(run_backtest(StrategySchedule::constant(vec({0.3, 0.3, 0.4})), r), ArgumentError);
    CHECK_THROWS_AS(run_backtest(StrategySchedule::constant(vec({0.3, 0.3})), r), ArgumentError);
    StrategySchedule late{{{3, vec({0.5, 0.5})}}, 504};
    CHECK_THROWS_AS(run_backtest(late, r), ArgumentError);
    StrategySchedule unordered{{{0, vec({0.5, 0.5})}, {0, vec({0.5, 0.5})}}, 504};
    CHECK_THROWS_AS(run_backtest(unordered, r), ArgumentError);
    BacktestOptions opt;
    opt.threshold = 0.0;
    CHECK_THROWS_AS(run_backtest(StrategySchedule::constant(vec({0.5, 0.5})), r, opt), ArgumentError);
    opt = {};
    opt.tc_rate = -1.0;
    CHECK_THROWS_AS(run_backtest(StrategySchedule::constant(vec({0.5, 0.5})), r, opt), ArgumentError);
    // total loss cannot reach the simulation: the returns container rejects it
    Matrix crash(2, 2);
    crash << -1.0, -1.0, 0.0, 0.0;
    CHECK_THROWS(dated(crash));
}

TEST_CASE("adaptive targets are estimated at the start and at each trigger", "[backtest]") {
    const auto r = random_returns(300, 2, 9, 0.02);
    std::vector<std::size_t> calls;
    auto estimate = [&](std::size_t t) {
        calls.push_back(t);
        return vec({0.5, 0.5});
    };
    const auto res = run_backtest(estimate, r);
    REQUIRE(calls.size() == res.rebalance_rows.size() + 1);
    CHECK(calls.front() == 0);
    for (std::size_t k = 0; k < res.rebalance_rows.size(); ++k) CHECK(calls[k + 1] == res.rebalance_rows[k]);
    // a constant estimator reproduces the static schedule
    const auto fixed = run_backtest(StrategySchedule::constant(vec({0.5, 0.5})), r);
    CHECK(fixed.wealth == res.wealth);

    auto bad = [](std::size_t) { return vec({0.7, 0.7}); };
    CHECK_THROWS_AS(run_backtest(bad, r), ArgumentError);
}
