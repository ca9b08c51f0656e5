#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "reference_table.hpp"
#include "wdro/metrics.hpp"

using namespace wdro;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> gaussian_series(std::size_t n, std::uint64_t seed, double mu = 5e-4, double sd = 0.01) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(mu, sd);
    std::vector<double> out(n);
    for (auto& x : out) x = z(rng);
    return out;
}

}  // namespace

TEST_CASE("published Sharpe and mean/CVaR arithmetic", "[metrics]") {
    CHECK_THAT(annualized_sharpe(0.000414214, 0.010989046), WithinAbs(0.598363528, 1e-6));
    CHECK_THAT(0.000414214 / 0.029964765, WithinAbs(0.013823368, 1e-8));
}

TEST_CASE("reference table: 252-day annualization reproduces every Sharpe", "[metrics][regression]") {
    const auto rows = wdro::testing::load_reference_table();
    REQUIRE(rows.size() == 50);
    double worst252 = 0.0, worst250 = 0.0;
    for (const auto& r : rows) {
        worst252 = std::max(worst252, std::abs(annualized_sharpe(r.mean, r.std) - r.sharpe));
        worst250 = std::max(worst250, std::abs(std::sqrt(250.0) * r.mean / r.std - r.sharpe));
    }
    CHECK(worst252 <= 1e-5);
    // the alternative convention is off by orders of magnitude more
    CHECK(worst250 > 1e-3);
}

TEST_CASE("reference table: mean/CVaR ratios", "[metrics][regression]") {
    // one printed ratio (no costs, 2009-06-01, BMC) disagrees with its own
    // inputs by 4e-4; every other row matches to print precision
    std::vector<std::string> off;
    for (const auto& r : wdro::testing::load_reference_table())
        if (std::abs(r.mean / r.cvar - r.mean_over_cvar) > 1e-7) off.push_back(r.costs + " " + r.start + " " + r.strategy);
    CHECK(off == std::vector<std::string>{"no_tc 2009-06-01 BMC"});
}

TEST_CASE("cumulative wealth", "[metrics]") {
    const auto w = cumulative_wealth({0.1, -0.1});
    REQUIRE(w.wealth.size() == 3);
    CHECK(w.wealth[0] == 1.0);
    CHECK_THAT(w.wealth[1], WithinAbs(1.1, 1e-15));
    CHECK_THAT(w.wealth[2], WithinAbs(0.99, 1e-15));
    CHECK_FALSE(w.bankrupt);

    const auto flat = cumulative_wealth(std::vector<double>(10, 0.0), 2.5);
    for (double x : flat.wealth) CHECK(x == 2.5);

    const auto comp = cumulative_wealth(std::vector<double>(100, 0.003));
    CHECK_THAT(comp.wealth.back(), WithinRel(std::pow(1.003, 100), 1e-13));

    const auto bust = cumulative_wealth({0.1, -1.0, 0.2});
    CHECK(bust.bankrupt);
    CHECK(bust.wealth.size() == 2);
}

TEST_CASE("constant positive returns", "[metrics]") {
    const std::vector<double> r(300, 0.001);
    const auto m = compute_metrics(r);
    CHECK(m.max_drawdown == 0.0);
    CHECK(m.std_daily == 0.0);
    CHECK_FALSE(m.sharpe_defined);
    CHECK(std::isinf(m.sharpe_annualized));
    CHECK_THAT(m.cvar_tail, WithinAbs(-0.001, 1e-15));
    REQUIRE(m.rolling_sharpe.size() == 49);
    for (double s : m.rolling_sharpe) CHECK(s == m.rolling_sharpe.front());
    CHECK(std::isnan(annualized_sharpe(0.0, 0.0)));
}

TEST_CASE("metrics on a random series", "[metrics]") {
    const auto r = gaussian_series(600, 3);
    const auto m = compute_metrics(r, TailSpec(0.05));
    double s = 0.0;
    for (double x : r) s += x;
    const double mean = s / 600.0;
    double ss = 0.0;
    for (double x : r) ss += (x - mean) * (x - mean);
    CHECK_THAT(m.mean_daily, WithinRel(mean, 1e-12));
    CHECK_THAT(m.std_daily, WithinRel(std::sqrt(ss / 600.0), 1e-12));
    CHECK_THAT(m.sharpe_annualized, WithinRel(std::sqrt(252.0) * mean / std::sqrt(ss / 600.0), 1e-12));
    // 5% of 600 is 30 whole observations: CVaR is the mean of the 30 worst losses
    std::vector<double> losses;
    for (double x : r) losses.push_back(-x);
    std::sort(losses.rbegin(), losses.rend());
    double tail = 0.0;
    for (int i = 0; i < 30; ++i) tail += losses[static_cast<std::size_t>(i)];
    CHECK_THAT(m.cvar_tail, WithinRel(tail / 30.0, 1e-12));
    CHECK_THAT(m.mean_over_cvar, WithinRel(m.mean_daily / m.cvar_tail, 1e-15));
    CHECK(m.max_drawdown >= 0.0);
    CHECK(m.max_drawdown <= 1.0);
    CHECK(m.rolling_sharpe.size() == 600 - 252 + 1);
    const auto first = compute_metrics(std::vector<double>(r.begin(), r.begin() + 252));
    CHECK_THAT(m.rolling_sharpe.front(), WithinRel(first.sharpe_annualized, 1e-12));
}

TEST_CASE("drawdown examples and invariance", "[metrics][property]") {
    CHECK_THAT(max_drawdown({1.0, 2.0, 1.0, 1.5}), WithinAbs(0.5, 1e-15));
    CHECK(max_drawdown({1.0, 1.1, 1.2}) == 0.0);
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        auto r = gaussian_series(400, seed, 0.0, 0.02);
        const auto base = compute_metrics(r);
        const auto path = cumulative_wealth(r).wealth;
        const double peak = *std::max_element(path.begin(), path.end());
        r.push_back(peak / path.back() * 1.01 - 1.0);  // new all-time high
        CHECK(compute_metrics(r).max_drawdown == base.max_drawdown);
    }
}

TEST_CASE("short series", "[metrics]") {
    CHECK_THROWS_AS(compute_metrics({0.01}), ArgumentError);
    CHECK(compute_metrics({0.01, 0.02}).rolling_sharpe.empty());
}
