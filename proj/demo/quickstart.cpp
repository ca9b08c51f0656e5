// Minimal library walk-through: load prices, pick a Wasserstein radius from
// the data, compare the sample and robust portfolios, then backtest both.
//
//   quickstart [prices.csv]

#include <cstdio>
#include <iostream>

#include "wdro/backtest.hpp"
#include "wdro/metrics.hpp"
#include "wdro/nonrobust.hpp"
#include "wdro/radius.hpp"
#include "wdro/robust.hpp"

#ifndef WDRO_BUNDLED_DATA
#define WDRO_BUNDLED_DATA "data"
#endif

int main(int argc, char** argv) {
    using namespace wdro;
    const std::string path = argc > 1 ? argv[1] : WDRO_BUNDLED_DATA "/synthetic_prices.csv";
    try {
        const auto returns = compute_returns(load_prices(path));
        const auto [in, out] = split(returns, 504);
        const TailSpec tail(0.05);
        const double rho = -0.05;

        RadiusConfig rc;
        rc.kappa = 1;
        const auto radius = select_radius(in, in.mean().mean(), tail, rc);
        std::printf("selected radius delta* = %.5f (eta = %.4f, N = %zu)\n", radius.delta_star, radius.eta_quantile,
                    radius.samples);

        const auto nmc = solve_nmc(in, rho, tail);
        RobustConfig cfg;
        cfg.delta = radius.delta_star;
        cfg.rho = rho;
        cfg.tail = tail;
        const auto rmc = solve_rmc1(in, cfg);

        std::printf("%-8s", "asset");
        for (const auto& t : in.tickers()) std::printf("%8s", t.c_str());
        std::printf("\n");
        for (const auto* rep : {&nmc, &rmc}) {
            std::printf("%-8s", rep->model.c_str());
            for (Eigen::Index i = 0; i < rep->portfolio.weights.size(); ++i)
                std::printf("%8.3f", rep->portfolio.weights(i));
            std::printf("   objective %.5f (%s)\n", rep->objective, to_string(rep->status));
        }

        std::printf("\nbuy at the in-sample solution, rebalance on 5%% drift, 0.2%% costs:\n");
        for (const auto* rep : {&nmc, &rmc}) {
            Vector w = rep->portfolio.weights.cwiseMax(0.0);
            for (Eigen::Index i = 0; i < w.size(); ++i)
                if (w(i) < 1e-6) w(i) = 0.0;
            w /= w.sum();
            const auto bt = run_backtest(StrategySchedule::constant(w), out);
            const auto m = compute_metrics(bt.daily_returns, tail);
            std::printf("%-8s final wealth %.4f  sharpe %.3f  cvar %.4f  rebalances %zu\n", rep->model.c_str(),
                        bt.wealth.back(), m.sharpe_annualized, m.cvar_tail, bt.rebalance_rows.size());
        }
    } catch (const std::exception& e) {
        std::cerr << "quickstart: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
