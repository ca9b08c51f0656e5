#pragma once

// Threshold-rebalancing simulation: hold target weights, let positions
// evolve with asset returns, and trade back to target only when some
// normalized weight has drifted more than `threshold` (relative) from it.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "wdro/error.hpp"
#include "wdro/market_data.hpp"

namespace wdro {

/// Largest relative gap |w_i - pi_i| / w_i between normalized holdings w and
/// target pi. A zero position with a nonzero target forces a rebalance.
inline double drift(const Vector& holdings, const Vector& target) {
    if (holdings.size() != target.size()) throw ArgumentError("holdings and target dimensions differ");
    const double total = holdings.sum();
    if (!(total > 0.0)) throw InvalidStateError("portfolio value is not positive");
    double worst = 0.0;
    for (Eigen::Index i = 0; i < holdings.size(); ++i) {
        const double w = holdings(i) / total;
        if (w == 0.0) {
            if (target(i) != 0.0) return std::numeric_limits<double>::infinity();
            continue;
        }
        worst = std::max(worst, std::abs((w - target(i)) / w));
    }
    return worst;
}

/// Linear cost rate * sum |pre_i - post_i| on dollar positions.
inline double transaction_cost(const Vector& pre, const Vector& post, double rate) {
    if (pre.size() != post.size()) throw ArgumentError("position dimensions differ");
    return rate * (pre - post).cwiseAbs().sum();
}

/// Target weights that switch at given out-of-sample row indices. The
/// target in force at row t is the last entry with start <= t.
struct StrategySchedule {
    std::vector<std::pair<std::size_t, Vector>> targets;
    std::size_t lookback = 504;  // informational: window used to estimate the targets

    static StrategySchedule constant(Vector w) { return {{{0, std::move(w)}}, 504}; }

    const Vector& at(std::size_t t) const {
        const Vector* cur = nullptr;
        for (const auto& [start, w] : targets) {
            if (start > t) break;
            cur = &w;
        }
        if (!cur) throw ArgumentError("schedule has no target at row " + std::to_string(t));
        return *cur;
    }

    void validate(std::size_t assets) const {
        if (targets.empty() || targets.front().first != 0) throw ArgumentError("schedule must start at row 0");
        for (std::size_t k = 0; k < targets.size(); ++k) {
            if (k > 0 && targets[k].first <= targets[k - 1].first)
                throw ArgumentError("schedule rows must be strictly increasing");
            const Vector& w = targets[k].second;
            if (static_cast<std::size_t>(w.size()) != assets)
                throw ArgumentError("target dimension does not match the returns");
            if (std::abs(w.sum() - 1.0) > 1e-8) throw ArgumentError("target weights must sum to 1");
        }
    }
};

enum class CostMode {
    compound,     // deduct each rebalance cost from wealth
    report_only,  // accumulate costs without touching wealth
};

struct BacktestOptions {
    double threshold = 0.05;  // strict: rebalance when drift > threshold (up to rounding)
    double tc_rate = 0.002;
    bool charge_tc = true;
    CostMode cost_mode = CostMode::compound;
};

struct BacktestResult {
    std::vector<double> wealth;             // T + 1 values, wealth[0] = 1
    std::vector<double> daily_returns;      // T values
    Matrix weights_path;                    // (T + 1) x n, after any rebalance
    std::vector<std::size_t> rebalance_rows;  // wealth index of each rebalance
    std::vector<std::string> rebalance_dates;
    std::vector<double> rebalance_costs;
    double total_tc = 0.0;
};

namespace backtest_detail {

/// Shared loop. `target_at(t)` returns the target to compare against after
/// the return of row t - 1 has been applied; `rebalance_to(t)` returns the
/// weights to trade into when a rebalance fires at wealth index t.
inline BacktestResult simulate(const ReturnsMatrix& r, const Vector& initial,
                               const std::function<const Vector&(std::size_t)>& target_at,
                               const std::function<Vector(std::size_t)>& rebalance_to, const BacktestOptions& opt) {
    if (!(opt.threshold > 0.0)) throw ArgumentError("threshold must be positive");
    if (!(opt.tc_rate >= 0.0)) throw ArgumentError("tc_rate must be nonnegative");
    const auto T = r.samples();
    const auto n = static_cast<Eigen::Index>(r.assets());
    if (initial.size() != n) throw ArgumentError("target dimension does not match the returns");

    BacktestResult out;
    out.wealth.reserve(T + 1);
    out.daily_returns.reserve(T);
    out.weights_path.resize(static_cast<Eigen::Index>(T + 1), n);
    Vector h = initial;  // dollar positions; initial wealth 1, no cost on the first purchase
    out.wealth.push_back(1.0);
    out.weights_path.row(0) = initial.transpose();

    for (std::size_t t = 1; t <= T; ++t) {
        h = h.cwiseProduct((r.row(t - 1).transpose().array() + 1.0).matrix());
        double W = h.sum();
        if (!(W > 0.0)) throw InvalidStateError("portfolio value fell to zero at row " + std::to_string(t - 1));
        // no point trading after the last return. The slack keeps a drift
        // that equals the threshold up to rounding from triggering.
        if (t < T && drift(h, target_at(t)) > opt.threshold * (1.0 + 1e-12)) {
            const Vector w = rebalance_to(t);
            if (w.size() != n) throw ArgumentError("target dimension does not match the returns");
            Vector post = W * w;
            const double cost = opt.charge_tc ? transaction_cost(h, post, opt.tc_rate) : 0.0;
            if (opt.charge_tc && opt.cost_mode == CostMode::compound) {
                post *= (W - cost) / W;
                W -= cost;
            }
            h = post;
            out.total_tc += cost;
            out.rebalance_rows.push_back(t);
            out.rebalance_dates.push_back(r.dates()[t - 1]);
            out.rebalance_costs.push_back(cost);
        }
        out.daily_returns.push_back(W / out.wealth.back() - 1.0);
        out.wealth.push_back(W);
        out.weights_path.row(static_cast<Eigen::Index>(t)) = (h / W).transpose();
    }
    return out;
}

}  // namespace backtest_detail

/// Backtest against an explicit schedule: the drift test at each date uses
/// the target in force at that date.
inline BacktestResult run_backtest(const StrategySchedule& sched, const ReturnsMatrix& r_out,
                                   const BacktestOptions& opt = {}) {
    sched.validate(r_out.assets());
    return backtest_detail::simulate(
        r_out, sched.at(0), [&](std::size_t t) -> const Vector& { return sched.at(t); },
        [&](std::size_t t) { return sched.at(t); }, opt);
}

/// Backtest with targets estimated on demand: `estimate(t)` is called once
/// at the start (t = 0) and again at each rebalance, where t counts the
/// out-of-sample returns observed so far. Between rebalances the drift is
/// measured against the most recent estimate.
inline BacktestResult run_backtest(const std::function<Vector(std::size_t)>& estimate, const ReturnsMatrix& r_out,
                                   const BacktestOptions& opt = {}) {
    Vector current = estimate(0);
    if (std::abs(current.sum() - 1.0) > 1e-8) throw ArgumentError("target weights must sum to 1");
    const Vector initial = current;
    return backtest_detail::simulate(
        r_out, initial, [&](std::size_t) -> const Vector& { return current; },
        [&](std::size_t t) {
            current = estimate(t);
            if (std::abs(current.sum() - 1.0) > 1e-8) throw ArgumentError("target weights must sum to 1");
            return current;
        },
        opt);
}

}  // namespace wdro
