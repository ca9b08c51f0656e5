#pragma once

// Performance statistics of a daily return series: mean, volatility, tail
// risk, annualized Sharpe, drawdown and a trailing one-year Sharpe.

#include <cmath>
#include <limits>
#include <vector>

#include "wdro/cvar.hpp"
#include "wdro/error.hpp"

namespace wdro {

inline constexpr double kTradingDays = 252.0;
inline constexpr std::size_t kRollingWindow = 252;

struct MetricBundle {
    double mean_daily = 0.0;
    double std_daily = 0.0;  // population divisor
    double cvar_tail = 0.0;  // CVaR of daily losses at the tail mass
    double sharpe_annualized = 0.0;
    double mean_over_cvar = 0.0;
    double max_drawdown = 0.0;
    bool sharpe_defined = true;  // false when the series has no dispersion
    std::vector<double> rolling_sharpe;  // value at the last day of each full window; empty if too short
};

/// sqrt(252) * mean / std. Zero std yields a non-finite value: +-inf for a
/// nonzero mean, NaN otherwise.
inline double annualized_sharpe(double mean, double std) {
    if (std > 0.0) return std::sqrt(kTradingDays) * mean / std;
    if (mean == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

struct WealthPath {
    std::vector<double> wealth;  // wealth[0] = initial
    bool bankrupt = false;       // a return <= -1 occurred; the path stops before it
};

inline WealthPath cumulative_wealth(const std::vector<double>& daily_returns, double initial = 1.0) {
    WealthPath out;
    out.wealth.reserve(daily_returns.size() + 1);
    out.wealth.push_back(initial);
    for (double r : daily_returns) {
        if (!(r > -1.0)) {
            out.bankrupt = true;
            break;
        }
        out.wealth.push_back(out.wealth.back() * (1.0 + r));
    }
    return out;
}

/// Largest peak-to-trough decline of a wealth path, as a fraction of the peak.
inline double max_drawdown(const std::vector<double>& wealth) {
    double peak = -std::numeric_limits<double>::infinity(), worst = 0.0;
    for (double w : wealth) {
        peak = std::max(peak, w);
        if (peak > 0.0) worst = std::max(worst, (peak - w) / peak);
    }
    return std::min(worst, 1.0);
}

namespace metrics_detail {

inline void mean_std(const double* x, std::size_t n, double& mean, double& std) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    mean = s / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (x[i] - mean) * (x[i] - mean);
    std = std::sqrt(ss / static_cast<double>(n));
    // rounding leaves a tiny residual on constant series
    if (std <= 1e-14 * std::max(1.0, std::abs(mean))) std = 0.0;
}

}  // namespace metrics_detail

/// Rolling Sharpe over trailing windows; entry k covers days [k, k + window).
inline std::vector<double> rolling_sharpe(const std::vector<double>& r, std::size_t window = kRollingWindow) {
    if (window < 2) throw ArgumentError("rolling window must be at least 2");
    std::vector<double> out;
    if (r.size() < window) return out;
    out.reserve(r.size() - window + 1);
    for (std::size_t k = 0; k + window <= r.size(); ++k) {
        double m, s;
        metrics_detail::mean_std(r.data() + k, window, m, s);
        out.push_back(annualized_sharpe(m, s));
    }
    return out;
}

inline MetricBundle compute_metrics(const std::vector<double>& daily_returns, const TailSpec& tail = TailSpec{}) {
    if (daily_returns.size() < 2) throw ArgumentError("metrics need at least two returns");
    MetricBundle m;
    metrics_detail::mean_std(daily_returns.data(), daily_returns.size(), m.mean_daily, m.std_daily);
    m.sharpe_annualized = annualized_sharpe(m.mean_daily, m.std_daily);
    m.sharpe_defined = std::isfinite(m.sharpe_annualized);
    Vector losses(static_cast<Eigen::Index>(daily_returns.size()));
    for (std::size_t i = 0; i < daily_returns.size(); ++i) losses(static_cast<Eigen::Index>(i)) = -daily_returns[i];
    m.cvar_tail = empirical_cvar(losses, tail);
    m.mean_over_cvar = m.cvar_tail != 0.0 ? m.mean_daily / m.cvar_tail : std::numeric_limits<double>::quiet_NaN();
    m.max_drawdown = max_drawdown(cumulative_wealth(daily_returns).wealth);
    m.rolling_sharpe = rolling_sharpe(daily_returns);
    return m;
}

}  // namespace wdro
