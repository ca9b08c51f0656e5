#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "wdro/error.hpp"
#include "wdro/market_data.hpp"

namespace wdro {

/// Tail probability used as 1/alpha in the CVaR minimization formula.
/// Reports label the same quantity as CVaR at level 1 - tail_mass.
class TailSpec {
public:
    explicit TailSpec(double tail_mass = 0.05) : tail_mass_(tail_mass) {
        if (!(tail_mass > 0.0 && tail_mass < 1.0)) throw ArgumentError("tail_mass must lie in (0, 1)");
    }
    double tail_mass() const { return tail_mass_; }
    double reporting_level() const { return 1.0 - tail_mass_; }

private:
    double tail_mass_;
};

/// Temperature of the softplus surrogate for [x]^+.
class SmoothingParam {
public:
    explicit SmoothingParam(double t = 1e-4) : t_(t) {
        if (!(t > 0.0) || !std::isfinite(t)) throw ArgumentError("smoothing t must be positive");
    }
    double value() const { return t_; }

private:
    double t_;
};

inline double loss(const Vector& pi, const Vector& R) {
    if (pi.size() != R.size()) throw ArgumentError("loss: weight and return dimensions differ");
    return -pi.dot(R);
}

/// Per-sample losses -pi'R_i.
inline Vector portfolio_losses(const Vector& pi, const ReturnsMatrix& r) {
    if (static_cast<std::size_t>(pi.size()) != r.assets())
        throw ArgumentError("portfolio dimension does not match returns");
    return -(r.values() * pi);
}

/// Left-continuous inverse of the empirical CDF at the reporting level.
inline double empirical_var(const Vector& losses, const TailSpec& tail) {
    if (losses.size() == 0) throw ArgumentError("empirical_var: empty sample");
    std::vector<double> v(losses.data(), losses.data() + losses.size());
    std::sort(v.begin(), v.end());
    const double N = static_cast<double>(v.size());
    // smallest k with k/N >= level; the 1e-9 guards level*N landing on an integer
    auto k = static_cast<long>(std::ceil(tail.reporting_level() * N - 1e-9));
    k = std::clamp(k, 1L, static_cast<long>(v.size()));
    return v[static_cast<std::size_t>(k - 1)];
}

/// Closed form of min_a { a + mean([L - a]^+) / tail_mass }: the average of
/// the worst tail_mass fraction, with a fractional weight on the boundary atom.
inline double empirical_cvar(const Vector& losses, const TailSpec& tail) {
    if (losses.size() == 0) throw ArgumentError("empirical_cvar: empty sample");
    std::vector<double> v(losses.data(), losses.data() + losses.size());
    std::sort(v.begin(), v.end(), std::greater<>());
    const double N = static_cast<double>(v.size());
    const double alpha = tail.tail_mass();
    const auto k = static_cast<std::size_t>(std::floor(alpha * N + 1e-9));
    double head = 0.0;
    for (std::size_t j = 0; j < k && j < v.size(); ++j) head += v[j];
    double value = head / N;
    const double rest = alpha - static_cast<double>(k) / N;
    if (k < v.size() && rest > 0.0) value += rest * v[k];
    return value / alpha;
}

/// t * log(1 + exp(x / t)) without overflow.
inline double smooth_plus(const SmoothingParam& t, double x) {
    const double tv = t.value();
    const double u = x / tv;
    if (u > 0.0) return x + tv * std::log1p(std::exp(-u));
    return tv * std::log1p(std::exp(u));
}

inline double smooth_objective(const Vector& pi, double a, const SmoothingParam& t, const ReturnsMatrix& r,
                               const TailSpec& tail) {
    const Vector L = portfolio_losses(pi, r);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < L.size(); ++i) acc += smooth_plus(t, L(i) - a);
    return a + acc / (tail.tail_mass() * static_cast<double>(L.size()));
}

/// a + mean([L - a]^+) / tail_mass, the function minimized by empirical_cvar.
inline double cvar_objective(const Vector& losses, double a, const TailSpec& tail) {
    return a + (losses.array() - a).max(0.0).mean() / tail.tail_mass();
}

}  // namespace wdro
