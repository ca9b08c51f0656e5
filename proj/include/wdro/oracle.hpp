#pragma once

// Brute-force worst-case expectations over a Wasserstein ball around a tiny
// empirical measure. Used to check the dual reformulations independently.
//
// Each atom R_i is moved along -pi/||pi||, the direction that lowers the
// portfolio return fastest, so moving a unit of mass a transport cost c
// changes pi'R by -||pi|| c^(1/kappa). Mass may be split, so the per-atom
// payoff is the upper concave hull of the pointwise gain, sampled on a
// geometric grid of costs. The hulls are then combined by spending the cost
// budget on the steepest remaining hull segments first, which is optimal
// for a sum of concave functions under one linear budget.
//
// Budget: (1/N) sum_i c_i <= delta, with c = ||Delta|| for kappa = 1 and
// c = ||Delta||^2 for kappa = 2 (delta is on the squared-cost scale there).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "wdro/error.hpp"
#include "wdro/market_data.hpp"

namespace wdro {

struct TinyInstance {
    Matrix atoms;  // N x n, N <= 3, n <= 2
    double delta = 0.0;
    int kappa = 1;

    TinyInstance(Matrix a, double d, int k) : atoms(std::move(a)), delta(d), kappa(k) {
        if (atoms.rows() < 1 || atoms.rows() > 3 || atoms.cols() < 1 || atoms.cols() > 2)
            throw ArgumentError("tiny instances hold at most 3 atoms of dimension at most 2");
        if (!(delta >= 0.0)) throw ArgumentError("delta must be nonnegative");
        if (kappa != 1 && kappa != 2) throw ArgumentError("kappa must be 1 or 2");
    }
};

namespace oracle_detail {

struct Segment {
    double slope;
    double cost;  // width along the cost axis
};

// Upper concave hull of points (c_k, g_k) with c increasing, returned as
// segments of decreasing slope starting at c_0 = 0.
inline std::vector<Segment> concave_hull(const std::vector<double>& c, const std::vector<double>& g) {
    std::vector<std::size_t> h;
    for (std::size_t k = 0; k < c.size(); ++k) {
        while (h.size() >= 2) {
            const std::size_t i = h[h.size() - 2], j = h.back();
            // drop j when it lies on or below the chord from i to k
            if ((g[j] - g[i]) * (c[k] - c[i]) <= (g[k] - g[i]) * (c[j] - c[i]))
                h.pop_back();
            else
                break;
        }
        h.push_back(k);
    }
    std::vector<Segment> out;
    for (std::size_t t = 1; t < h.size(); ++t) {
        const double w = c[h[t]] - c[h[t - 1]];
        out.push_back({(g[h[t]] - g[h[t - 1]]) / w, w});
    }
    return out;
}

// Greedy spend of `budget` (in the (1/N)-weighted scale) over per-atom hulls.
inline double allocate(std::vector<std::vector<Segment>>& hulls, double budget, double N) {
    std::vector<Segment> all;
    for (auto& h : hulls)
        for (const auto& s : h)
            if (s.slope > 0) all.push_back({s.slope, s.cost / N});
    std::sort(all.begin(), all.end(), [](const Segment& a, const Segment& b) { return a.slope > b.slope; });
    double gain = 0.0;
    for (const auto& s : all) {
        if (budget <= 0) break;
        const double take = std::min(budget, s.cost);
        gain += s.slope * take;
        budget -= take;
    }
    return gain;
}

inline std::vector<double> cost_grid(double cmax, double ratio, double span) {
    std::vector<double> c{0.0};
    double x = cmax / span;
    while (x < cmax) {
        c.push_back(x);
        x *= ratio;
    }
    c.push_back(cmax);
    return c;
}

// sup over per-atom cost splits of (1/N) sum_i gain_i, where gain_i(c) is the
// payoff of atom i at cost c minus its payoff at cost 0.
inline double worst_case_increment(const std::vector<std::function<double(double)>>& gain,
                                   const std::vector<double>& cmax, double budget, double ratio, double span) {
    if (budget <= 0) return 0.0;
    std::vector<std::vector<Segment>> hulls;
    for (std::size_t i = 0; i < gain.size(); ++i) {
        const auto c = cost_grid(cmax[i], ratio, span);
        std::vector<double> g(c.size());
        for (std::size_t k = 0; k < c.size(); ++k) g[k] = gain[i](c[k]);
        hulls.push_back(concave_hull(c, g));
    }
    return allocate(hulls, budget, static_cast<double>(gain.size()));
}

inline double radial(double c, int kappa) { return kappa == 1 ? c : std::sqrt(c); }

}  // namespace oracle_detail

/// sup over the ball of (1/N) sum [-pi'x - a]^+.
inline double brute_force_worst_plus(const TinyInstance& inst, const Vector& pi, double a, double grid_ratio = 1.02) {
    using namespace oracle_detail;
    if (pi.size() != inst.atoms.cols()) throw ArgumentError("portfolio dimension does not match atoms");
    const Eigen::Index N = inst.atoms.rows();
    const double p = pi.norm();
    const Vector ell = -(inst.atoms * pi).array() - a;
    const double base = ell.cwiseMax(0.0).mean();
    if (p == 0.0 || inst.delta == 0.0) return base;
    const double B = inst.delta;
    std::vector<std::function<double(double)>> gain;
    std::vector<double> cmax;
    for (Eigen::Index i = 0; i < N; ++i) {
        const double l = ell(i);
        gain.emplace_back([l, p, k = inst.kappa](double c) {
            return std::max(l + p * radial(c, k), 0.0) - std::max(l, 0.0);
        });
        const double reach = inst.kappa == 1 ? std::abs(l) / p : 4.0 * l * l / (p * p);
        cmax.push_back(1e6 * std::max({static_cast<double>(N) * B, reach, 1e-12}));
    }
    return base + worst_case_increment(gain, cmax, B, grid_ratio, 1e16);
}

/// inf over the ball of (1/N) sum pi'x.
inline double brute_force_worst_mean(const TinyInstance& inst, const Vector& pi, double grid_ratio = 1.002) {
    using namespace oracle_detail;
    if (pi.size() != inst.atoms.cols()) throw ArgumentError("portfolio dimension does not match atoms");
    const Eigen::Index N = inst.atoms.rows();
    const double p = pi.norm();
    const double base = (inst.atoms * pi).mean();
    if (p == 0.0 || inst.delta == 0.0) return base;
    std::vector<std::function<double(double)>> gain;
    std::vector<double> cmax;
    for (Eigen::Index i = 0; i < N; ++i) {
        gain.emplace_back([p, k = inst.kappa](double c) { return p * radial(c, k); });
        // a single atom can absorb at most N * delta of cost
        cmax.push_back(static_cast<double>(N) * inst.delta);
    }
    return base - worst_case_increment(gain, cmax, inst.delta, grid_ratio, 1e8);
}

struct OracleOptimum {
    double objective = std::numeric_limits<double>::infinity();
    Vector pi;
    double a = 0.0;
    bool feasible = false;
};

namespace oracle_detail {

inline double golden(const std::function<double(double)>& f, double lo, double hi, double tol, double& argmin) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi, c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    argmin = 0.5 * (a + b);
    return f(argmin);
}

}  // namespace oracle_detail

/// Robust long-only mean-CVaR optimum by direct search:
///   min over pi in the simplex, a of  a + (1/alpha) worst_plus(pi, a)
///   subject to worst_mean(pi) >= rho.
/// Both functions come from the brute-force oracles above. Supports n <= 2.
inline OracleOptimum brute_force_robust_cvar(const TinyInstance& inst, double rho, double alpha) {
    using namespace oracle_detail;
    const Eigen::Index n = inst.atoms.cols();
    auto pi_of = [n](double w) {
        Vector pi(n);
        if (n == 1)
            pi << 1.0;
        else
            pi << w, 1.0 - w;
        return pi;
    };
    auto inner = [&](double w, double* a_out) {
        const Vector pi = pi_of(w);
        const Vector loss = -(inst.atoms * pi);
        // The worst-case VaR can sit further out than any single atom moves:
        // a tail of mass alpha may travel (delta / alpha)^(1/kappa).
        const double N = static_cast<double>(inst.atoms.rows());
        const double reach =
            pi.norm() * std::pow(std::max(N * inst.delta, inst.delta / alpha), 1.0 / inst.kappa);
        const double lo = loss.minCoeff() - 1e-3, hi = loss.maxCoeff() + reach + 1e-3;
        auto f = [&](double a) { return a + brute_force_worst_plus(inst, pi, a) / alpha; };
        double am = 0.0;
        const double v = golden(f, lo, hi, 1e-9, am);
        if (a_out) *a_out = am;
        return v;
    };
    auto mean_ok = [&](double w) { return brute_force_worst_mean(inst, pi_of(w)) >= rho; };

    OracleOptimum out;
    if (n == 1) {
        if (!mean_ok(1.0)) return out;
        out.feasible = true;
        out.pi = pi_of(1.0);
        out.objective = inner(1.0, &out.a);
        return out;
    }
    // Feasible weights form an interval (the worst mean is concave in w).
    const int K = 100;
    int first = -1, last = -1;
    for (int k = 0; k <= K; ++k) {
        if (mean_ok(static_cast<double>(k) / K)) {
            if (first < 0) first = k;
            last = k;
        }
    }
    if (first < 0) return out;
    auto edge = [&](double in, double out_) {
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (in + out_);
            (mean_ok(mid) ? in : out_) = mid;
        }
        return in;
    };
    const double lo = first == 0 ? 0.0 : edge(static_cast<double>(first) / K, static_cast<double>(first - 1) / K);
    const double hi = last == K ? 1.0 : edge(static_cast<double>(last) / K, static_cast<double>(last + 1) / K);
    out.feasible = true;
    double wbest = lo;
    auto outer = [&](double w) { return inner(w, nullptr); };
    double v = hi - lo > 1e-12 ? golden(outer, lo, hi, 1e-7, wbest) : outer(lo);
    for (double w : {lo, hi}) {
        const double vw = outer(w);
        if (vw < v) {
            v = vw;
            wbest = w;
        }
    }
    out.objective = v;
    out.pi = pi_of(wbest);
    inner(wbest, &out.a);
    return out;
}

}  // namespace wdro
