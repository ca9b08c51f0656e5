#pragma once

// Data-driven Wasserstein radius: solve the smoothed sample problem, take
// the t -> 0 multiplier limits, build the Gaussian bound on the scaled
// profile function, and read off a Monte-Carlo quantile.

#include <cmath>
#include <future>
#include <random>
#include <thread>
#include <vector>

#include "wdro/cvar.hpp"
#include "wdro/error.hpp"
#include "wdro/market_data.hpp"
#include "wdro/nonrobust.hpp"
#include "wdro/stats.hpp"

namespace wdro {

struct RadiusConfig {
    int kappa = 1;
    double confidence = 0.95;  // 1 - delta_0
    int mc_samples = 10000;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0: hardware concurrency; results do not depend on it

    void validate() const {
        if (kappa != 1 && kappa != 2) throw ArgumentError("kappa must be 1 or 2");
        if (!(confidence > 0.0 && confidence < 1.0)) throw ArgumentError("confidence must lie in (0, 1)");
        if (mc_samples < 100) throw ArgumentError("mc_samples must be at least 100");
    }
};

struct RadiusResult {
    double delta_star = 0.0;
    double eta_quantile = 0.0;
    double lambda1_hat = 0.0;
    double lambda2_hat = 0.0;
    double c_constant = 0.0;      // kappa = 2 only
    bool c_negative = false;      // sign of c_constant before taking |c|
    Matrix covariance;            // covariance of Z~
    int kappa = 1;
    std::size_t samples = 0;      // N used in delta* = eta / N^(kappa/2)
    std::uint64_t seed = 0;
    bool smooth_converged = false;
    double multiplier_residual = 0.0;
};

/// E[v v'] with v = (1/alpha + |lambda1|) |R| + |lambda2| 1.
inline Matrix ztilde_covariance(const ReturnsMatrix& r, double lambda1, double lambda2, const TailSpec& tail) {
    const double s = 1.0 / tail.tail_mass() + std::abs(lambda1);
    const Matrix V = (s * r.values().cwiseAbs()).array() + std::abs(lambda2);
    const Matrix C = V.transpose() * V / static_cast<double>(r.samples());
    return 0.5 * (C + C.transpose());
}

/// E[-lambda1 1{A > 0} - (1 + alpha lambda1) / alpha 1{A <= 0}] with
/// A = pi'R + a. Ties at A = 0 count as A < 0.
inline double kappa2_constant(const Vector& pi, double a, const ReturnsMatrix& r, double lambda1,
                              const TailSpec& tail) {
    const double alpha = tail.tail_mass();
    const Vector A = (r.values() * pi).array() + a;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < A.size(); ++i)
        acc += A(i) > 0.0 ? -lambda1 : -(1.0 + alpha * lambda1) / alpha;
    return acc / static_cast<double>(A.size());
}

/// Draws of the bound on the limiting profile function: ||Z|| for kappa 1,
/// Z'Z / |c| for kappa 2, with Z ~ N(0, cov). Draws come in chunks of
/// 1024, chunk k seeded from (seed, k).
inline Vector sample_rwp_bound(const RadiusConfig& cfg, const Matrix& cov, double c_constant) {
    cfg.validate();
    if (cfg.kappa == 2 && !(std::abs(c_constant) >= 1e-10))
        throw DegenerateError("kappa = 2 bound constant is numerically zero");
    const Matrix L = psd_root(cov).root;
    const Eigen::Index n = cov.rows();
    const auto M = static_cast<std::size_t>(cfg.mc_samples);
    constexpr std::size_t chunk = 1024;
    const std::size_t chunks = (M + chunk - 1) / chunk;
    Vector out(static_cast<Eigen::Index>(M));
    const double inv_c = cfg.kappa == 2 ? 1.0 / std::abs(c_constant) : 1.0;

    auto work = [&](std::size_t first, std::size_t last) {
        Vector g(n);
        for (std::size_t k = first; k < last; ++k) {
            std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(k)};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> z;
            const std::size_t lo = k * chunk, hi = std::min(M, lo + chunk);
            for (std::size_t s = lo; s < hi; ++s) {
                for (Eigen::Index j = 0; j < n; ++j) g(j) = z(rng);
                const Vector Z = L * g;
                out(static_cast<Eigen::Index>(s)) = cfg.kappa == 1 ? Z.norm() : inv_c * Z.squaredNorm();
            }
        }
    };
    unsigned T = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    T = static_cast<unsigned>(std::min<std::size_t>(T, chunks));
    std::vector<std::future<void>> jobs;
    for (unsigned t = 0; t < T; ++t)
        jobs.push_back(std::async(std::launch::async, work, chunks * t / T, chunks * (t + 1) / T));
    for (auto& f : jobs) f.get();
    return out;
}

/// Full radius pipeline. rho must lie strictly between the smallest and
/// largest asset means (the smoothed problem uses an equality constraint).
inline RadiusResult select_radius(const ReturnsMatrix& r, double rho, const TailSpec& tail, const RadiusConfig& cfg,
                                  const SmoothingParam& t = SmoothingParam{}) {
    cfg.validate();
    const SmoothKktState st = solve_smooth(r, rho, tail, t);
    const MultiplierLimits lim = multiplier_limits(st, r, rho, tail);

    RadiusResult out;
    out.kappa = cfg.kappa;
    out.seed = cfg.seed;
    out.samples = r.samples();
    out.smooth_converged = st.status == SolveStatus::optimal;
    out.lambda1_hat = lim.lambda1;
    out.lambda2_hat = lim.lambda2;
    out.multiplier_residual = lim.residual;
    out.covariance = ztilde_covariance(r, lim.lambda1, lim.lambda2, tail);
    if (cfg.kappa == 2) {
        out.c_constant = kappa2_constant(st.pi_star, st.a_star, r, lim.lambda1, tail);
        out.c_negative = out.c_constant < 0.0;
    }
    const Vector draws = sample_rwp_bound(cfg, out.covariance, out.c_constant);
    out.eta_quantile = empirical_quantile(draws, cfg.confidence);
    out.delta_star = out.eta_quantile / std::pow(static_cast<double>(r.samples()), 0.5 * cfg.kappa);
    return out;
}

}  // namespace wdro
