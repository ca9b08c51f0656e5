#pragma once

// Comparison models: box-uncertainty mean-CVaR (BMC, an LP over the sample
// probabilities) and moment-ambiguity mean-CVaR (KMC, an SOCP), plus the
// bootstrap that sizes the KMC ambiguity set.

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <thread>
#include <vector>

#include "wdro/conic.hpp"
#include "wdro/cvar.hpp"
#include "wdro/error.hpp"
#include "wdro/market_data.hpp"
#include "wdro/solve_report.hpp"
#include "wdro/stats.hpp"

namespace wdro {

/// Probabilities p = p0 + eta with 1'eta = 0 and lower <= eta <= upper.
struct BoxSpec {
    Vector p0;
    Vector eta_lower;
    Vector eta_upper;

    /// Uniform nominal weights with symmetric bounds +-width/N.
    static BoxSpec uniform(std::size_t N, double width = 0.3) {
        if (N == 0) throw ArgumentError("box needs at least one sample");
        if (!(width >= 0.0)) throw ArgumentError("box width must be nonnegative");
        const double n = static_cast<double>(N);
        const auto sz = static_cast<Eigen::Index>(N);
        return {Vector::Constant(sz, 1.0 / n), Vector::Constant(sz, -width / n), Vector::Constant(sz, width / n)};
    }

    BoxSpec scaled(double f) const { return {p0, f * eta_lower, f * eta_upper}; }

    void validate(std::size_t N) const {
        const auto sz = static_cast<Eigen::Index>(N);
        if (p0.size() != sz || eta_lower.size() != sz || eta_upper.size() != sz)
            throw ArgumentError("box dimensions must match the sample count");
        if (p0.minCoeff() < 0.0 || std::abs(p0.sum() - 1.0) > 1e-10)
            throw ArgumentError("nominal probabilities must be nonnegative and sum to 1");
        if (eta_lower.maxCoeff() > 0.0 || eta_upper.minCoeff() < 0.0)
            throw ArgumentError("box bounds must bracket zero");
        if ((p0 + eta_lower).minCoeff() < -1e-12 || (p0 + eta_upper).maxCoeff() > 1.0 + 1e-12)
            throw ArgumentError("box lets probabilities leave [0, 1]");
    }
};

/// Box-robust mean-CVaR, posed as the literal dual LP:
///   min zeta
///   a + (p0'u + upper'xi + lower'omega) / alpha <= zeta
///   z 1 + xi + omega = u,  xi >= 0,  omega <= 0
///   u_i >= -pi'R_i - a,  u >= 0
///   1'pi = 1,  0 <= pi <= 1
///   d 1 + tau + nu = R pi,  tau <= 0,  nu >= 0
///   p0'(R pi) + upper'tau + lower'nu >= rho
/// The last block is the dual of the worst-case mean under the box.
inline SolveReport solve_bmc(const ReturnsMatrix& r, const BoxSpec& box, double rho, const TailSpec& tail) {
    const int n = static_cast<int>(r.assets());
    const int N = static_cast<int>(r.samples());
    box.validate(r.samples());
    const double alpha = tail.tail_mass();
    const Matrix& R = r.values();

    ModelBuilder mb;
    const int pi = mb.add_variables(n);
    const int u = mb.add_variables(N);
    const int a = mb.add_variables(1);
    const int zeta = mb.add_variables(1);
    const int z = mb.add_variables(1);
    const int xi = mb.add_variables(N);
    const int om = mb.add_variables(N);
    const int d = mb.add_variables(1);
    const int tau = mb.add_variables(N);
    const int nu = mb.add_variables(N);
    mb.set_cost(zeta, 1.0);

    LinearExpr epi = LinearExpr::var(zeta).add(a, -1.0);
    LinearExpr mean(-rho);
    for (int i = 0; i < N; ++i) {
        epi.add(u + i, -box.p0(i) / alpha).add(xi + i, -box.eta_upper(i) / alpha).add(om + i, -box.eta_lower(i) / alpha);
        mb.add_equality(LinearExpr::var(z).add(xi + i, 1.0).add(om + i, 1.0).add(u + i, -1.0));
        mb.add_nonneg(LinearExpr::var(xi + i));
        mb.add_nonneg(LinearExpr::var(om + i, -1.0));
        LinearExpr hinge = LinearExpr::var(u + i).add(a, 1.0);
        LinearExpr split = LinearExpr::var(d).add(tau + i, 1.0).add(nu + i, 1.0);
        for (int j = 0; j < n; ++j) {
            hinge.add(pi + j, R(i, j));
            split.add(pi + j, -R(i, j));
            mean.add(pi + j, box.p0(i) * R(i, j));
        }
        mb.add_nonneg(hinge);
        mb.add_nonneg(LinearExpr::var(u + i));
        mb.add_equality(split);
        mb.add_nonneg(LinearExpr::var(tau + i, -1.0));
        mb.add_nonneg(LinearExpr::var(nu + i));
        mean.add(tau + i, box.eta_upper(i)).add(nu + i, box.eta_lower(i));
    }
    mb.add_nonneg(epi);
    const int mean_row = mb.add_nonneg(mean);
    LinearExpr budget(-1.0);
    for (int j = 0; j < n; ++j) {
        budget.add(pi + j, 1.0);
        mb.add_nonneg(LinearExpr::var(pi + j));
        mb.add_nonneg(LinearExpr(1.0).add(pi + j, -1.0));
    }
    const int budget_row = mb.add_equality(budget);

    const auto cs = default_conic_settings();
    const auto sol = solve_conic(mb.build(), cs);
    SolveReport rep;
    rep.model = "BMC";
    fill_status(rep, sol, cs);
    rep.parameters["rho"] = rho;
    rep.parameters["tail_mass"] = alpha;
    rep.parameters["box_upper_max"] = box.eta_upper.maxCoeff();
    rep.parameters["box_lower_min"] = box.eta_lower.minCoeff();
    if (sol.status == SolveStatus::optimal) {
        rep.portfolio.weights = sol.x.segment(pi, n);
        rep.portfolio.threshold = sol.x(a);
        rep.duals["mean"] = sol.z(mean_row);
        rep.duals["budget"] = -sol.y(budget_row);
        rep.duals["box_shift"] = sol.x(z);
    }
    return rep;
}

/// Moment ambiguity set: mean within the Sigma-ellipsoid of size gamma1
/// around mu_hat, covariance within spectral distance gamma2 of sigma_hat.
struct MomentAmbiguity {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    Vector mu_hat;
    Matrix sigma_hat;
    bool singular_covariance = false;  // set when a pseudo-inverse was needed

    static MomentAmbiguity from_returns(const ReturnsMatrix& r, double g1 = 0.0, double g2 = 0.0) {
        MomentAmbiguity m;
        m.gamma1 = g1;
        m.gamma2 = g2;
        m.mu_hat = r.mean();
        m.sigma_hat = r.covariance();
        return m;
    }

    void validate() const {
        if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0)) throw ArgumentError("gamma1 and gamma2 must be nonnegative");
        if (sigma_hat.rows() != mu_hat.size() || sigma_hat.cols() != mu_hat.size())
            throw ArgumentError("moment dimensions disagree");
    }
};

struct KmcOptions {
    bool long_only = true;
    /// Read the CVaR level in alpha_hat = sqrt(alpha / (1 - alpha)) as the
    /// confidence 1 - tail_mass (0.95 gives about 4.359) instead of the tail mass.
    bool alpha_is_confidence = true;
};

inline double kmc_alpha_hat(const TailSpec& tail, bool alpha_is_confidence) {
    const double a = alpha_is_confidence ? tail.reporting_level() : tail.tail_mass();
    return std::sqrt(a / (1.0 - a));
}

/// Moment-robust mean-CVaR:
///   min -mu'pi + sqrt(gamma1) k + alpha_hat j
///   sqrt(gamma1) ||S pi|| <= mu'pi - rho,  ||S2 pi|| <= j,  ||S pi|| <= k,
///   1'pi = 1 [, pi >= 0],
/// with S S' = Sigma and S2 S2' = Sigma + gamma2 I.
inline SolveReport solve_kmc(const ReturnsMatrix& r, const MomentAmbiguity& amb, double rho, const TailSpec& tail,
                             KmcOptions opt = {}) {
    amb.validate();
    const int n = static_cast<int>(r.assets());
    if (amb.mu_hat.size() != n) throw ArgumentError("moment dimensions do not match returns");
    const double ahat = kmc_alpha_hat(tail, opt.alpha_is_confidence);
    const double sg1 = std::sqrt(amb.gamma1);
    const Matrix S = psd_root(amb.sigma_hat).root;
    const Matrix S2 = psd_root(amb.sigma_hat + amb.gamma2 * Matrix::Identity(n, n)).root;

    ModelBuilder mb;
    const int pi = mb.add_variables(n);
    const int j = mb.add_variables(1);
    const int k = mb.add_variables(1);
    for (int c = 0; c < n; ++c) mb.set_cost(pi + c, -amb.mu_hat(c));
    mb.set_cost(j, ahat);
    mb.set_cost(k, sg1);

    auto rotate = [&](const Matrix& M, double f) {
        std::vector<LinearExpr> rows;
        for (int i = 0; i < n; ++i) {
            LinearExpr e;
            for (int c = 0; c < n; ++c) e.add(pi + c, f * M(i, c));
            rows.push_back(std::move(e));
        }
        return rows;
    };
    LinearExpr mean(-rho);
    LinearExpr budget(-1.0);
    for (int c = 0; c < n; ++c) {
        mean.add(pi + c, amb.mu_hat(c));
        budget.add(pi + c, 1.0);
    }
    int mean_row = -1;
    if (opt.long_only)
        for (int c = 0; c < n; ++c) mb.add_nonneg(LinearExpr::var(pi + c));
    if (sg1 == 0.0) mean_row = mb.add_nonneg(mean);
    const int budget_row = mb.add_equality(budget);

    int mean_cone = -1;
    if (sg1 > 0.0) {
        std::vector<LinearExpr> blk{mean};
        for (auto& e : rotate(S, sg1)) blk.push_back(std::move(e));
        mean_cone = mb.add_soc(std::move(blk));
    }
    std::vector<LinearExpr> jb{LinearExpr::var(j)}, kb{LinearExpr::var(k)};
    for (auto& e : rotate(S2, 1.0)) jb.push_back(std::move(e));
    for (auto& e : rotate(S, 1.0)) kb.push_back(std::move(e));
    mb.add_soc(std::move(jb));
    mb.add_soc(std::move(kb));

    const auto cs = default_conic_settings();
    const auto sol = solve_conic(mb.build(), cs);
    SolveReport rep;
    rep.model = "KMC";
    fill_status(rep, sol, cs);
    rep.parameters["rho"] = rho;
    rep.parameters["tail_mass"] = tail.tail_mass();
    rep.parameters["gamma1"] = amb.gamma1;
    rep.parameters["gamma2"] = amb.gamma2;
    rep.parameters["alpha_hat"] = ahat;
    if (sol.status == SolveStatus::optimal) {
        rep.portfolio.weights = sol.x.segment(pi, n);
        rep.portfolio.threshold = 0.0;  // KMC has no CVaR threshold variable
        rep.duals["mean"] = mean_cone >= 0 ? sol.z(mb.soc_row(mean_cone)) : sol.z(mean_row);
        rep.duals["budget"] = -sol.y(budget_row);
    }
    return rep;
}

struct BootstrapOptions {
    int resamples = 500;
    double level = 0.95;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0: hardware concurrency
};

/// Percentile bootstrap for (gamma1, gamma2). Resample b draws its row
/// indices from a generator seeded with (seed, b), so results do not depend
/// on the thread count.
inline MomentAmbiguity bootstrap_gammas(const ReturnsMatrix& r, const BootstrapOptions& opt = {}) {
    if (opt.resamples < 1) throw ArgumentError("bootstrap needs at least one resample");
    if (!(opt.level > 0.0 && opt.level < 1.0)) throw ArgumentError("bootstrap level must lie in (0, 1)");
    MomentAmbiguity out = MomentAmbiguity::from_returns(r);
    const auto N = static_cast<Eigen::Index>(r.samples());
    const Eigen::Index n = out.mu_hat.size();

    Eigen::SelfAdjointEigenSolver<Matrix> es(out.sigma_hat);
    const Vector ev = es.eigenvalues();
    const double cut = 1e-12 * std::max(1e-300, ev.cwiseAbs().maxCoeff());
    Vector inv = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (ev(i) > cut)
            inv(i) = 1.0 / ev(i);
        else
            out.singular_covariance = true;
    }
    const Matrix pinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();

    const auto B = static_cast<std::size_t>(opt.resamples);
    std::vector<double> g1(B), g2(B);
    auto work = [&](std::size_t lo, std::size_t hi) {
        Matrix Rb(N, n);
        for (std::size_t b = lo; b < hi; ++b) {
            std::seed_seq seq{static_cast<std::uint64_t>(opt.seed), static_cast<std::uint64_t>(b)};
            std::mt19937_64 rng(seq);
            std::uniform_int_distribution<Eigen::Index> pick(0, N - 1);
            for (Eigen::Index i = 0; i < N; ++i) Rb.row(i) = r.values().row(pick(rng));
            const Vector mu = Rb.colwise().mean().transpose();
            const Matrix centered = Rb.rowwise() - mu.transpose();
            const Matrix cov = centered.transpose() * centered / static_cast<double>(N);
            const Vector dm = mu - out.mu_hat;
            g1[b] = std::max(0.0, dm.dot(pinv * dm));
            Eigen::SelfAdjointEigenSolver<Matrix> d(cov - out.sigma_hat, Eigen::EigenvaluesOnly);
            g2[b] = d.eigenvalues().cwiseAbs().maxCoeff();
        }
    };
    unsigned T = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
    T = static_cast<unsigned>(std::min<std::size_t>(T, B));
    std::vector<std::future<void>> jobs;
    for (unsigned t = 0; t < T; ++t)
        jobs.push_back(std::async(std::launch::async, work, B * t / T, B * (t + 1) / T));
    for (auto& f : jobs) f.get();

    out.gamma1 = empirical_quantile(g1, opt.level);
    out.gamma2 = empirical_quantile(g2, opt.level);
    return out;
}

}  // namespace wdro
