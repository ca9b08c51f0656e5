#pragma once

#include <cmath>
#include <string>

#include "wdro/conic.hpp"
#include "wdro/cvar.hpp"
#include "wdro/error.hpp"
#include "wdro/market_data.hpp"
#include "wdro/nonrobust.hpp"
#include "wdro/solve_report.hpp"

namespace wdro {

/// Wasserstein ball of order kappa. For kappa = 1, delta is the transport
/// distance budget; for kappa = 2 it is the budget on the squared cost, so
/// the dual carries sqrt(delta) in the mean constraint and gamma*delta in
/// the objective.
struct RobustConfig {
    double delta = 0.0;
    int kappa = 1;
    TailSpec tail{0.05};
    double rho = 0.0;
    bool long_only = true;

    void validate() const {
        if (!(delta >= 0.0) || !std::isfinite(delta)) throw ArgumentError("delta must be a finite nonnegative number");
        if (kappa != 1 && kappa != 2) throw ArgumentError("kappa must be 1 or 2");
    }
};

/// min over the ball of E[pi'R]: the mean minus delta*||pi|| (kappa 1) or
/// sqrt(delta)*||pi|| (kappa 2).
inline double worst_case_mean(const Vector& pi, const ReturnsMatrix& r, double delta, int kappa) {
    if (static_cast<std::size_t>(pi.size()) != r.assets()) throw ArgumentError("portfolio dimension mismatch");
    if (!(delta >= 0.0)) throw ArgumentError("delta must be nonnegative");
    if (kappa != 1 && kappa != 2) throw ArgumentError("kappa must be 1 or 2");
    const double shrink = kappa == 1 ? delta : std::sqrt(delta);
    return r.mean().dot(pi) - shrink * pi.norm();
}

/// kappa = 1 robust mean-CVaR as a second-order cone program:
///   min a + (1/alpha) (sum(u)/N + delta v)
///   u_i >= -pi'R_i - a, u >= 0, v >= ||pi||,
///   mean'pi - delta v >= rho, 1'pi = 1 [, pi >= 0].
inline SolveReport solve_rmc1(const ReturnsMatrix& r, const RobustConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(r.assets());
    const int N = static_cast<int>(r.samples());
    const double alpha = cfg.tail.tail_mass();
    const Vector m = r.mean();

    ModelBuilder mb;
    const int pi = mb.add_variables(n);
    const int a = mb.add_variables(1);
    const int u = mb.add_variables(N);
    const int v = mb.add_variables(1);
    mb.set_cost(a, 1.0);
    mb.set_cost(v, cfg.delta / alpha);
    for (int i = 0; i < N; ++i) {
        mb.set_cost(u + i, 1.0 / (alpha * N));
        LinearExpr e = LinearExpr::var(u + i).add(a, 1.0);
        for (int j = 0; j < n; ++j) e.add(pi + j, r.values()(i, j));
        mb.add_nonneg(e);
        mb.add_nonneg(LinearExpr::var(u + i));
    }
    LinearExpr mean(-cfg.rho);
    LinearExpr budget(-1.0);
    for (int j = 0; j < n; ++j) {
        mean.add(pi + j, m(j));
        budget.add(pi + j, 1.0);
    }
    mean.add(v, -cfg.delta);
    const int mean_row = mb.add_nonneg(mean);
    const int budget_row = mb.add_equality(budget);
    if (cfg.long_only)
        for (int j = 0; j < n; ++j) mb.add_nonneg(LinearExpr::var(pi + j));
    std::vector<LinearExpr> cone{LinearExpr::var(v)};
    for (int j = 0; j < n; ++j) cone.push_back(LinearExpr::var(pi + j));
    mb.add_soc(std::move(cone));

    const auto cs = default_conic_settings();
    const auto sol = solve_conic(mb.build(), cs);
    SolveReport rep;
    rep.model = "RMC1";
    fill_status(rep, sol, cs);
    rep.parameters["delta"] = cfg.delta;
    rep.parameters["kappa"] = 1;
    rep.parameters["rho"] = cfg.rho;
    rep.parameters["tail_mass"] = alpha;
    if (sol.status == SolveStatus::optimal) {
        rep.portfolio.weights = sol.x.segment(pi, n);
        rep.portfolio.threshold = sol.x(a);
        rep.duals["mean"] = sol.z(mean_row);
        rep.duals["budget"] = -sol.y(budget_row);
        rep.duals["norm_epigraph"] = sol.x(v);
    }
    return rep;
}

/// kappa = 2 robust mean-CVaR:
///   min gamma delta + sum(s)/N
///   s_i >= a,
///   s_i >= ||pi||^2 / (4 gamma alpha^2) - pi'R_i / alpha + a (1 - 1/alpha),
///   mean'pi - sqrt(delta) ||pi|| >= rho, 1'pi = 1 [, pi >= 0], gamma >= 0.
/// The quadratic-over-linear rows are lifted through r >= ||pi|| and the
/// rotated cones r^2 <= 2 (2 alpha^2 gamma) t_i with
/// t_i = s_i + pi'R_i / alpha - a (1 - 1/alpha). At delta = 0 the problem is
/// the sample program, which is solved directly.
inline SolveReport solve_rmc2(const ReturnsMatrix& r, const RobustConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(r.assets());
    const int N = static_cast<int>(r.samples());
    const double alpha = cfg.tail.tail_mass();
    if (cfg.delta == 0.0) {
        SolveReport rep = solve_nmc(r, cfg.rho, cfg.tail, {cfg.long_only, MeanConstraint::at_least});
        rep.model = "RMC2";
        rep.parameters["delta"] = 0.0;
        rep.parameters["kappa"] = 2;
        rep.duals["gamma"] = std::numeric_limits<double>::infinity();
        return rep;
    }
    const Vector m = r.mean();
    const double sq = std::sqrt(0.5);

    ModelBuilder mb;
    const int pi = mb.add_variables(n);
    const int a = mb.add_variables(1);
    const int g = mb.add_variables(1);
    const int s = mb.add_variables(N);
    const int rn = mb.add_variables(1);
    mb.set_cost(g, cfg.delta);
    for (int i = 0; i < N; ++i) {
        mb.set_cost(s + i, 1.0 / N);
        mb.add_nonneg(LinearExpr::var(s + i).add(a, -1.0));
    }
    LinearExpr mean(-cfg.rho);
    LinearExpr budget(-1.0);
    for (int j = 0; j < n; ++j) {
        mean.add(pi + j, m(j));
        budget.add(pi + j, 1.0);
    }
    mean.add(rn, -std::sqrt(cfg.delta));
    const int mean_row = mb.add_nonneg(mean);
    const int budget_row = mb.add_equality(budget);
    if (cfg.long_only)
        for (int j = 0; j < n; ++j) mb.add_nonneg(LinearExpr::var(pi + j));

    std::vector<LinearExpr> norm{LinearExpr::var(rn)};
    for (int j = 0; j < n; ++j) norm.push_back(LinearExpr::var(pi + j));
    mb.add_soc(std::move(norm));
    for (int i = 0; i < N; ++i) {
        const LinearExpr uu = LinearExpr::var(g, 2.0 * alpha * alpha);
        LinearExpr tt = LinearExpr::var(s + i).add(a, -(1.0 - 1.0 / alpha));
        for (int j = 0; j < n; ++j) tt.add(pi + j, r.values()(i, j) / alpha);
        mb.add_soc({sq * (uu + tt), LinearExpr::var(rn), sq * (uu - tt)});
    }

    const auto cs = default_conic_settings();
    const auto sol = solve_conic(mb.build(), cs);
    SolveReport rep;
    rep.model = "RMC2";
    fill_status(rep, sol, cs);
    rep.parameters["delta"] = cfg.delta;
    rep.parameters["kappa"] = 2;
    rep.parameters["rho"] = cfg.rho;
    rep.parameters["tail_mass"] = alpha;
    if (sol.status == SolveStatus::optimal) {
        rep.portfolio.weights = sol.x.segment(pi, n);
        rep.portfolio.threshold = sol.x(a);
        rep.duals["mean"] = sol.z(mean_row);
        rep.duals["budget"] = -sol.y(budget_row);
        rep.duals["gamma"] = sol.x(g);
        // Epigraph tightness: each s_i should equal the larger of its two
        // lower bounds once gamma is fixed at its optimum.
        const double gam = sol.x(g);
        const Vector& w = rep.portfolio.weights;
        const double av = rep.portfolio.threshold;
        const double q = w.squaredNorm() / (4.0 * gam * alpha * alpha);
        double worst = 0.0;
        for (int i = 0; i < N; ++i) {
            const double bound = std::max(av, q - r.values().row(i).dot(w) / alpha + av * (1.0 - 1.0 / alpha));
            worst = std::max(worst, std::abs(sol.x(s + i) - bound));
        }
        rep.parameters["epigraph_residual"] = worst;
    }
    return rep;
}

inline SolveReport solve_robust(const ReturnsMatrix& r, const RobustConfig& cfg) {
    return cfg.kappa == 1 ? solve_rmc1(r, cfg) : solve_rmc2(r, cfg);
}

/// Worst-case CVaR of the robust optimum. For kappa = 1 the value is also
/// rebuilt from (pi, a) as a + (E[-pi'R - a]^+ + delta ||pi||) / alpha and
/// must agree with the solver objective to 1e-8.
inline double worst_case_cvar_value(const SolveReport& rep, const RobustConfig& cfg, const ReturnsMatrix& r) {
    if (!rep.optimal()) throw InvalidStateError("worst-case CVaR requested from a non-optimal report");
    if (cfg.kappa == 2) return rep.objective;
    const Vector& pi = rep.portfolio.weights;
    const double a = rep.portfolio.threshold;
    const Vector L = portfolio_losses(pi, r);
    const double rebuilt = a + ((L.array() - a).max(0.0).mean() + cfg.delta * pi.norm()) / cfg.tail.tail_mass();
    if (std::abs(rebuilt - rep.objective) > 1e-8)
        throw NumericalError("worst-case CVaR reconstruction differs from the solver objective by " +
                             std::to_string(std::abs(rebuilt - rep.objective)));
    return rep.objective;
}

}  // namespace wdro
