#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wdro/conic.hpp"
#include "wdro/cvar.hpp"
#include "wdro/error.hpp"
#include "wdro/market_data.hpp"
#include "wdro/solve_report.hpp"

namespace wdro {

enum class MeanConstraint { at_least, equal };

struct NmcOptions {
    bool long_only = true;
    MeanConstraint mean = MeanConstraint::at_least;
};

/// Sample mean-CVaR linear program
///   min a + sum(u) / (alpha N)
///   u_i >= -pi'R_i - a,  u >= 0,  mean'pi >= rho,  1'pi = 1  [, pi >= 0].
inline SolveReport solve_nmc(const ReturnsMatrix& r, double rho, const TailSpec& tail, NmcOptions opt = {}) {
    const int n = static_cast<int>(r.assets());
    const int N = static_cast<int>(r.samples());
    const double alpha = tail.tail_mass();
    const Vector m = r.mean();

    ModelBuilder mb;
    const int pi = mb.add_variables(n);
    const int a = mb.add_variables(1);
    const int u = mb.add_variables(N);
    mb.set_cost(a, 1.0);
    for (int i = 0; i < N; ++i) {
        mb.set_cost(u + i, 1.0 / (alpha * N));
        LinearExpr e = LinearExpr::var(u + i).add(a, 1.0);
        for (int j = 0; j < n; ++j) e.add(pi + j, r.values()(i, j));
        mb.add_nonneg(e);
        mb.add_nonneg(LinearExpr::var(u + i));
    }
    LinearExpr mean(-rho);
    LinearExpr budget(-1.0);
    for (int j = 0; j < n; ++j) {
        mean.add(pi + j, m(j));
        budget.add(pi + j, 1.0);
    }
    int mean_row = -1;
    if (opt.mean == MeanConstraint::equal)
        mean_row = mb.add_equality(mean);
    else
        mean_row = mb.add_nonneg(mean);
    const int budget_row = mb.add_equality(budget);
    if (opt.long_only)
        for (int j = 0; j < n; ++j) mb.add_nonneg(LinearExpr::var(pi + j));

    const auto cs = default_conic_settings();
    const auto sol = solve_conic(mb.build(), cs);
    SolveReport rep;
    rep.model = "NMC";
    fill_status(rep, sol, cs);
    rep.parameters["rho"] = rho;
    rep.parameters["tail_mass"] = alpha;
    if (sol.status == SolveStatus::optimal) {
        rep.portfolio.weights = sol.x.segment(pi, n);
        rep.portfolio.threshold = sol.x(a);
        rep.duals["mean"] = opt.mean == MeanConstraint::equal ? -sol.y(mean_row) : sol.z(mean_row);
        rep.duals["budget"] = -sol.y(budget_row);
    }
    return rep;
}

struct SmoothOptions {
    double tolerance = 1e-8;  // projected-gradient norm declared optimal
    int max_iter = 200;       // Newton iterations per continuation stage
};

/// Stationary point of the smoothed mean-CVaR problem with both equality
/// constraints, together with its multipliers in the convention
/// grad_pi F = lambda1 * mean + lambda2 * 1.
struct SmoothKktState {
    Vector pi_star;
    double a_star = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double t = 0.0;
    double objective = 0.0;
    SolveStatus status = SolveStatus::max_iter;
    double stationarity = 0.0;  // inf-norm of the Lagrangian gradient
    double feasibility = 0.0;   // inf-norm of the equality residuals
    int iterations = 0;
    // Closed forms evaluated at the returned point, for cross-checking.
    double lambda1_closed = 0.0;  // least squares over the per-coordinate identity
    double lambda2_closed = 0.0;  // pi' grad - lambda1 rho
};

namespace smooth_detail {

struct Eval {
    double f;
    Vector grad;  // (pi, a)
    Matrix hess;
};

// Logistic sigmoid, stable for large |u|.
inline double sigmoid(double u) {
    if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

inline Eval evaluate(const Matrix& R, const Vector& z, double t, double alpha, bool with_hessian) {
    const Eigen::Index n = R.cols();
    const Eigen::Index N = R.rows();
    const Vector x = -(R * z.head(n)).array() - z(n);
    const double w = 1.0 / (alpha * static_cast<double>(N));
    Eval e;
    double acc = 0.0;
    Vector sig(N), curv(N);
    const SmoothingParam tp(t);
    for (Eigen::Index i = 0; i < N; ++i) {
        acc += smooth_plus(tp, x(i));
        sig(i) = sigmoid(x(i) / t);
        curv(i) = sig(i) * (1.0 - sig(i)) / t;
    }
    e.f = z(n) + w * acc;
    e.grad.resize(n + 1);
    e.grad.head(n) = -w * (R.transpose() * sig);
    e.grad(n) = 1.0 - w * sig.sum();
    if (with_hessian) {
        Matrix Ra(N, n + 1);
        Ra << R, Vector::Ones(N);
        e.hess = w * (Ra.transpose() * curv.asDiagonal() * Ra);
    }
    return e;
}

}  // namespace smooth_detail

/// Damped Newton in the null space of the equality constraints, with
/// continuation in t from 1e-1 down to the requested value.
inline SmoothKktState solve_smooth(const ReturnsMatrix& r, double rho, const TailSpec& tail, const SmoothingParam& t,
                                   SmoothOptions opt = {}) {
    using namespace smooth_detail;
    const Eigen::Index n = static_cast<Eigen::Index>(r.assets());
    const Matrix& R = r.values();
    const Vector m = r.mean();
    const double alpha = tail.tail_mass();
    if (n < 2) throw ArgumentError("solve_smooth needs at least two assets for an attainable mean target");
    if (!(rho > m.minCoeff() && rho < m.maxCoeff()))
        throw ArgumentError("rho must lie strictly between the smallest and largest asset mean");

    // Equality constraints on z = (pi, a): C z = d.
    Matrix C = Matrix::Zero(2, n + 1);
    C.row(0).head(n) = m.transpose();
    C.row(1).head(n).setOnes();
    Vector d(2);
    d << rho, 1.0;

    // Orthonormal null-space basis and minimum-norm feasible point.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(C);
    if (cod.rank() < 2) throw ArgumentError("mean and budget constraints are collinear");
    Eigen::HouseholderQR<Matrix> qr(C.transpose());
    const Matrix Qfull = qr.householderQ() * Matrix::Identity(n + 1, n + 1);
    const Matrix Z = Qfull.rightCols(n + 1 - 2);
    Vector z = cod.solve(d);
    z(n) = empirical_var(portfolio_losses(z.head(n), r), tail);

    SmoothKktState st;
    st.t = t.value();
    int total_iter = 0;

    std::vector<double> schedule;
    for (double tv = 1e-1; tv > t.value() * (1 + 1e-12); tv /= 10.0) schedule.push_back(tv);
    schedule.push_back(t.value());

    double pg = std::numeric_limits<double>::infinity();
    for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
        const double tv = schedule[stage];
        const bool last = stage + 1 == schedule.size();
        const double tol = last ? std::min(opt.tolerance, 1e-10) : 1e-6;
        double mu = 0.0;
        for (int it = 0; it < opt.max_iter; ++it) {
            const Eval e = evaluate(R, z, tv, alpha, true);
            const Vector g = Z.transpose() * e.grad;
            pg = g.lpNorm<Eigen::Infinity>();
            if (pg <= tol) break;
            ++total_iter;
            const Matrix Hr = Z.transpose() * e.hess * Z;
            const double scale = std::max(1e-12, Hr.diagonal().cwiseAbs().maxCoeff());
            bool stepped = false;
            for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
                Eigen::LDLT<Matrix> ldlt(Hr + mu * Matrix::Identity(Hr.rows(), Hr.cols()));
                Vector p;
                if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0).all())
                    p = -ldlt.solve(g);
                else
                    p = -g / scale;  // steepest descent fallback
                const Vector dz = Z * p;
                const double slope = e.grad.dot(dz);
                if (!(slope < 0)) {
                    mu = std::max(10 * mu, 1e-10 * scale);
                    continue;
                }
                double step = 1.0;
                // keep a full Newton step from overshooting far past the kinks
                const double len = dz.lpNorm<Eigen::Infinity>();
                if (len > 1.0) step = 1.0 / len;
                for (int ls = 0; ls < 60; ++ls) {
                    const Vector zn = z + step * dz;
                    const double fn = evaluate(R, zn, tv, alpha, false).f;
                    if (fn <= e.f + 1e-4 * step * slope) {
                        z = zn;
                        stepped = true;
                        break;
                    }
                    step *= 0.5;
                }
                if (stepped)
                    mu = mu > 0 ? mu / 10 : 0.0;
                else
                    mu = std::max(10 * mu, 1e-10 * scale);
            }
            if (!stepped) break;  // no descent possible in floating point
        }
    }

    // Re-project onto the constraint set to remove drift accumulated in
    // floating point; the correction is at rounding level.
    z += cod.solve(d - C * z);

    const Eval e = evaluate(R, z, t.value(), alpha, false);
    Matrix B(n, 2);
    B << m, Vector::Ones(n);
    const Vector lam = B.colPivHouseholderQr().solve(e.grad.head(n));
    st.pi_star = z.head(n);
    st.a_star = z(n);
    st.lambda1 = lam(0);
    st.lambda2 = lam(1);
    st.objective = e.f;
    st.iterations = total_iter;
    Vector kkt(n + 1);
    kkt.head(n) = e.grad.head(n) - B * lam;
    kkt(n) = e.grad(n);
    st.stationarity = kkt.lpNorm<Eigen::Infinity>();
    st.feasibility = (C * z - d).lpNorm<Eigen::Infinity>();
    st.status = (st.stationarity <= opt.tolerance && st.feasibility <= 1e-10) ? SolveStatus::optimal
                                                                              : SolveStatus::max_iter;

    // Closed forms: lambda2 = pi'g - lambda1 rho, and per coordinate
    // lambda1 = (g_i - pi'g) / (m_i - rho), combined by least squares.
    const Vector gp = e.grad.head(n);
    const double pig = st.pi_star.dot(gp);
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double di = m(i) - rho;
        if (std::abs(di) <= 1e-8) continue;
        num += di * (gp(i) - pig);
        den += di * di;
    }
    st.lambda1_closed = den > 0 ? num / den : 0.0;
    st.lambda2_closed = pig - st.lambda1 * rho;
    return st;
}

struct MultiplierLimits {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double residual = 0.0;     // least-squares residual of the per-coordinate identity
    int coordinates_used = 0;  // coordinates with |mean_i - rho| > 1e-8
    Vector expected_gradient;  // -(1/alpha) E[R 1{A <= 0}]
};

/// t -> 0 limits of the smooth multipliers at a solved state. Samples with
/// A = pi'R + a exactly zero are counted in the tail.
inline MultiplierLimits multiplier_limits(const SmoothKktState& state, const ReturnsMatrix& r, double rho,
                                          const TailSpec& tail) {
    const Eigen::Index n = static_cast<Eigen::Index>(r.assets());
    if (state.pi_star.size() != n) throw ArgumentError("state dimension does not match returns");
    const Matrix& R = r.values();
    const Vector m = r.mean();
    const double alpha = tail.tail_mass();
    const Vector A = (R * state.pi_star).array() + state.a_star;
    Vector eg = Vector::Zero(n);
    for (Eigen::Index i = 0; i < A.size(); ++i)
        if (A(i) <= 0.0) eg += R.row(i).transpose();
    eg *= -1.0 / (alpha * static_cast<double>(A.size()));

    MultiplierLimits out;
    out.expected_gradient = eg;
    const double pig = state.pi_star.dot(eg);
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double di = m(i) - rho;
        if (std::abs(di) <= 1e-8) continue;
        num += di * (eg(i) - pig);
        den += di * di;
        ++out.coordinates_used;
    }
    if (out.coordinates_used == 0)
        throw DegenerateError("every asset mean equals rho; the multiplier limit is undetermined");
    out.lambda1 = num / den;
    out.lambda2 = pig - out.lambda1 * rho;
    double res = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double di = m(i) - rho;
        if (std::abs(di) <= 1e-8) continue;
        const double e = eg(i) - pig - out.lambda1 * di;
        res += e * e;
    }
    out.residual = std::sqrt(res);
    return out;
}

}  // namespace wdro
