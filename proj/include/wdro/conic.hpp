#pragma once

// Primal-dual interior-point method for linear + second-order cone programs
//
//   minimize c'x  subject to  Ax = b,  Gx + s = h,  s in K,
//
// where K is a product of a nonnegative orthant (first `nonneg` rows of G)
// followed by second-order cones {(t, v) : ||v|| <= t}. The method follows
// the homogeneous self-dual embedding with Nesterov-Todd scaling and a
// Mehrotra predictor-corrector step, so infeasible and unbounded problems
// terminate with a certificate instead of stalling.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "wdro/error.hpp"

namespace wdro {

using SpMat = Eigen::SparseMatrix<double>;

enum class ConicStatus { optimal, infeasible, unbounded, max_iter };

inline const char* to_string(ConicStatus s) {
    switch (s) {
        case ConicStatus::optimal: return "optimal";
        case ConicStatus::infeasible: return "infeasible";
        case ConicStatus::unbounded: return "unbounded";
        case ConicStatus::max_iter: return "max_iter";
    }
    return "unknown";
}

struct ConicProblem {
    Eigen::VectorXd c;
    SpMat A;  // p x n, may have zero rows
    Eigen::VectorXd b;
    SpMat G;  // m x n
    Eigen::VectorXd h;
    int nonneg = 0;
    std::vector<int> soc;  // sizes of the second-order blocks, each >= 2
};

struct ConicSettings {
    double feastol = 1e-10;
    double abstol = 1e-10;
    double reltol = 1e-10;
    double inftol = 1e-9;
    int max_iter = 120;
    double static_reg = 7e-8;
    int refine_steps = 10;
};

struct ConicSolution {
    ConicStatus status = ConicStatus::max_iter;
    Eigen::VectorXd x, y, z, s;
    int iterations = 0;
    double pres = 0, dres = 0, gap = 0;
    double pobj = 0, dobj = 0;
    bool reduced_accuracy = false;  // converged only to the looser fallback tolerances
};

namespace conic_detail {

using Vec = Eigen::VectorXd;

struct Cones {
    int l = 0;
    std::vector<int> q;
    std::vector<int> start;  // offset of each SOC block
    int m = 0;

    Cones(int nonneg, const std::vector<int>& soc) : l(nonneg), q(soc) {
        int off = l;
        for (int k : q) {
            if (k < 2) throw ArgumentError("second-order cone blocks need dimension >= 2");
            start.push_back(off);
            off += k;
        }
        m = off;
    }

    int degree() const { return l + static_cast<int>(q.size()); }
};

inline double soc_residual(double t, const Eigen::Ref<const Vec>& v) {
    const double nv = v.norm();
    return (t - nv) * (t + nv);
}

// Smallest eigenvalue-style margin; negative means outside the cone.
inline double min_margin(const Cones& K, const Vec& u) {
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < K.l; ++i) m = std::min(m, u(i));
    for (std::size_t k = 0; k < K.q.size(); ++k) {
        const int o = K.start[k], d = K.q[k];
        m = std::min(m, u(o) - u.segment(o + 1, d - 1).norm());
    }
    return m;
}

inline void add_identity(const Cones& K, Vec& u, double a) {
    for (int i = 0; i < K.l; ++i) u(i) += a;
    for (std::size_t k = 0; k < K.q.size(); ++k) u(K.start[k]) += a;
}

inline Vec identity(const Cones& K) {
    Vec e = Vec::Zero(K.m);
    add_identity(K, e, 1.0);
    return e;
}

inline Vec jordan_product(const Cones& K, const Vec& u, const Vec& v) {
    Vec w(K.m);
    w.head(K.l) = u.head(K.l).cwiseProduct(v.head(K.l));
    for (std::size_t k = 0; k < K.q.size(); ++k) {
        const int o = K.start[k], d = K.q[k];
        w(o) = u.segment(o, d).dot(v.segment(o, d));
        w.segment(o + 1, d - 1) = u(o) * v.segment(o + 1, d - 1) + v(o) * u.segment(o + 1, d - 1);
    }
    return w;
}

// Solves lambda o u = v for u.
inline Vec jordan_divide(const Cones& K, const Vec& lambda, const Vec& v) {
    Vec u(K.m);
    u.head(K.l) = v.head(K.l).cwiseQuotient(lambda.head(K.l));
    for (std::size_t k = 0; k < K.q.size(); ++k) {
        const int o = K.start[k], d = K.q[k];
        const double l0 = lambda(o);
        const auto l1 = lambda.segment(o + 1, d - 1);
        const double rho = soc_residual(l0, l1);
        const double u0 = (l0 * v(o) - l1.dot(v.segment(o + 1, d - 1))) / rho;
        u(o) = u0;
        u.segment(o + 1, d - 1) = (v.segment(o + 1, d - 1) - u0 * l1) / l0;
    }
    return u;
}

// Nesterov-Todd scaling W with W z = W^{-1} s = lambda.
struct Scaling {
    Vec lp;  // sqrt(s / z)
    std::vector<double> eta;
    std::vector<Vec> wbar;  // (w0, w1) with w0^2 - ||w1||^2 = 1

    static Scaling compute(const Cones& K, const Vec& s, const Vec& z) {
        Scaling W;
        W.lp = (s.head(K.l).array() / z.head(K.l).array()).sqrt();
        for (std::size_t k = 0; k < K.q.size(); ++k) {
            const int o = K.start[k], d = K.q[k];
            const double sn = std::sqrt(soc_residual(s(o), s.segment(o + 1, d - 1)));
            const double zn = std::sqrt(soc_residual(z(o), z.segment(o + 1, d - 1)));
            const Vec sb = s.segment(o, d) / sn;
            const Vec zb = z.segment(o, d) / zn;
            const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
            Vec w(d);
            w(0) = (sb(0) + zb(0)) / (2.0 * gamma);
            w.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * gamma);
            W.eta.push_back(std::sqrt(sn / zn));
            W.wbar.push_back(std::move(w));
        }
        return W;
    }

    Vec apply(const Cones& K, const Vec& v, bool inverse) const {
        Vec out(K.m);
        if (inverse)
            out.head(K.l) = v.head(K.l).cwiseQuotient(lp);
        else
            out.head(K.l) = v.head(K.l).cwiseProduct(lp);
        for (std::size_t k = 0; k < K.q.size(); ++k) {
            const int o = K.start[k], d = K.q[k];
            const Vec& w = wbar[k];
            const double w0 = w(0);
            const auto w1 = w.tail(d - 1);
            const double v0 = v(o);
            const auto v1 = v.segment(o + 1, d - 1);
            const double sgn = inverse ? -1.0 : 1.0;
            const double f = inverse ? 1.0 / eta[k] : eta[k];
            const double dot = w1.dot(v1);
            out(o) = f * (w0 * v0 + sgn * dot);
            out.segment(o + 1, d - 1) = f * (sgn * v0 * w1 + v1 + (dot / (1.0 + w0)) * w1);
        }
        return out;
    }

    // Dense W^2 block for SOC k: eta^2 (2 w w' - J).
    Eigen::MatrixXd soc_square(std::size_t k) const {
        const Vec& w = wbar[k];
        const Eigen::Index d = w.size();
        Eigen::MatrixXd M = 2.0 * w * w.transpose();
        M(0, 0) -= 1.0;
        for (Eigen::Index i = 1; i < d; ++i) M(i, i) += 1.0;
        return eta[k] * eta[k] * M;
    }
};

// Largest step alpha in [0, cap] keeping u + alpha du inside the cone.
inline double max_step(const Cones& K, const Vec& u, const Vec& du, double cap) {
    double a = cap;
    for (int i = 0; i < K.l; ++i)
        if (du(i) < 0) a = std::min(a, -u(i) / du(i));
    for (std::size_t k = 0; k < K.q.size(); ++k) {
        const int o = K.start[k], d = K.q[k];
        const double x0 = u(o), d0 = du(o);
        const auto x1 = u.segment(o + 1, d - 1);
        const auto d1 = du.segment(o + 1, d - 1);
        const double qa = d0 * d0 - d1.squaredNorm();
        const double qb = x0 * d0 - x1.dot(d1);
        const double qc = std::max(soc_residual(x0, x1), 0.0);
        double root = std::numeric_limits<double>::infinity();
        const double disc = qb * qb - qa * qc;
        if (std::abs(qa) < 1e-300) {
            if (qb < 0) root = -qc / (2.0 * qb);
        } else if (disc >= 0) {
            const double sq = std::sqrt(disc);
            const double qq = -(qb + (qb >= 0 ? sq : -sq));
            for (double r : {qq / qa, qq != 0.0 ? qc / qq : std::numeric_limits<double>::infinity()})
                if (r > 0 && r < root) root = r;
        }
        // the scalar part must also stay nonnegative
        if (d0 < 0) root = std::min(root, -x0 / d0);
        a = std::min(a, root);
    }
    return std::max(a, 0.0);
}

// Sparse LDL' factorization (up-looking, elimination-tree based) of a
// quasidefinite matrix. Pivots with the wrong sign or negligible magnitude
// are replaced by +-dyn_reg, and iterative refinement against the exact
// matrix recovers the accuracy lost by that perturbation.
class QuasidefiniteLdl {
public:
    // `upper` is the permuted matrix, upper triangle, column-major.
    void analyze(const SpMat& upper) {
        const int N = static_cast<int>(upper.cols());
        n_ = N;
        parent_.assign(N, -1);
        lnz_.assign(N, 0);
        flag_.assign(N, 0);
        const int* Ap = upper.outerIndexPtr();
        const int* Ai = upper.innerIndexPtr();
        for (int k = 0; k < N; ++k) {
            flag_[k] = k;
            for (int p = Ap[k]; p < Ap[k + 1]; ++p) {
                int i = Ai[p];
                if (i >= k) continue;
                for (; flag_[i] != k; i = parent_[i]) {
                    if (parent_[i] == -1) parent_[i] = k;
                    ++lnz_[i];
                    flag_[i] = k;
                }
            }
        }
        Lp_.assign(N + 1, 0);
        for (int k = 0; k < N; ++k) Lp_[k + 1] = Lp_[k] + lnz_[k];
        Li_.assign(static_cast<std::size_t>(Lp_[N]), 0);
        Lx_.assign(static_cast<std::size_t>(Lp_[N]), 0.0);
        D_.assign(N, 0.0);
    }

    // sign[k] = +1 or -1 is the expected sign of pivot k.
    void factor(const SpMat& upper, const std::vector<int>& sign, double eps, double dyn_reg) {
        const int N = n_;
        const int* Ap = upper.outerIndexPtr();
        const int* Ai = upper.innerIndexPtr();
        const double* Ax = upper.valuePtr();
        std::vector<double> Y(N, 0.0);
        std::vector<int> pattern(N);
        for (int k = 0; k < N; ++k) {
            int top = N;
            flag_[k] = k;
            lnz_[k] = 0;
            for (int p = Ap[k]; p < Ap[k + 1]; ++p) {
                int i = Ai[p];
                Y[i] += Ax[p];
                int len = 0;
                for (; flag_[i] != k; i = parent_[i]) {
                    pattern[len++] = i;
                    flag_[i] = k;
                }
                while (len > 0) pattern[--top] = pattern[--len];
            }
            double d = Y[k];
            Y[k] = 0.0;
            for (; top < N; ++top) {
                const int i = pattern[top];
                const double yi = Y[i];
                Y[i] = 0.0;
                const int p2 = Lp_[i] + lnz_[i];
                for (int p = Lp_[i]; p < p2; ++p) Y[Li_[p]] -= Lx_[p] * yi;
                const double lki = yi / D_[i];
                d -= lki * yi;
                Li_[p2] = k;
                Lx_[p2] = lki;
                ++lnz_[i];
            }
            if (sign[k] * d <= eps) d = sign[k] * dyn_reg;
            D_[k] = d;
        }
    }

    // In place solve with the permuted factor.
    void solve(Eigen::VectorXd& x) const {
        for (int j = 0; j < n_; ++j)
            for (int p = Lp_[j]; p < Lp_[j + 1]; ++p) x(Li_[p]) -= Lx_[p] * x(j);
        for (int j = 0; j < n_; ++j) x(j) /= D_[j];
        for (int j = n_ - 1; j >= 0; --j)
            for (int p = Lp_[j]; p < Lp_[j + 1]; ++p) x(j) -= Lx_[p] * x(Li_[p]);
    }

private:
    int n_ = 0;
    std::vector<int> parent_, lnz_, flag_, Lp_, Li_;
    std::vector<double> Lx_, D_;
};

class KktSystem {
public:
    KktSystem(const ConicProblem& P, const Cones& K, double reg)
        : P_(P), K_(K), n_(static_cast<int>(P.c.size())), p_(static_cast<int>(P.b.size())), reg_(reg) {}

    // Assemble with the given scaling (or -I when W is null) and factor.
    void factor(const Scaling* W) {
        const int N = n_ + p_ + K_.m;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(P_.A.nonZeros() + P_.G.nonZeros() + N));
        for (int i = 0; i < n_; ++i) trip.emplace_back(i, i, 0.0);
        for (int k = 0; k < P_.A.outerSize(); ++k)
            for (SpMat::InnerIterator it(P_.A, k); it; ++it)
                trip.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        for (int k = 0; k < P_.G.outerSize(); ++k)
            for (SpMat::InnerIterator it(P_.G, k); it; ++it)
                trip.emplace_back(n_ + p_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        for (int i = 0; i < p_; ++i) trip.emplace_back(n_ + i, n_ + i, 0.0);
        const int z0 = n_ + p_;
        for (int i = 0; i < K_.l; ++i) {
            const double w = W ? W->lp(i) : 1.0;
            trip.emplace_back(z0 + i, z0 + i, -w * w);
        }
        for (std::size_t k = 0; k < K_.q.size(); ++k) {
            const int o = z0 + K_.start[k], d = K_.q[k];
            Eigen::MatrixXd B = W ? W->soc_square(k) : Eigen::MatrixXd::Identity(d, d);
            for (int c = 0; c < d; ++c)
                for (int r = c; r < d; ++r) trip.emplace_back(o + r, o + c, -B(r, c));
        }
        SpMat lower(N, N);
        lower.setFromTriplets(trip.begin(), trip.end());
        full_ = lower.selfadjointView<Eigen::Lower>();

        if (perm_.empty()) {
            Eigen::AMDOrdering<int> amd;
            Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> P;
            amd(full_, P);
            perm_.assign(P.indices().data(), P.indices().data() + N);  // perm_[new] = old
            newpos_.assign(N, 0);
            for (int k = 0; k < N; ++k) newpos_[perm_[k]] = k;
            sign_.assign(N, 0);
            for (int k = 0; k < N; ++k) sign_[k] = perm_[k] < n_ ? 1 : -1;
        }
        std::vector<Eigen::Triplet<double>> up;
        up.reserve(trip.size());
        for (const auto& t : trip) {
            const int a = newpos_[t.row()], b = newpos_[t.col()];
            double v = t.value();
            if (t.row() == t.col()) v += t.row() < n_ ? reg_ : -reg_;
            up.emplace_back(std::min(a, b), std::max(a, b), v);
        }
        SpMat upper(N, N);
        upper.setFromTriplets(up.begin(), up.end());
        if (!analyzed_) {
            ldl_.analyze(upper);
            analyzed_ = true;
        }
        ldl_.factor(upper, sign_, 1e-13, 1e-7);
    }

    Vec solve(const Vec& rhs, int refine) const {
        const Eigen::Index N = rhs.size();
        auto apply_inverse = [&](const Vec& r) {
            Vec t(N);
            for (Eigen::Index k = 0; k < N; ++k) t(k) = r(perm_[k]);
            ldl_.solve(t);
            Vec out(N);
            for (Eigen::Index k = 0; k < N; ++k) out(perm_[k]) = t(k);
            return out;
        };
        Vec u = apply_inverse(rhs);
        const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0; it < refine; ++it) {
            const Vec r = rhs - full_ * u;
            const double err = r.lpNorm<Eigen::Infinity>();
            if (err <= 1e-15 * scale || err > 0.5 * prev) break;
            prev = err;
            u += apply_inverse(r);
        }
        return u;
    }

private:
    const ConicProblem& P_;
    const Cones& K_;
    int n_, p_;
    double reg_;
    SpMat full_;
    std::vector<int> perm_, newpos_, sign_;
    QuasidefiniteLdl ldl_;
    bool analyzed_ = false;
};

}  // namespace conic_detail

inline ConicSolution solve_conic(const ConicProblem& P, const ConicSettings& opt = {}) {
    using namespace conic_detail;
    const Cones K(P.nonneg, P.soc);
    const int n = static_cast<int>(P.c.size());
    const int p = static_cast<int>(P.b.size());
    const int m = K.m;
    if (P.A.rows() != p || (p > 0 && P.A.cols() != n) || P.G.rows() != m || P.G.cols() != n ||
        P.h.size() != m)
        throw ArgumentError("conic problem dimensions are inconsistent");

    const SpMat At = P.A.transpose();
    const SpMat Gt = P.G.transpose();
    const double nb = std::max(1.0, P.b.norm());
    const double nh = std::max(1.0, P.h.norm());
    const double nc = std::max(1.0, P.c.norm());

    KktSystem kkt(P, K, opt.static_reg);
    auto split = [&](const Vec& u, Vec& x, Vec& y, Vec& z) {
        x = u.head(n);
        y = u.segment(n, p);
        z = u.tail(m);
    };

    // Initial point from two least-squares solves with W = I.
    kkt.factor(nullptr);
    Vec x, y, z, s;
    {
        Vec rhs(n + p + m);
        rhs << Vec::Zero(n), P.b, P.h;
        Vec xx, yy, zz;
        split(kkt.solve(rhs, opt.refine_steps), xx, yy, zz);
        x = xx;
        s = -zz;
        const double a = -min_margin(K, s);
        if (a >= 0) add_identity(K, s, 1.0 + a);

        rhs << -P.c, Vec::Zero(p), Vec::Zero(m);
        split(kkt.solve(rhs, opt.refine_steps), xx, yy, zz);
        y = yy;
        z = zz;
        const double b = -min_margin(K, z);
        if (b >= 0) add_identity(K, z, 1.0 + b);
    }
    double tau = 1.0, kap = 1.0;
    const double deg = K.degree() + 1.0;
    const Vec e = identity(K);

    ConicSolution sol;
    sol.status = ConicStatus::max_iter;

    auto record = [&](ConicStatus st) {
        sol.status = st;
        if (st == ConicStatus::optimal || st == ConicStatus::max_iter) {
            sol.x = x / tau;
            sol.y = y / tau;
            sol.z = z / tau;
            sol.s = s / tau;
        } else {
            sol.x = x;
            sol.y = y;
            sol.z = z;
            sol.s = s;
        }
    };

    double best_merit = std::numeric_limits<double>::infinity();
    ConicSolution best;

    for (int iter = 0; iter <= opt.max_iter; ++iter) {
        sol.iterations = iter;
        const Vec rx = At * y + Gt * z + P.c * tau;
        const Vec ry = -(P.A * x) + P.b * tau;
        const Vec rz = s + P.G * x - P.h * tau;
        const double cx = P.c.dot(x), by = P.b.dot(y), hz = P.h.dot(z);
        const double rt = kap + cx + by + hz;

        const double pres = std::max(ry.norm() / (tau * nb), rz.norm() / (tau * nh));
        const double dres = rx.norm() / (tau * nc);
        const double gap = s.dot(z) / (tau * tau);
        const double pobj = cx / tau;
        const double dobj = -(by + hz) / tau;
        double relgap = std::numeric_limits<double>::infinity();
        if (pobj < 0)
            relgap = gap / -pobj;
        else if (dobj > 0)
            relgap = gap / dobj;
        sol.pres = pres;
        sol.dres = dres;
        sol.gap = gap;
        sol.pobj = pobj;
        sol.dobj = dobj;

        if (pres < opt.feastol && dres < opt.feastol && (gap < opt.abstol || relgap < opt.reltol)) {
            record(ConicStatus::optimal);
            return sol;
        }
        const double merit = std::max({pres, dres, std::min(gap, relgap)});
        if (std::isfinite(merit) && merit < best_merit) {
            best_merit = merit;
            record(ConicStatus::max_iter);
            best = sol;
        }
        // Certificates of infeasibility.
        if (by + hz < 0) {
            const double r = (At * y + Gt * z).norm() / (-(by + hz));
            if (r < opt.inftol) {
                record(ConicStatus::infeasible);
                const double sc = -(by + hz);
                sol.y /= sc;
                sol.z /= sc;
                return sol;
            }
        }
        if (cx < 0) {
            Vec v(p + m);
            v << P.A * x, P.G * x + s;
            if (v.norm() / (-cx) < opt.inftol) {
                record(ConicStatus::unbounded);
                sol.x /= -cx;
                sol.s /= -cx;
                return sol;
            }
        }
        if (iter == opt.max_iter) break;

        const double mu = (s.dot(z) + tau * kap) / deg;
        Scaling W;
        try {
            W = Scaling::compute(K, s, z);
            kkt.factor(&W);
        } catch (const NumericalError&) {
            break;
        }
        const Vec lambda = W.apply(K, z, false);

        Vec rhs2(n + p + m);
        rhs2 << -P.c, P.b, P.h;
        const Vec u2 = kkt.solve(rhs2, opt.refine_steps);
        const double den_tau = P.c.dot(u2.head(n)) + P.b.dot(u2.segment(n, p)) + P.h.dot(u2.tail(m));

        auto direction = [&](double sigma, const Vec& ds, double dk, Vec& dx, Vec& dy, Vec& dz, Vec& dsv,
                             double& dtau, double& dkap) {
            Vec rhs1(n + p + m);
            rhs1 << -(1 - sigma) * rx, (1 - sigma) * ry, -(1 - sigma) * rz - W.apply(K, ds, false);
            const Vec u1 = kkt.solve(rhs1, opt.refine_steps);
            const double num1 = P.c.dot(u1.head(n)) + P.b.dot(u1.segment(n, p)) + P.h.dot(u1.tail(m));
            dtau = (-(1 - sigma) * rt - dk / tau - num1) / (den_tau - kap / tau);
            const Vec u = u1 + dtau * u2;
            split(u, dx, dy, dz);
            dsv = W.apply(K, ds - W.apply(K, dz, false), false);
            dkap = (dk - kap * dtau) / tau;
        };
        auto step_to_boundary = [&](const Vec& dsv, const Vec& dz, double dtau, double dkap) {
            double a = std::min(max_step(K, s, dsv, 1e6), max_step(K, z, dz, 1e6));
            if (dtau < 0) a = std::min(a, -tau / dtau);
            if (dkap < 0) a = std::min(a, -kap / dkap);
            return a;
        };

        // Predictor.
        Vec dxa, dya, dza, dsa;
        double dta, dka;
        direction(0.0, -lambda, -tau * kap, dxa, dya, dza, dsa, dta, dka);
        const double alpha_aff = std::min(1.0, step_to_boundary(dsa, dza, dta, dka));
        const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 0.0, 1.0);

        // Corrector.
        const Vec corr = jordan_product(K, W.apply(K, dsa, true), W.apply(K, dza, false));
        const Vec ds = jordan_divide(K, lambda, -jordan_product(K, lambda, lambda) - corr + sigma * mu * e);
        const double dk = -tau * kap - dta * dka + sigma * mu;
        Vec dx, dy, dz, dsv;
        double dt, dkp;
        direction(sigma, ds, dk, dx, dy, dz, dsv, dt, dkp);
        const double alpha = std::min(1.0, 0.99 * step_to_boundary(dsv, dz, dt, dkp));
        if (!(alpha > 1e-13) || !dx.allFinite()) break;

        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * dsv;
        tau += alpha * dt;
        kap += alpha * dkp;
    }

    // Stalled or out of iterations: return the best iterate, accepting it as
    // optimal when it satisfies tolerances loosened by three orders.
    if (std::isfinite(best_merit)) {
        sol = best;
        if (best.pres < 1e3 * opt.feastol && best.dres < 1e3 * opt.feastol &&
            (best.gap < 1e3 * opt.abstol ||
             best.gap < 1e3 * opt.reltol * std::max(std::abs(best.pobj), std::abs(best.dobj)))) {
            sol.status = ConicStatus::optimal;
            sol.reduced_accuracy = true;
        }
    }
    return sol;
}

/// Sparse affine expression sum_k coef_k * x_{var_k} + constant.
struct LinearExpr {
    std::vector<std::pair<int, double>> terms;
    double constant = 0.0;

    LinearExpr() = default;
    explicit LinearExpr(double c) : constant(c) {}

    static LinearExpr var(int j, double coef = 1.0) {
        LinearExpr e;
        e.terms.emplace_back(j, coef);
        return e;
    }

    LinearExpr& add(int j, double coef) {
        if (coef != 0.0) terms.emplace_back(j, coef);
        return *this;
    }
    LinearExpr& operator+=(const LinearExpr& o) {
        terms.insert(terms.end(), o.terms.begin(), o.terms.end());
        constant += o.constant;
        return *this;
    }
    LinearExpr& operator*=(double f) {
        for (auto& t : terms) t.second *= f;
        constant *= f;
        return *this;
    }
    friend LinearExpr operator+(LinearExpr a, const LinearExpr& b) { return a += b; }
    friend LinearExpr operator-(LinearExpr a, LinearExpr b) { return a += (b *= -1.0); }
    friend LinearExpr operator*(double f, LinearExpr a) { return a *= f; }
};

/// Incremental builder for ConicProblem. Constraint handles index the dual
/// vector of the solution: equalities into y, cone rows into z.
class ModelBuilder {
public:
    int add_variables(int count) {
        const int first = nvar_;
        nvar_ += count;
        cost_.resize(nvar_, 0.0);
        return first;
    }
    int variables() const { return nvar_; }

    void set_cost(int j, double c) { cost_.at(static_cast<std::size_t>(j)) = c; }

    /// expr == 0. Returns the index into y.
    int add_equality(const LinearExpr& e) {
        eq_.push_back(e);
        return static_cast<int>(eq_.size()) - 1;
    }

    /// expr >= 0. Returns the index into z.
    int add_nonneg(const LinearExpr& e) {
        nn_.push_back(e);
        return static_cast<int>(nn_.size()) - 1;
    }

    /// components[0] >= || components[1..] ||. Returns the block index.
    int add_soc(std::vector<LinearExpr> components) {
        if (components.size() < 2) throw ArgumentError("a cone needs at least two components");
        soc_.push_back(std::move(components));
        return static_cast<int>(soc_.size()) - 1;
    }

    /// Row of z holding the first component of SOC block k.
    int soc_row(int k) const {
        int off = static_cast<int>(nn_.size());
        for (int i = 0; i < k; ++i) off += static_cast<int>(soc_[static_cast<std::size_t>(i)].size());
        return off;
    }

    ConicProblem build() const {
        ConicProblem P;
        P.c = Eigen::Map<const Eigen::VectorXd>(cost_.data(), nvar_);
        std::vector<Eigen::Triplet<double>> ta, tg;
        P.b.resize(static_cast<Eigen::Index>(eq_.size()));
        for (std::size_t r = 0; r < eq_.size(); ++r) {
            for (const auto& [j, v] : eq_[r].terms) ta.emplace_back(static_cast<int>(r), j, v);
            P.b(static_cast<Eigen::Index>(r)) = -eq_[r].constant;
        }
        std::vector<const LinearExpr*> rows;
        for (const auto& e : nn_) rows.push_back(&e);
        for (const auto& blk : soc_) {
            P.soc.push_back(static_cast<int>(blk.size()));
            for (const auto& e : blk) rows.push_back(&e);
        }
        P.nonneg = static_cast<int>(nn_.size());
        P.h.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (const auto& [j, v] : rows[r]->terms) tg.emplace_back(static_cast<int>(r), j, -v);
            P.h(static_cast<Eigen::Index>(r)) = rows[r]->constant;
        }
        P.A.resize(static_cast<Eigen::Index>(eq_.size()), nvar_);
        P.A.setFromTriplets(ta.begin(), ta.end());
        P.G.resize(static_cast<Eigen::Index>(rows.size()), nvar_);
        P.G.setFromTriplets(tg.begin(), tg.end());
        return P;
    }

private:
    int nvar_ = 0;
    std::vector<double> cost_;
    std::vector<LinearExpr> eq_, nn_;
    std::vector<std::vector<LinearExpr>> soc_;
};

}  // namespace wdro
