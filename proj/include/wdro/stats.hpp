#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "wdro/error.hpp"
#include "wdro/market_data.hpp"

namespace wdro {

/// Left-continuous empirical quantile: the smallest sample x with
/// F_N(x) >= level.
inline double empirical_quantile(std::vector<double> v, double level) {
    if (v.empty()) throw ArgumentError("quantile of an empty sample");
    if (!(level > 0.0 && level <= 1.0)) throw ArgumentError("quantile level must lie in (0, 1]");
    const double N = static_cast<double>(v.size());
    auto k = static_cast<long>(std::ceil(level * N - 1e-9));
    k = std::clamp(k, 1L, static_cast<long>(v.size()));
    const auto it = v.begin() + (k - 1);
    std::nth_element(v.begin(), it, v.end());
    return *it;
}

inline double empirical_quantile(const Vector& v, double level) {
    return empirical_quantile(std::vector<double>(v.data(), v.data() + v.size()), level);
}

struct PsdRoot {
    Matrix root;              // root * root' reproduces the clipped matrix
    double min_eigenvalue = 0.0;
};

/// Symmetric square root with negative eigenvalues clipped to zero. Throws
/// CovarianceError when an eigenvalue is more negative than -clip_tol
/// (scaled by the largest magnitude).
inline PsdRoot psd_root(const Matrix& S, double clip_tol = 1e-8) {
    if (S.rows() != S.cols()) throw ArgumentError("matrix must be square");
    const Matrix sym = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw CovarianceError("eigendecomposition failed");
    const Vector ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    PsdRoot out;
    out.min_eigenvalue = ev.size() ? ev.minCoeff() : 0.0;
    if (out.min_eigenvalue < -clip_tol * scale)
        throw CovarianceError("matrix is not positive semidefinite (eigenvalue " + std::to_string(out.min_eigenvalue) +
                              ")");
    out.root = es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    return out;
}

}  // namespace wdro
