#pragma once

#include "nfce/rng.hpp"
#include "nfce/tensor.hpp"

namespace testutil {

inline nfce::CMat random_cmat(int rows, int cols, nfce::Rng& rng) {
    nfce::CMat m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = nfce::complex_gaussian(rng);
    return m;
}

inline nfce::CVec random_cvec(int n, nfce::Rng& rng) {
    nfce::CVec v(n);
    for (int i = 0; i < n; ++i) v(i) = nfce::complex_gaussian(rng);
    return v;
}

// Largest normalized column correlation between est column j and its best
// match in truth; congruence of a factor pair is the worst column's best
// correlation after greedy matching.
inline double factor_congruence(const nfce::CMat& truth, const nfce::CMat& est) {
    double worst = 1.0;
    for (int j = 0; j < est.cols(); ++j) {
        double best = 0.0;
        for (int i = 0; i < truth.cols(); ++i) {
            const double c = std::abs(truth.col(i).dot(est.col(j))) /
                             (truth.col(i).norm() * est.col(j).norm());
            best = std::max(best, c);
        }
        worst = std::min(worst, best);
    }
    return worst;
}

// Largest principal angle (rad) between the column spans of a and b.
inline double subspace_angle(const nfce::CMat& a, const nfce::CMat& b) {
    Eigen::HouseholderQR<nfce::CMat> qa(a), qb(b);
    const nfce::CMat Qa = qa.householderQ() * nfce::CMat::Identity(a.rows(), a.cols());
    const nfce::CMat Qb = qb.householderQ() * nfce::CMat::Identity(b.rows(), b.cols());
    Eigen::JacobiSVD<nfce::CMat> svd(Qa.adjoint() * Qb);
    const double c = std::min(1.0, svd.singularValues().minCoeff());
    return std::acos(c);
}

}  // namespace testutil
