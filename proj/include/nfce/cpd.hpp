#pragma once

// CPD via alternating least squares, plus Kruskal-condition diagnostics.

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nfce/pilots.hpp"
#include "nfce/tensor.hpp"

namespace nfce {

namespace detail {

// Numerical rank of the column subset given by idx (smallest singular value
// threshold relative to the largest).
inline bool subset_full_rank(const CMat& m, const std::vector<int>& idx, double tol = 1e-8) {
    CMat sub(m.rows(), idx.size());
    for (size_t j = 0; j < idx.size(); ++j) sub.col(j) = m.col(idx[j]);
    Eigen::JacobiSVD<CMat> svd(sub);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return true;
    return sv(sv.size() - 1) > tol * std::max(sv(0), 1e-300);
}

// All size-k subsets of {0..n-1}, visiting fn(subset); returns false if fn
// ever returns false.
template <typename Fn>
inline bool for_each_subset(int n, int k, Fn&& fn) {
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        if (!fn(idx)) return false;
        int i = k - 1;
        while (i >= 0 && idx[i] == n - k + i) --i;
        if (i < 0) return true;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

}  // namespace detail

// Largest k such that every k columns are linearly independent (exhaustive
// over subsets; intended for small column counts).
inline int k_rank(const CMat& m, double tol = 1e-8) {
    const int cols = static_cast<int>(m.cols());
    const int cap = std::min<int>(static_cast<int>(m.rows()), cols);
    int k = 0;
    for (int size = 1; size <= cap; ++size) {
        const bool all_ok = detail::for_each_subset(cols, size, [&](const std::vector<int>& idx) {
            return detail::subset_full_rank(m, idx, tol);
        });
        if (!all_ok) break;
        k = size;
    }
    return k;
}

struct KruskalResult {
    int k_G = 0, k_A = 0, k_S = 0;
    int rank = 0;
    bool satisfied = false;  // k_G + k_A + k_S >= 2L + 2
};

inline KruskalResult kruskal_check(const FactorSet& f) {
    KruskalResult res;
    res.rank = f.rank();
    res.k_G = k_rank(f.G);
    res.k_A = k_rank(f.A);
    res.k_S = k_rank(f.S);
    res.satisfied = res.k_G + res.k_A + res.k_S >= 2 * res.rank + 2;
    return res;
}

struct AlsOptions {
    int max_sweeps = 500;
    double tol = 1e-8;  // relative fit change
    // When set, S is initialized from the known pilot matrix (legitimate:
    // pilots are known at the BS); G and A come from unfolding SVDs.
    const PilotMatrix* pilot_init = nullptr;
    const RMat* mapping = nullptr;  // with pilot_init, expands S_o to S_o O
    // Full starting point override for restarts; takes precedence.
    const FactorSet* init = nullptr;
};

struct AlsReport {
    int iterations = 0;
    double fit_error = 0.0;  // ||Y - reconstruction||_F / ||Y||_F
    bool converged = false;
    bool regularized = false;  // a rank-deficient LS system needed a ridge
    std::vector<double> fit_history;
};

namespace detail {

// Solves min_X || U^T - (B (*) A) X^T ||_F via the normal equations, using
// the Khatri-Rao Gram identity (B^H B) .* (A^H A). Falls back to a small
// ridge when the Gram matrix is near-singular.
inline CMat kr_least_squares(const CMat& unfolding, const CMat& b, const CMat& a, bool& regularized) {
    const CMat gram = (b.adjoint() * b).cwiseProduct(a.adjoint() * a);
    const CMat rhs = khatri_rao(b, a).adjoint() * unfolding.transpose();  // L x rows(X)
    Eigen::LDLT<CMat> ldlt(gram);
    CMat sol;
    const double cond_tol = 1e-13 * gram.diagonal().real().maxCoeff();
    if (ldlt.info() == Eigen::Success && ldlt.vectorD().real().minCoeff() > cond_tol) {
        sol = ldlt.solve(rhs);
    } else {
        regularized = true;
        CMat ridged = gram;
        ridged.diagonal().array() += 1e-12 * gram.trace();
        sol = ridged.ldlt().solve(rhs);
    }
    return sol.transpose();
}

}  // namespace detail

// Alternating least squares for a rank-L CPD of y. Each sweep solves the
// three linear LS problems in turn; the Frobenius fit is non-increasing
// across sweeps.
inline std::pair<FactorSet, AlsReport> cpd_als(const Tensor3& y, int rank, const AlsOptions& opts = {}) {
    if (rank < 1) throw std::invalid_argument("cpd_als: rank must be >= 1");
    const int P = y.dim1(), M = y.dim2(), T = y.dim3();
    const CMat y1 = unfold(y, 1), y2 = unfold(y, 2), y3 = unfold(y, 3);
    const double ynorm = std::max(y.norm(), 1e-300);

    FactorSet f;
    f.block_sizes.assign(rank, 1);

    if (opts.init != nullptr) {
        if (opts.init->G.rows() != P || opts.init->A.rows() != M || opts.init->S.rows() != T ||
            opts.init->rank() != rank)
            throw std::invalid_argument("cpd_als: init dimensions do not match");
        f.G = opts.init->G;
        f.A = opts.init->A;
        f.S = opts.init->S;
    } else {
        // Leading singular vectors of the unfoldings for G and A.
        Eigen::JacobiSVD<CMat> svd1(y1, Eigen::ComputeThinU);
        Eigen::JacobiSVD<CMat> svd2(y2, Eigen::ComputeThinU);
        f.G = CMat::Zero(P, rank);
        f.A = CMat::Zero(M, rank);
        const int n1 = std::min<int>(rank, static_cast<int>(svd1.matrixU().cols()));
        const int n2 = std::min<int>(rank, static_cast<int>(svd2.matrixU().cols()));
        f.G.leftCols(n1) = svd1.matrixU().leftCols(n1);
        f.A.leftCols(n2) = svd2.matrixU().leftCols(n2);
        for (int l = n1; l < rank; ++l) f.G(l % P, l) = 1.0;
        for (int l = n2; l < rank; ++l) f.A(l % M, l) = 1.0;

        if (opts.pilot_init != nullptr) {
            const CMat& So = opts.pilot_init->S;
            if (opts.mapping != nullptr) {
                if (opts.mapping->cols() != rank)
                    throw std::invalid_argument("cpd_als: mapping column count != rank");
                f.S = So * opts.mapping->cast<Complex>();
            } else {
                if (So.cols() != rank)
                    throw std::invalid_argument(
                        "cpd_als: pilot column count != rank (provide a mapping)");
                f.S = So;
            }
        } else {
            Eigen::JacobiSVD<CMat> svd3(y3, Eigen::ComputeThinU);
            f.S = CMat::Zero(T, rank);
            const int n3 = std::min<int>(rank, static_cast<int>(svd3.matrixU().cols()));
            f.S.leftCols(n3) = svd3.matrixU().leftCols(n3);
            for (int l = n3; l < rank; ++l) f.S(l % T, l) = 1.0;
        }
    }

    AlsReport rep;
    double prev_fit = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        f.G = detail::kr_least_squares(y1, f.S, f.A, rep.regularized);
        f.A = detail::kr_least_squares(y2, f.S, f.G, rep.regularized);
        f.S = detail::kr_least_squares(y3, f.A, f.G, rep.regularized);

        const double fit = (y - cpd_reconstruct(f)).norm() / ynorm;
        rep.fit_history.push_back(fit);
        rep.iterations = sweep + 1;
        rep.fit_error = fit;
        if (std::abs(prev_fit - fit) < opts.tol * std::max(prev_fit, 1e-300) || fit < 1e-14) {
            rep.converged = true;
            break;
        }
        prev_fit = fit;
    }
    return {f, rep};
}

}  // namespace nfce
