#pragma once

// Polar-dictionary MMV baseline: simultaneous orthogonal matching pursuit on
// the mode-1 unfolding, Y_(1)^T = Phi X + N with Phi = S (x) W^H Bbar.

#include <stdexcept>
#include <utility>
#include <vector>

#include "nfce/codebook.hpp"
#include "nfce/pilots.hpp"
#include "nfce/tensor.hpp"

namespace nfce {

// The sensing matrix is never stored whole; its Kronecker factors (pilots S,
// projected dictionary D = W^H Bbar) are enough for correlations, and the LS
// refits only ever touch the handful of selected columns.
struct MmvProblem {
    CMat S;            // T x K
    CMat D;            // M x Q
    CMat dictionary;   // N x Q, the unprojected atoms
    CMat measurements; // (M*T) x P, Y_(1)^T with row j = m + M*t
    RMat col_norms;    // K x Q, ||phi_{k,q}||
    int sparsity = 1;

    int users() const { return static_cast<int>(S.cols()); }
    int atoms() const { return static_cast<int>(D.cols()); }
    Eigen::Index columns() const { return static_cast<Eigen::Index>(users()) * atoms(); }

    // Phi column k*Q + q, un-normalized.
    CVec column(int k, int q) const {
        const int M = static_cast<int>(D.rows());
        const int T = static_cast<int>(S.rows());
        CVec phi(static_cast<Eigen::Index>(M) * T);
        for (int t = 0; t < T; ++t)
            phi.segment(static_cast<Eigen::Index>(t) * M, M) = S(t, k) * D.col(q);
        return phi;
    }

    // Full Phi = S (x) D; intended for small instances only.
    CMat phi() const { return kron(S, D); }
};

inline MmvProblem build_mmv(const Tensor3& y, const PilotMatrix& pilots, const Combiner& W,
                            const PolarCodebook& codebook, int sparsity) {
    if (sparsity < 1) throw std::invalid_argument("build_mmv: sparsity must be >= 1");
    MmvProblem prob;
    prob.S = pilots.S;
    prob.dictionary = codebook.atoms();
    prob.D = W.W.adjoint() * codebook.atoms();
    prob.measurements = unfold(y, 1).transpose();
    prob.sparsity = sparsity;
    prob.col_norms.resize(pilots.users(), codebook.size());
    for (int k = 0; k < pilots.users(); ++k)
        for (Eigen::Index q = 0; q < codebook.size(); ++q)
            prob.col_norms(k, q) = prob.S.col(k).norm() * prob.D.col(q).norm();
    return prob;
}

struct SompResult {
    std::vector<std::pair<int, int>> support;  // (user, atom) per iteration
    CMat coefficients;                         // |support| x P, rows match support order
    std::vector<double> residual_history;      // ||R||_F after each refit
    CMat residual;                             // final (M*T) x P residual
    bool truncated = false;                    // stopped early at measurement rank
};

inline SompResult somp(const MmvProblem& prob) {
    const int K = prob.users(), Q = prob.atoms();
    const int P = static_cast<int>(prob.measurements.cols());
    const Eigen::Index rows = prob.measurements.rows();
    const int M = static_cast<int>(prob.D.rows());
    const int T = static_cast<int>(prob.S.rows());

    SompResult res;
    res.residual = prob.measurements;
    CMat selected(rows, 0);

    for (int iter = 0; iter < prob.sparsity; ++iter) {
        if (static_cast<Eigen::Index>(res.support.size()) >= rows) {
            res.truncated = true;
            break;
        }
        // corr(k, q) = sum_p |phi_{k,q}^H r_p| / ||phi_{k,q}||, accumulated
        // through the Kronecker structure: phi^H R = sum_t conj(S(t,k)) D^H R_t.
        RMat corr = RMat::Zero(K, Q);
        std::vector<CMat> proj(T);
        for (int t = 0; t < T; ++t)
            proj[t] = prob.D.adjoint() * res.residual.middleRows(static_cast<Eigen::Index>(t) * M, M);
        for (int k = 0; k < K; ++k) {
            CMat acc = CMat::Zero(Q, P);
            for (int t = 0; t < T; ++t) acc += std::conj(prob.S(t, k)) * proj[t];
            corr.row(k) = acc.cwiseAbs().rowwise().sum().transpose().cwiseQuotient(
                prob.col_norms.row(k).cwiseMax(1e-300));
        }
        for (const auto& [k, q] : res.support) corr(k, q) = -1.0;

        Eigen::Index bk = 0, bq = 0;
        corr.maxCoeff(&bk, &bq);
        res.support.emplace_back(static_cast<int>(bk), static_cast<int>(bq));

        selected.conservativeResize(rows, selected.cols() + 1);
        selected.col(selected.cols() - 1) = prob.column(static_cast<int>(bk), static_cast<int>(bq));

        res.coefficients = selected.colPivHouseholderQr().solve(prob.measurements);
        res.residual = prob.measurements - selected * res.coefficients;
        res.residual_history.push_back(res.residual.norm());
    }
    return res;
}

// h_hat[p][k] = sum over the support entries of user k of atom_q * X(row, p).
inline std::vector<std::vector<CVec>> somp_channels(const MmvProblem& prob, const SompResult& res) {
    const int P = static_cast<int>(prob.measurements.cols());
    const int K = prob.users();
    const int N = static_cast<int>(prob.dictionary.rows());
    std::vector<std::vector<CVec>> h(P, std::vector<CVec>(K, CVec::Zero(N)));
    for (size_t j = 0; j < res.support.size(); ++j) {
        const auto& [k, q] = res.support[j];
        for (int p = 0; p < P; ++p)
            h[p][k] += res.coefficients(static_cast<Eigen::Index>(j), p) * prob.dictionary.col(q);
    }
    return h;
}

}  // namespace nfce
