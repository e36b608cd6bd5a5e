#pragma once

// Rank-(L_k, L_k, 1) block term decomposition via damped Gauss-Newton with
// SVD-based initialization.

#include <limits>
#include <stdexcept>
#include <vector>

#include "nfce/cpd.hpp"
#include "nfce/pilots.hpp"
#include "nfce/tensor.hpp"

namespace nfce {

// Per-user blocks of the BTD: Y = sum_k (G_k A_k^T) o s_k.
struct BtdModel {
    std::vector<CMat> G;  // K blocks, P x L_k
    std::vector<CMat> A;  // K blocks, M x L_k
    std::vector<CVec> s;  // K vectors, length T

    int users() const { return static_cast<int>(G.size()); }
    std::vector<int> block_sizes() const {
        std::vector<int> L(users());
        for (int k = 0; k < users(); ++k) L[k] = static_cast<int>(G[k].cols());
        return L;
    }

    FactorSet to_factors() const {
        FactorSet f;
        int L = 0;
        for (const auto& g : G) L += static_cast<int>(g.cols());
        const int P = static_cast<int>(G[0].rows());
        const int M = static_cast<int>(A[0].rows());
        const int T = static_cast<int>(s[0].size());
        f.G.resize(P, L);
        f.A.resize(M, L);
        f.S.resize(T, L);
        int col = 0;
        for (int k = 0; k < users(); ++k) {
            const int Lk = static_cast<int>(G[k].cols());
            f.G.middleCols(col, Lk) = G[k];
            f.A.middleCols(col, Lk) = A[k];
            for (int i = 0; i < Lk; ++i) f.S.col(col + i) = s[k];
            col += Lk;
        }
        f.block_sizes = block_sizes();
        return f;
    }

    Tensor3 reconstruct() const { return cpd_reconstruct(to_factors()); }
};

// SVD-based initialization: strip the pilot mixing from the mode-3 unfolding
// with a regularized pseudo-inverse, reshape each column to P x M, and split
// the truncated SVD symmetrically across G_k and A_k.
inline BtdModel btd_init(const Tensor3& y, const PilotMatrix& pilots,
                         const std::vector<int>& block_sizes, double epsilon = -1.0) {
    const int P = y.dim1(), M = y.dim2(), T = y.dim3();
    const int K = pilots.users();
    if (static_cast<int>(block_sizes.size()) != K)
        throw std::invalid_argument("btd_init: block size count != users");
    for (int Lk : block_sizes)
        if (Lk < 1 || Lk > std::min(P, M))
            throw std::invalid_argument("btd_init: block size must be in [1, min(P, M)]");
    const CMat& So = pilots.S;
    if (So.rows() != T) throw std::invalid_argument("btd_init: pilot symbol count mismatch");

    const CMat gram = So.adjoint() * So;
    if (epsilon < 0.0) epsilon = 1e-6 * gram.norm();
    CMat reg = gram;
    reg.diagonal().array() += epsilon;
    const CMat x3 = reg.ldlt().solve(So.adjoint() * unfold(y, 3));  // K x PM

    BtdModel model;
    model.G.resize(K);
    model.A.resize(K);
    model.s.resize(K);
    for (int k = 0; k < K; ++k) {
        // Column j = p + P*m of the mode-3 unfolding -> X_k(p, m) ~ G_k A_k^T.
        CMat xk(P, M);
        for (int m = 0; m < M; ++m)
            for (int p = 0; p < P; ++p)
                xk(p, m) = x3(k, p + static_cast<Eigen::Index>(P) * m);
        Eigen::JacobiSVD<CMat> svd(xk, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const int Lk = block_sizes[k];
        const RVec sq = svd.singularValues().head(Lk).cwiseSqrt();
        model.G[k] = svd.matrixU().leftCols(Lk) * sq.asDiagonal();
        model.A[k] = svd.matrixV().leftCols(Lk).conjugate() * sq.asDiagonal();
        model.s[k] = So.col(k);
    }
    return model;
}

struct NlsOptions {
    int max_iters = 200;
    double tol = 1e-14;          // relative residual-change stop
    double lambda_init = -1.0;   // < 0: 1e-3 * mean diagonal of J^H J
    double lambda_up = 2.0;
    double lambda_down = 0.5;
    int max_rejects = 50;
};

struct NlsState {
    int iterations = 0;
    double residual = 0.0;       // 0.5 ||mu||^2
    double rel_error = 0.0;      // ||Y - model||_F / ||Y||_F
    double lambda = 0.0;
    bool converged = false;
    bool aborted = false;        // non-finite residual encountered
};

namespace detail {

inline CVec btd_residual(const Tensor3& y, const BtdModel& model) {
    return y.vec() - model.reconstruct().vec();
}

// Complex Jacobian of the model vector w.r.t. all block entries, ordered per
// user as [vec(G_k); vec(A_k); s_k]. The residual is holomorphic in the
// parameters, so the damped complex normal equations are exactly the LM step
// on the real/imaginary-stacked parameter vector.
inline CMat btd_jacobian(const Tensor3& y, const BtdModel& model) {
    const int P = y.dim1(), M = y.dim2(), T = y.dim3();
    Eigen::Index n = 0;
    for (int k = 0; k < model.users(); ++k)
        n += static_cast<Eigen::Index>(model.G[k].size()) + model.A[k].size() + model.s[k].size();
    CMat J = CMat::Zero(y.size(), n);
    Eigen::Index col = 0;
    for (int k = 0; k < model.users(); ++k) {
        const int Lk = static_cast<int>(model.G[k].cols());
        // d model / d G_k(p, i) = A_k(m, i) s_k(t) at entry (p, m, t)
        for (int i = 0; i < Lk; ++i)
            for (int p = 0; p < P; ++p) {
                for (int t = 0; t < T; ++t)
                    for (int m = 0; m < M; ++m)
                        J(y.index(p, m, t), col) = model.A[k](m, i) * model.s[k](t);
                ++col;
            }
        // d model / d A_k(m, i) = G_k(p, i) s_k(t)
        for (int i = 0; i < Lk; ++i)
            for (int m = 0; m < M; ++m) {
                for (int t = 0; t < T; ++t)
                    J.block(y.index(0, m, t), col, P, 1) = model.s[k](t) * model.G[k].col(i);
                ++col;
            }
        // d model / d s_k(t) = (G_k A_k^T)(p, m)
        const CMat GA = model.G[k] * model.A[k].transpose();
        for (int t = 0; t < T; ++t) {
            for (int m = 0; m < M; ++m)
                J.block(y.index(0, m, t), col, P, 1) = GA.col(m);
            ++col;
        }
    }
    return J;
}

inline void btd_apply_step(BtdModel& model, const CVec& delta) {
    Eigen::Index pos = 0;
    for (int k = 0; k < model.users(); ++k) {
        const int Lk = static_cast<int>(model.G[k].cols());
        const int P = static_cast<int>(model.G[k].rows());
        const int M = static_cast<int>(model.A[k].rows());
        const int T = static_cast<int>(model.s[k].size());
        for (int i = 0; i < Lk; ++i, pos += P) model.G[k].col(i) += delta.segment(pos, P);
        for (int i = 0; i < Lk; ++i, pos += M) model.A[k].col(i) += delta.segment(pos, M);
        model.s[k] += delta.segment(pos, T);
        pos += T;
    }
}

}  // namespace detail

// Levenberg-Marquardt refinement of a BTD. The residual Jacobian is -J of
// the model Jacobian above; accepted steps never increase 0.5||mu||^2.
inline std::pair<BtdModel, NlsState> btd_nls(const Tensor3& y, const BtdModel& init,
                                             const NlsOptions& opts = {}) {
    BtdModel model = init;
    const double ynorm = std::max(y.norm(), 1e-300);
    NlsState st;

    CVec mu = detail::btd_residual(y, model);
    double fc = 0.5 * mu.squaredNorm();
    if (!std::isfinite(fc)) {
        st.aborted = true;
        st.residual = fc;
        return {model, st};
    }

    double lambda = opts.lambda_init;
    for (int iter = 0; iter < opts.max_iters; ++iter) {
        st.iterations = iter + 1;
        const CMat Jm = detail::btd_jacobian(y, model);  // d(model)/d(params)
        const CMat H = Jm.adjoint() * Jm;
        const CVec g = Jm.adjoint() * mu;  // = -J_res^H mu
        if (lambda < 0.0) lambda = 1e-3 * H.diagonal().real().mean();

        bool accepted = false;
        for (int rejects = 0; rejects < opts.max_rejects; ++rejects) {
            CMat damped = H;
            damped.diagonal().array() += lambda;
            Eigen::LDLT<CMat> ldlt(damped);
            if (ldlt.info() != Eigen::Success) {
                lambda *= opts.lambda_up;
                continue;
            }
            const CVec delta = ldlt.solve(g);
            BtdModel trial = model;
            detail::btd_apply_step(trial, delta);
            const CVec mu_trial = detail::btd_residual(y, trial);
            const double f_trial = 0.5 * mu_trial.squaredNorm();
            if (!std::isfinite(f_trial)) {
                st.aborted = true;
                st.residual = fc;
                st.rel_error = std::sqrt(2.0 * fc) / ynorm;
                st.lambda = lambda;
                return {model, st};
            }
            if (f_trial <= fc) {
                model = trial;
                mu = mu_trial;
                const double prev = fc;
                fc = f_trial;
                lambda *= opts.lambda_down;
                accepted = true;
                if (prev - fc < opts.tol * std::max(prev, 1e-300) || fc < 1e-28 * ynorm * ynorm) {
                    st.converged = true;
                }
                break;
            }
            lambda *= opts.lambda_up;
        }
        if (!accepted) {
            st.converged = true;  // no descent direction left at any damping
            break;
        }
        if (st.converged) break;
    }
    st.residual = fc;
    st.rel_error = std::sqrt(2.0 * fc) / ynorm;
    st.lambda = lambda;
    return {model, st};
}

struct GeneralizedKruskalResult {
    int kp_G = 0, kp_A = 0, k_S = 0;
    bool dimension_ok = false;   // PM >= sum L_k^2
    bool krank_ok = false;       // k'_G + k'_A + k_S >= 2K + 2
    bool satisfied = false;
};

// Generalized (block) k-rank: the largest n such that any n blocks taken
// together have linearly independent columns. Exhaustive over block subsets.
inline int generalized_k_rank(const std::vector<CMat>& blocks, double tol = 1e-8) {
    const int K = static_cast<int>(blocks.size());
    int k = 0;
    for (int size = 1; size <= K; ++size) {
        bool all_ok = detail::for_each_subset(K, size, [&](const std::vector<int>& idx) {
            Eigen::Index cols = 0;
            for (int b : idx) cols += blocks[b].cols();
            CMat cat(blocks[0].rows(), cols);
            Eigen::Index at = 0;
            for (int b : idx) {
                cat.middleCols(at, blocks[b].cols()) = blocks[b];
                at += blocks[b].cols();
            }
            Eigen::JacobiSVD<CMat> svd(cat);
            const auto& sv = svd.singularValues();
            return cols <= blocks[0].rows() &&
                   sv(sv.size() - 1) > tol * std::max(sv(0), 1e-300);
        });
        if (!all_ok) break;
        k = size;
    }
    return k;
}

inline GeneralizedKruskalResult generalized_kruskal_check(const BtdModel& model,
                                                          const PilotMatrix& pilots) {
    GeneralizedKruskalResult res;
    const int K = model.users();
    const Eigen::Index P = model.G[0].rows();
    const Eigen::Index M = model.A[0].rows();
    long sumL2 = 0;
    for (int Lk : model.block_sizes()) sumL2 += static_cast<long>(Lk) * Lk;
    res.dimension_ok = P * M >= sumL2;
    res.kp_G = generalized_k_rank(model.G);
    res.kp_A = generalized_k_rank(model.A);
    res.k_S = k_rank(pilots.S);
    res.krank_ok = res.kp_G + res.kp_A + res.k_S >= 2 * K + 2;
    res.satisfied = res.dimension_ok && res.krank_ok;
    return res;
}

}  // namespace nfce
