#pragma once

// Pilot matrices with low mutual coherence and random phase-only combiners.

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nfce/rng.hpp"
#include "nfce/tensor.hpp"

namespace nfce {

// T x K pilot matrix with unit-norm columns, common across subcarriers.
struct PilotMatrix {
    CMat S;  // T x K

    int symbols() const { return static_cast<int>(S.rows()); }
    int users() const { return static_cast<int>(S.cols()); }

    double max_coherence() const {
        double mu = 0.0;
        for (int i = 0; i < users(); ++i)
            for (int j = i + 1; j < users(); ++j) {
                const double c = std::abs(S.col(i).dot(S.col(j))) / (S.col(i).norm() * S.col(j).norm());
                mu = std::max(mu, c);
            }
        return mu;
    }
};

// N x M analog combiner with unit-modulus entries e^{j Phi}, Phi ~ U(0, 2 pi).
struct Combiner {
    CMat W;  // N x M
};

inline double welch_bound(int T, int K) {
    if (K <= T) return 0.0;
    return std::sqrt(static_cast<double>(K - T) / (static_cast<double>(T) * (K - 1)));
}

namespace detail {

// Alternating projection between the unit-column set and a Gram matrix whose
// off-diagonal magnitudes are clipped at the Welch bound. 200 fixed
// iterations; seeded by complex Gaussian columns.
inline CMat coherence_minimizer(int T, int K, Rng& rng) {
    CMat S(T, K);
    for (int j = 0; j < K; ++j)
        for (int i = 0; i < T; ++i)
            S(i, j) = complex_gaussian(rng);
    for (int j = 0; j < K; ++j) S.col(j).normalize();

    const double mu = welch_bound(T, K);
    CMat best = S;
    double best_mu = PilotMatrix{S}.max_coherence();
    for (int iter = 0; iter < 200; ++iter) {
        CMat G = S.adjoint() * S;
        for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j) {
                if (i == j) { G(i, j) = 1.0; continue; }
                const double m = std::abs(G(i, j));
                if (m > mu) G(i, j) *= mu / m;
            }
        // Nearest rank-T factorization of the clipped Gram matrix.
        Eigen::SelfAdjointEigenSolver<CMat> eig(G);
        CMat Snew(T, K);
        for (int t = 0; t < T; ++t) {
            const double lam = std::max(eig.eigenvalues()(K - 1 - t), 0.0);
            Snew.row(t) = std::sqrt(lam) * eig.eigenvectors().col(K - 1 - t).adjoint();
        }
        for (int j = 0; j < K; ++j) {
            const double n = Snew.col(j).norm();
            if (n > 0) Snew.col(j) /= n;
        }
        S = Snew;
        const double cur = PilotMatrix{S}.max_coherence();
        if (cur < best_mu) {
            best_mu = cur;
            best = S;
        }
    }
    return best;
}

}  // namespace detail

// For T >= K the first K columns of the T x T unitary DFT matrix (orthogonal
// pilots, zero coherence). For 2 <= T < K, a coherence-minimized unit-column
// packing. Deterministic given (T, K, rng state).
inline PilotMatrix design_pilots(int T, int K, Rng& rng) {
    if (T < 2)
        throw std::invalid_argument("design_pilots: T >= 2 required for uniqueness (k_S >= 2)");
    if (K < 1) throw std::invalid_argument("design_pilots: K must be positive");
    PilotMatrix out;
    if (T >= K) {
        out.S.resize(T, K);
        const double scale = 1.0 / std::sqrt(static_cast<double>(T));
        for (int t = 0; t < T; ++t)
            for (int k = 0; k < K; ++k)
                out.S(t, k) = scale * std::polar(1.0, -2.0 * std::numbers::pi * t * k / T);
        return out;
    }
    CMat best = detail::coherence_minimizer(T, K, rng);
    out.S = best;
    return out;
}

inline Combiner random_combiner(int N, int M, Rng& rng) {
    if (M > N) throw std::invalid_argument("random_combiner: M must be <= N");
    Combiner c;
    c.W.resize(N, M);
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n)
            c.W(n, m) = std::polar(1.0, uniform(rng, 0.0, 2.0 * std::numbers::pi));
    return c;
}

}  // namespace nfce
