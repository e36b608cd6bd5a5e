#pragma once

// Assembles the received tensor from channel parameters, pilots and combiner;
// injects noise at a target SNR.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nfce/geometry.hpp"
#include "nfce/pilots.hpp"
#include "nfce/tensor.hpp"

namespace nfce {

// Complete description of one trial: constants, per-user path lists (in user
// order), pilots and combiner. The binary path-to-user map O is implied by
// PathParams::user.
struct Scenario {
    SystemConfig cfg;
    std::vector<PathParams> paths;  // sorted by user, L_k entries for user k
    PilotMatrix pilots;             // T x K
    Combiner combiner;              // N x M
    DistanceModel model = DistanceModel::Fresnel;

    int total_paths() const { return static_cast<int>(paths.size()); }

    std::vector<int> block_sizes() const {
        std::vector<int> L(cfg.K, 0);
        for (const auto& p : paths) {
            if (p.user < 0 || p.user >= cfg.K)
                throw std::invalid_argument("Scenario: path user index out of range");
            ++L[p.user];
        }
        return L;
    }

    // K x L binary path-to-user mapping; row k has exactly L_k ones.
    RMat mapping() const {
        RMat O = RMat::Zero(cfg.K, total_paths());
        for (int l = 0; l < total_paths(); ++l) O(paths[l].user, l) = 1.0;
        return O;
    }

    std::vector<PathParams> user_paths(int k) const {
        std::vector<PathParams> out;
        for (const auto& p : paths)
            if (p.user == k) out.push_back(p);
        return out;
    }

    void validate() const {
        cfg.validate();
        if (pilots.symbols() != cfg.T || pilots.users() != cfg.K)
            throw std::invalid_argument("Scenario: pilot dimensions mismatch");
        if (combiner.W.rows() != cfg.N || combiner.W.cols() != cfg.M)
            throw std::invalid_argument("Scenario: combiner dimensions mismatch");
        int prev_user = 0;
        for (const auto& p : paths) {
            p.validate();
            if (p.user < prev_user)
                throw std::invalid_argument("Scenario: paths must be grouped by user");
            prev_user = p.user;
        }
    }
};

// Ground-truth factor triple (G, A, S_o O) of the noiseless tensor.
inline FactorSet true_factors(const Scenario& sc) {
    const int L = sc.total_paths();
    FactorSet f;
    f.G.resize(sc.cfg.P, L);
    f.A.resize(sc.cfg.M, L);
    f.S.resize(sc.cfg.T, L);
    for (int l = 0; l < L; ++l) {
        const auto& path = sc.paths[l];
        f.G.col(l) = delay_response(path.tau, sc.cfg);
        f.A.col(l) = path.alpha * (sc.combiner.W.adjoint() * steering_vector(path.theta, path.r, sc.cfg, sc.model));
        f.S.col(l) = sc.pilots.S.col(path.user);
    }
    f.block_sizes = sc.block_sizes();
    return f;
}

inline Tensor3 synthesize(const Scenario& sc) {
    sc.validate();
    return cpd_reconstruct(true_factors(sc));
}

// True channel vectors h_{p,k}, one N-vector per (subcarrier, user).
inline std::vector<std::vector<CVec>> true_channels(const Scenario& sc) {
    std::vector<std::vector<CVec>> h(sc.cfg.P, std::vector<CVec>(sc.cfg.K));
    for (int k = 0; k < sc.cfg.K; ++k) {
        const auto paths = sc.user_paths(k);
        for (int p = 1; p <= sc.cfg.P; ++p)
            h[p - 1][k] = paths.empty() ? CVec::Zero(sc.cfg.N).eval()
                                        : channel_vector(paths, p, sc.cfg, sc.model);
    }
    return h;
}

struct NoiseSpec {
    double snr_db = std::numeric_limits<double>::infinity();
    double sigma2 = 0.0;  // per-entry complex noise variance
};

// i.i.d. CN(0, sigma^2) noise with sigma^2 = ||y||_F^2 / (PMT 10^{snr/10});
// hits the target SNR in expectation. Infinite snr_db is a passthrough.
inline std::pair<Tensor3, NoiseSpec> add_noise(const Tensor3& y, double snr_db, Rng& rng) {
    NoiseSpec spec;
    spec.snr_db = snr_db;
    if (std::isinf(snr_db) && snr_db > 0) return {y, spec};
    const double energy = y.squaredNorm();
    if (energy <= 0.0) throw std::invalid_argument("add_noise: zero signal cannot define an SNR");
    spec.sigma2 = energy / (static_cast<double>(y.size()) * std::pow(10.0, snr_db / 10.0));
    Tensor3 out = y;
    const double s = std::sqrt(spec.sigma2);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.vec()(i) += s * complex_gaussian(rng);
    return {out, spec};
}

}  // namespace nfce
