#pragma once

// Fisher information and Cramer-Rao bounds for the LoS parameterization
// (one path per user) and the derived user positions.
//
// The likelihood mean uses the exact element distances; the matching analytic
// steering derivatives keep the Jacobian consistent with finite differences
// of the same mean.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nfce/geometry.hpp"
#include "nfce/pilots.hpp"
#include "nfce/scenario.hpp"
#include "nfce/tensor.hpp"

namespace nfce {

// Parameter vector xi = [theta; r; tau; Re alpha; Im alpha], length 5K.
struct ParamIndex {
    int K;
    int theta(int k) const { return k; }
    int r(int k) const { return K + k; }
    int tau(int k) const { return 2 * K + k; }
    int alpha_re(int k) const { return 3 * K + k; }
    int alpha_im(int k) const { return 4 * K + k; }
    int size() const { return 5 * K; }
};

struct CrbReport {
    RMat fim;          // 5K x 5K
    double crb_theta = 0.0;
    double crb_r = 0.0;
    double crb_tau = 0.0;
    double crb_alpha = 0.0;     // Re and Im blocks together
    double crb_position = 0.0;  // trace over all 2K position coordinates
    bool singular = false;
};

namespace detail {

inline CVec steering_exact(double theta, double r, const SystemConfig& cfg) {
    return steering_vector(theta, r, cfg, DistanceModel::Exact);
}

// d b / d theta and d b / d r, entrywise on the exact-distance phases.
inline void steering_derivatives(double theta, double r, const SystemConfig& cfg,
                                 CVec& db_dtheta, CVec& db_dr) {
    const CVec b = steering_exact(theta, r, cfg);
    const double k = 2.0 * std::numbers::pi / cfg.wavelength();
    const double d = cfg.spacing();
    db_dtheta.resize(cfg.N);
    db_dr.resize(cfg.N);
    for (int n = 1; n <= cfg.N; ++n) {
        const double rn = element_distance(r, theta, n, cfg, DistanceModel::Exact);
        const double u = (n - 1) * d;
        db_dtheta(n - 1) = Complex(0.0, k * r * u * std::cos(theta) / rn) * b(n - 1);
        db_dr(n - 1) = Complex(0.0, -k * ((r - u * std::sin(theta)) / rn - 1.0)) * b(n - 1);
    }
}

}  // namespace detail

// mu(xi) = sum_k alpha_k (s_k (x) W^H b(theta_k, r_k) (x) g(tau_k)),
// vectorized in the Tensor3 linearization order.
inline CVec crb_mean(const Scenario& sc) {
    const auto& cfg = sc.cfg;
    if (static_cast<int>(sc.paths.size()) != cfg.K)
        throw std::invalid_argument("crb_mean: LoS scenario requires one path per user");
    CVec mu = CVec::Zero(static_cast<Eigen::Index>(cfg.P) * cfg.M * cfg.T);
    for (int k = 0; k < cfg.K; ++k) {
        const auto& path = sc.paths[k];
        const CVec g = delay_response(path.tau, cfg);
        const CVec a = sc.combiner.W.adjoint() * detail::steering_exact(path.theta, path.r, cfg);
        const CVec s = sc.pilots.S.col(path.user);
        for (int t = 0; t < cfg.T; ++t)
            for (int m = 0; m < cfg.M; ++m)
                mu.segment((static_cast<Eigen::Index>(t) * cfg.M + m) * cfg.P, cfg.P) +=
                    path.alpha * s(t) * a(m) * g;
    }
    return mu;
}

// Jacobian of crb_mean w.r.t. xi; columns ordered per ParamIndex.
inline CMat mean_jacobian(const Scenario& sc) {
    const auto& cfg = sc.cfg;
    if (static_cast<int>(sc.paths.size()) != cfg.K)
        throw std::invalid_argument("mean_jacobian: LoS scenario requires one path per user");
    const ParamIndex idx{cfg.K};
    const Eigen::Index n = static_cast<Eigen::Index>(cfg.P) * cfg.M * cfg.T;
    CMat J = CMat::Zero(n, idx.size());

    auto scatter = [&](int col, const CVec& s, const CVec& a, const CVec& g, Complex scale) {
        for (int t = 0; t < cfg.T; ++t)
            for (int m = 0; m < cfg.M; ++m)
                J.col(col).segment((static_cast<Eigen::Index>(t) * cfg.M + m) * cfg.P, cfg.P) +=
                    scale * s(t) * a(m) * g;
    };

    for (int k = 0; k < cfg.K; ++k) {
        const auto& path = sc.paths[k];
        const CVec g = delay_response(path.tau, cfg);
        CVec dg(cfg.P);
        for (int p = 1; p <= cfg.P; ++p)
            dg(p - 1) = Complex(0.0, -2.0 * std::numbers::pi * cfg.subcarrier_freq(p)) * g(p - 1);
        const CVec b = detail::steering_exact(path.theta, path.r, cfg);
        CVec db_dtheta, db_dr;
        detail::steering_derivatives(path.theta, path.r, cfg, db_dtheta, db_dr);
        const CVec a = sc.combiner.W.adjoint() * b;
        const CVec a_dtheta = sc.combiner.W.adjoint() * db_dtheta;
        const CVec a_dr = sc.combiner.W.adjoint() * db_dr;
        const CVec s = sc.pilots.S.col(path.user);

        scatter(idx.theta(k), s, a_dtheta, g, path.alpha);
        scatter(idx.r(k), s, a_dr, g, path.alpha);
        scatter(idx.tau(k), s, a, dg, path.alpha);
        scatter(idx.alpha_re(k), s, a, g, Complex(1.0, 0.0));
        scatter(idx.alpha_im(k), s, a, g, Complex(0.0, 1.0));
    }
    return J;
}

// F = (2 / sigma^2) Re(J^H J), symmetrized.
inline RMat fim(const Scenario& sc, double sigma2) {
    if (sigma2 <= 0.0) throw std::invalid_argument("fim: sigma2 must be positive");
    const CMat J = mean_jacobian(sc);
    RMat F = (2.0 / sigma2) * (J.adjoint() * J).real();
    F = 0.5 * (F + F.transpose()).eval();
    return F;
}

namespace detail {

inline RMat invert_fim(const RMat& F, bool& singular) {
    // Equilibrate to unit diagonal first. The raw tau rows are larger than
    // the gain rows by the squared carrier frequency, and a spectral cutoff
    // on the unscaled matrix would discard the well-identified directions of
    // every other parameter family.
    const Eigen::Index n = F.rows();
    RVec d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = 1.0 / std::sqrt(std::max(F(i, i), 1e-300));
    const RMat C = d.asDiagonal() * F * d.asDiagonal();
    Eigen::SelfAdjointEigenSolver<RMat> eig(C);
    const RVec& ev = eig.eigenvalues();
    const double cutoff = 1e-14 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    RVec inv = RVec::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) > cutoff)
            inv(i) = 1.0 / ev(i);
        else
            singular = true;
    }
    const RMat Cinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    return d.asDiagonal() * Cinv * d.asDiagonal();
}

}  // namespace detail

enum class CrbParam { Theta, R, Tau, AlphaRe, AlphaIm };

// trace of the selected diagonal block of F^-1.
inline double crb_params(const RMat& F, CrbParam which, int K) {
    bool singular = false;
    const RMat Finv = detail::invert_fim(F, singular);
    const ParamIndex idx{K};
    double tr = 0.0;
    for (int k = 0; k < K; ++k) {
        switch (which) {
            case CrbParam::Theta: tr += Finv(idx.theta(k), idx.theta(k)); break;
            case CrbParam::R: tr += Finv(idx.r(k), idx.r(k)); break;
            case CrbParam::Tau: tr += Finv(idx.tau(k), idx.tau(k)); break;
            case CrbParam::AlphaRe: tr += Finv(idx.alpha_re(k), idx.alpha_re(k)); break;
            case CrbParam::AlphaIm: tr += Finv(idx.alpha_im(k), idx.alpha_im(k)); break;
        }
    }
    return tr;
}

// Position bound via the transformation-of-parameters rule:
// CRB(p) = trace(J_pos F^-1 J_pos^T) with p_k = (c tau_k cos theta_k,
// c tau_k sin theta_k); only the theta and tau columns of J_pos are nonzero.
inline double crb_position(const RMat& F, const Scenario& sc) {
    const int K = sc.cfg.K;
    const ParamIndex idx{K};
    RMat Jpos = RMat::Zero(2 * K, idx.size());
    for (int k = 0; k < K; ++k) {
        const double tau = sc.paths[k].tau;
        const double theta = sc.paths[k].theta;
        if (tau <= 0.0) throw std::invalid_argument("crb_position: tau must be positive");
        const double c = kSpeedOfLight;
        Jpos(2 * k, idx.tau(k)) = c * std::cos(theta);
        Jpos(2 * k, idx.theta(k)) = -c * tau * std::sin(theta);
        Jpos(2 * k + 1, idx.tau(k)) = c * std::sin(theta);
        Jpos(2 * k + 1, idx.theta(k)) = c * tau * std::cos(theta);
    }
    bool singular = false;
    const RMat Finv = detail::invert_fim(F, singular);
    return (Jpos * Finv * Jpos.transpose()).trace();
}

inline CrbReport crb_report(const Scenario& sc, double sigma2) {
    CrbReport rep;
    rep.fim = fim(sc, sigma2);
    const int K = sc.cfg.K;
    rep.crb_theta = crb_params(rep.fim, CrbParam::Theta, K);
    rep.crb_r = crb_params(rep.fim, CrbParam::R, K);
    rep.crb_tau = crb_params(rep.fim, CrbParam::Tau, K);
    rep.crb_alpha = crb_params(rep.fim, CrbParam::AlphaRe, K) +
                    crb_params(rep.fim, CrbParam::AlphaIm, K);
    rep.crb_position = crb_position(rep.fim, sc);
    detail::invert_fim(rep.fim, rep.singular);
    return rep;
}

}  // namespace nfce
