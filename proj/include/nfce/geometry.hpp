#pragma once

// Near-field geometry: system constants, Fresnel/exact element distances,
// steering vectors, delay responses and multi-path channel synthesis.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nfce/rng.hpp"
#include "nfce/tensor.hpp"

namespace nfce {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// Scenario constants for a ULA base station with hybrid combining.
struct SystemConfig {
    int N = 256;        // antennas
    int M = 32;         // RF chains
    int P = 64;         // subcarriers
    int T = 4;          // pilot symbols
    int K = 8;          // users
    double fc = 100e9;  // center carrier frequency, Hz
    double B = 0.1e9;   // bandwidth, Hz

    double wavelength() const { return kSpeedOfLight / fc; }
    double spacing() const { return wavelength() / 2.0; }  // d = lambda_c / 2
    double aperture() const { return (N - 1) * spacing(); }
    double rayleigh_distance() const {
        const double D = aperture();
        return 2.0 * D * D / wavelength();
    }
    // f_p = f_c + (2p - P) B / (2P), p = 1..P (1-based subcarrier index)
    double subcarrier_freq(int p) const {
        return fc + (2.0 * p - P) * B / (2.0 * P);
    }

    void validate() const {
        if (N < 1 || M < 1 || P < 1 || T < 1 || K < 1)
            throw std::invalid_argument("SystemConfig: dimensions must be positive");
        if (K > M || M > N)
            throw std::invalid_argument("SystemConfig: requires K <= M <= N");
        if (P < K)
            throw std::invalid_argument("SystemConfig: requires P >= K");
        if (fc <= 0 || B <= 0)
            throw std::invalid_argument("SystemConfig: frequencies must be positive");
    }
};

// One propagation path: complex gain, delay, angle and reference-antenna
// distance, plus the owning user.
struct PathParams {
    int user = 0;
    Complex alpha{0.0, 0.0};
    double tau = 0.0;    // s
    double theta = 0.0;  // rad, |theta| < pi/2
    double r = 0.0;      // m, > 0

    void validate() const {
        if (r <= 0.0) throw std::invalid_argument("PathParams: r must be positive");
        if (std::abs(theta) >= std::numbers::pi / 2)
            throw std::invalid_argument("PathParams: |theta| must be < pi/2");
        if (tau < 0.0) throw std::invalid_argument("PathParams: tau must be non-negative");
    }
};

enum class DistanceModel { Fresnel, Exact };

// Distance from the n-th antenna (1-based, antenna 1 is the reference) to a
// point at (theta, r).
inline double element_distance(double r, double theta, int n, const SystemConfig& cfg,
                               DistanceModel model = DistanceModel::Fresnel) {
    if (r <= 0.0) throw std::invalid_argument("element_distance: r must be positive");
    if (n < 1 || n > cfg.N) throw std::invalid_argument("element_distance: antenna index out of range");
    const double d = cfg.spacing();
    const double u = (n - 1) * d;
    if (model == DistanceModel::Exact)
        return std::sqrt(r * r + u * u - 2.0 * r * u * std::sin(theta));
    const double c = std::cos(theta);
    return r - u * std::sin(theta) + u * u * c * c / (2.0 * r);
}

// b(theta, r): entry n = (1/sqrt(N)) exp(-j (2 pi / lambda) (r^(n) - r)).
// The spatial phase always uses the center wavelength so the factor matrix A
// stays independent of the subcarrier.
inline CVec steering_vector(double theta, double r, const SystemConfig& cfg,
                            DistanceModel model = DistanceModel::Fresnel) {
    if (r <= 0.0) throw std::invalid_argument("steering_vector: r must be positive");
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.N));
    const double k = 2.0 * std::numbers::pi / cfg.wavelength();
    CVec b(cfg.N);
    for (int n = 1; n <= cfg.N; ++n) {
        const double phase = -k * (element_distance(r, theta, n, cfg, model) - r);
        b(n - 1) = scale * std::polar(1.0, phase);
    }
    return b;
}

// g(tau): entry p = exp(-j 2 pi f_p tau), p = 1..P.
inline CVec delay_response(double tau, const SystemConfig& cfg) {
    if (tau < 0.0) throw std::invalid_argument("delay_response: tau must be non-negative");
    CVec g(cfg.P);
    for (int p = 1; p <= cfg.P; ++p)
        g(p - 1) = std::polar(1.0, -2.0 * std::numbers::pi * cfg.subcarrier_freq(p) * tau);
    return g;
}

// h_{p,k} = sum_l alpha_l exp(-j 2 pi f_p tau_l) b(theta_l, r_l)
inline CVec channel_vector(const std::vector<PathParams>& paths, int p, const SystemConfig& cfg,
                           DistanceModel model = DistanceModel::Fresnel) {
    if (paths.empty()) throw std::invalid_argument("channel_vector: empty path list");
    CVec h = CVec::Zero(cfg.N);
    const double fp = cfg.subcarrier_freq(p);
    for (const auto& path : paths) {
        const Complex phase = std::polar(1.0, -2.0 * std::numbers::pi * fp * path.tau);
        h += path.alpha * phase * steering_vector(path.theta, path.r, cfg, model);
    }
    return h;
}

// LoS gain: (c / (4 pi f d)) exp(-kappa d / 2) exp(-j 2 pi f tau)
inline Complex los_gain(double f, double dist, double kappa, double tau) {
    if (f <= 0 || dist <= 0 || kappa < 0)
        throw std::invalid_argument("los_gain: invalid argument");
    const double mag = kSpeedOfLight / (4.0 * std::numbers::pi * f * dist) * std::exp(-0.5 * kappa * dist);
    return mag * std::polar(1.0, -2.0 * std::numbers::pi * f * tau);
}

// Path-loss model for NLoS gains: kappa_dB = a + 10 b log10(d) + eps with
// a = 61.4, b = 2, sigma_eps = 5.8 dB and Rician factor mu = 7 dB.
struct NlosGainModel {
    double a = 61.4;
    double b = 2.0;
    double sigma_eps_db = 5.8;
    double rician_mu_db = 7.0;

    double variance(double dist, double eps_db) const {
        if (dist <= 0) throw std::invalid_argument("NlosGainModel: dist must be positive");
        const double kappa = a + 10.0 * b * std::log10(dist) + eps_db;
        return std::pow(10.0, -0.1 * (kappa + rician_mu_db));
    }

    Complex sample(double dist, Rng& rng) const {
        const double eps = sigma_eps_db * gaussian(rng);
        return std::sqrt(variance(dist, eps)) * complex_gaussian(rng);
    }
};

inline Complex sample_nlos_gain(double dist, Rng& rng) {
    return NlosGainModel{}.sample(dist, rng);
}

}  // namespace nfce
