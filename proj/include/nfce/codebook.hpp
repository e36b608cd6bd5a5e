#pragma once

// Polar-domain codebook: near-field steering atoms jointly sampled over
// angle (uniform in sin(theta)) and distance (uniform in inverse distance).

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nfce/geometry.hpp"
#include "nfce/tensor.hpp"

namespace nfce {

struct PolarGridSpec {
    int n_angles = 256;
    int n_rings = 32;
    double sin_span = std::sin(60.0 * std::numbers::pi / 180.0);  // grid over (-span, span)
    double r_min = 5.0;        // m
    double r_max = -1.0;       // < 0: 1.2 * Rayleigh distance
};

class PolarCodebook {
public:
    PolarCodebook(const SystemConfig& cfg, const PolarGridSpec& spec = {},
                  DistanceModel model = DistanceModel::Fresnel)
        : cfg_(cfg), model_(model), spec_(spec) {
        if (spec_.r_max < 0.0) spec_.r_max = 1.2 * cfg.rayleigh_distance();
        if (spec_.r_min <= 0.0 || spec_.r_max <= spec_.r_min)
            throw std::invalid_argument("PolarCodebook: invalid distance span");
        if (spec_.n_angles < 2 || spec_.n_rings < 1)
            throw std::invalid_argument("PolarCodebook: grid too small");

        sin_grid_.resize(spec_.n_angles);
        for (int i = 0; i < spec_.n_angles; ++i)
            sin_grid_[i] = -spec_.sin_span +
                           2.0 * spec_.sin_span * i / (spec_.n_angles - 1);
        // Rings uniform in 1/r from the far edge inward.
        inv_r_grid_.resize(spec_.n_rings);
        const double u_lo = 1.0 / spec_.r_max, u_hi = 1.0 / spec_.r_min;
        for (int i = 0; i < spec_.n_rings; ++i)
            inv_r_grid_[i] = spec_.n_rings == 1
                                 ? u_lo
                                 : u_lo + (u_hi - u_lo) * i / (spec_.n_rings - 1);

        atoms_.resize(cfg.N, static_cast<Eigen::Index>(spec_.n_angles) * spec_.n_rings);
        for (int ia = 0; ia < spec_.n_angles; ++ia)
            for (int ir = 0; ir < spec_.n_rings; ++ir)
                atoms_.col(atom_index(ia, ir)) =
                    steering_vector(std::asin(sin_grid_[ia]), 1.0 / inv_r_grid_[ir], cfg, model);
    }

    int n_angles() const { return spec_.n_angles; }
    int n_rings() const { return spec_.n_rings; }
    Eigen::Index size() const { return atoms_.cols(); }
    Eigen::Index atom_index(int ia, int ir) const {
        return static_cast<Eigen::Index>(ia) * spec_.n_rings + ir;
    }
    double angle_of(int ia) const { return std::asin(sin_grid_[ia]); }
    double sin_theta_of(int ia) const { return sin_grid_[ia]; }
    double radius_of(int ir) const { return 1.0 / inv_r_grid_[ir]; }
    double sin_step() const { return sin_grid_[1] - sin_grid_[0]; }
    double inv_r_step() const {
        return spec_.n_rings > 1 ? inv_r_grid_[1] - inv_r_grid_[0]
                                 : 1.0 / spec_.r_min - 1.0 / spec_.r_max;
    }
    const PolarGridSpec& spec() const { return spec_; }
    const CMat& atoms() const { return atoms_; }  // N x (n_angles * n_rings), unit columns
    const SystemConfig& config() const { return cfg_; }
    DistanceModel model() const { return model_; }

    // Nearest point of the fine (theta, r) lattice used by the two-stage
    // search; parameters snapped here are recovered exactly on noiseless data.
    double snap_sin_theta(double sin_theta, int refine = 16) const {
        const double step = sin_step() / refine;
        return std::round((sin_theta - sin_grid_[0]) / step) * step + sin_grid_[0];
    }
    double snap_radius(double r, int refine = 16) const {
        const double step = inv_r_step() / refine;
        const double u0 = 1.0 / spec_.r_max;
        const double u = std::round((1.0 / r - u0) / step) * step + u0;
        return 1.0 / u;
    }

private:
    SystemConfig cfg_;
    DistanceModel model_;
    PolarGridSpec spec_;
    std::vector<double> sin_grid_;
    std::vector<double> inv_r_grid_;
    CMat atoms_;
};

}  // namespace nfce
