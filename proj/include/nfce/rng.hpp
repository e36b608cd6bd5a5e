#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace nfce {

// splitmix64; used to derive independent per-trial seeds from a base seed so
// results do not depend on scheduling order.
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return mix_seed(base ^ mix_seed(stream));
}

using Rng = std::mt19937_64;

inline double gaussian(Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(rng);
}

// CN(0, 1): circular complex Gaussian with unit total variance.
inline std::complex<double> complex_gaussian(Rng& rng) {
    const double s = 1.0 / std::sqrt(2.0);
    const double re = gaussian(rng);
    const double im = gaussian(rng);
    return {s * re, s * im};
}

inline double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

}  // namespace nfce
