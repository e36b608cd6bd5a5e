#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "nfce/scenario.hpp"

using namespace nfce;

namespace {

SystemConfig small_cfg() {
    SystemConfig cfg;
    cfg.N = 16;
    cfg.M = 4;
    cfg.P = 8;
    cfg.T = 4;
    cfg.K = 2;
    cfg.fc = 100e9;
    cfg.B = 0.1e9;
    return cfg;
}

Scenario los_scenario(Rng& rng, const SystemConfig& cfg) {
    Scenario sc;
    sc.cfg = cfg;
    for (int k = 0; k < cfg.K; ++k)
        sc.paths.push_back({k, Complex(uniform(rng, 0.3, 1.0), uniform(rng, -0.5, 0.5)),
                            uniform(rng, 1e-8, 1e-7), uniform(rng, -0.8, 0.8),
                            uniform(rng, 5.0, 20.0)});
    sc.pilots = design_pilots(cfg.T, cfg.K, rng);
    sc.combiner = random_combiner(cfg.N, cfg.M, rng);
    return sc;
}

}  // namespace

TEST_CASE("synthesize matches the scalar triple-loop model") {
    SystemConfig cfg = small_cfg();
    cfg.K = 1;
    cfg.M = 1;
    cfg.T = 2;
    Rng rng(3);
    Scenario sc;
    sc.cfg = cfg;
    sc.paths.push_back({0, Complex(0.8, -0.1), 2.5e-8, 0.3, 12.0});
    sc.pilots = design_pilots(cfg.T, cfg.K, rng);
    sc.combiner = random_combiner(cfg.N, cfg.M, rng);
    const Tensor3 y = synthesize(sc);

    const auto& path = sc.paths[0];
    const CVec b = steering_vector(path.theta, path.r, cfg);
    for (int p = 1; p <= cfg.P; ++p)
        for (int t = 0; t < cfg.T; ++t) {
            const Complex g = std::polar(1.0, -2.0 * std::numbers::pi * cfg.subcarrier_freq(p) * path.tau);
            const Complex a = path.alpha * sc.combiner.W.col(0).dot(b);
            const Complex expect = g * a * sc.pilots.S(t, 0);
            REQUIRE(std::abs(y(p - 1, 0, t) - expect) < 1e-12);
        }
}

TEST_CASE("zero gains give the zero tensor") {
    Rng rng(4);
    Scenario sc = los_scenario(rng, small_cfg());
    for (auto& p : sc.paths) p.alpha = 0.0;
    REQUIRE(synthesize(sc).norm() == 0.0);
}

TEST_CASE("LoS synthesis equals the factor-form reconstruction") {
    Rng rng(5);
    const SystemConfig cfg = small_cfg();
    Scenario sc = los_scenario(rng, cfg);
    const Tensor3 y = synthesize(sc);

    FactorSet f;
    f.G.resize(cfg.P, cfg.K);
    f.A.resize(cfg.M, cfg.K);
    f.S.resize(cfg.T, cfg.K);
    for (int k = 0; k < cfg.K; ++k) {
        f.G.col(k) = delay_response(sc.paths[k].tau, cfg);
        f.A.col(k) = sc.paths[k].alpha *
                     (sc.combiner.W.adjoint() *
                      steering_vector(sc.paths[k].theta, sc.paths[k].r, cfg));
        f.S.col(k) = sc.pilots.S.col(k);
    }
    REQUIRE((y.vec() - cpd_reconstruct(f).vec()).norm() < 1e-12 * y.norm());
}

TEST_CASE("synthesis is linear in every path gain") {
    Rng rng(6);
    Scenario sc = los_scenario(rng, small_cfg());
    const Tensor3 y = synthesize(sc);
    Scenario scaled = sc;
    scaled.paths[1].alpha *= Complex(2.0, 1.0);
    Scenario delta = sc;
    delta.paths[0].alpha = 0.0;
    delta.paths[1].alpha *= Complex(1.0, 1.0);
    const Tensor3 lhs = synthesize(scaled);
    const Tensor3 rhs = y + synthesize(delta);
    REQUIRE((lhs.vec() - rhs.vec()).norm() < 1e-12 * lhs.norm());
}

TEST_CASE("mode-3 unfolding has the pilot-times-vec block form") {
    Rng rng(7);
    SystemConfig cfg = small_cfg();
    Scenario sc;
    sc.cfg = cfg;
    // NLoS: user 0 has two paths, user 1 has one.
    sc.paths.push_back({0, Complex(0.9, 0.2), 2e-8, 0.4, 10.0});
    sc.paths.push_back({0, Complex(-0.3, 0.6), 3e-8, -0.2, 15.0});
    sc.paths.push_back({1, Complex(0.5, -0.7), 5e-8, 0.1, 8.0});
    sc.pilots = design_pilots(cfg.T, cfg.K, rng);
    sc.combiner = random_combiner(cfg.N, cfg.M, rng);

    const Tensor3 y = synthesize(sc);
    const CMat y3 = unfold(y, 3);  // T x PM, column j = p + P*m

    CMat vecs(cfg.K, static_cast<Eigen::Index>(cfg.P) * cfg.M);
    vecs.setZero();
    for (const auto& path : sc.paths) {
        const CVec g = delay_response(path.tau, cfg);
        const CVec a = path.alpha * (sc.combiner.W.adjoint() *
                                     steering_vector(path.theta, path.r, cfg));
        for (int m = 0; m < cfg.M; ++m)
            for (int p = 0; p < cfg.P; ++p)
                vecs(path.user, p + static_cast<Eigen::Index>(cfg.P) * m) += g(p) * a(m);
    }
    const CMat expect = sc.pilots.S * vecs;
    REQUIRE((y3 - expect).norm() < 1e-12 * expect.norm());
}

TEST_CASE("noise variance follows the SNR formula") {
    Tensor3 y(8, 8, 8);
    y.vec().setOnes();
    y.vec() /= y.vec().norm();  // ||y||^2 = 1, PMT = 512
    Rng rng(8);
    const auto [noisy, spec] = add_noise(y, 10.0, rng);
    REQUIRE(spec.sigma2 == Catch::Approx(1.0 / 5120.0).epsilon(1e-12));
}

TEST_CASE("0 dB noise energy matches the signal energy in expectation") {
    Rng rng(9);
    Tensor3 y(4, 4, 4);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.vec()(i) = complex_gaussian(rng);
    const double signal = y.squaredNorm();
    double acc = 0.0;
    const int trials = 100;
    for (int i = 0; i < trials; ++i) {
        const auto [noisy, spec] = add_noise(y, 0.0, rng);
        acc += (noisy.vec() - y.vec()).squaredNorm();
    }
    REQUIRE(acc / trials == Catch::Approx(signal).epsilon(0.05));
}

TEST_CASE("infinite SNR is a noiseless passthrough and zero signal is rejected") {
    Rng rng(10);
    Tensor3 y(2, 2, 2);
    y.vec().setConstant(Complex(1.0, -1.0));
    const auto [out, spec] = add_noise(y, std::numeric_limits<double>::infinity(), rng);
    REQUIRE((out.vec() - y.vec()).norm() == 0.0);
    REQUIRE(spec.sigma2 == 0.0);
    Tensor3 z(2, 2, 2);
    REQUIRE_THROWS_AS(add_noise(z, 10.0, rng), std::invalid_argument);
}

TEST_CASE("scenario bookkeeping: block sizes and mapping") {
    Rng rng(11);
    SystemConfig cfg = small_cfg();
    Scenario sc;
    sc.cfg = cfg;
    sc.paths.push_back({0, Complex(1.0), 1e-8, 0.1, 10.0});
    sc.paths.push_back({1, Complex(1.0), 2e-8, 0.2, 12.0});
    sc.paths.push_back({1, Complex(1.0), 3e-8, 0.3, 14.0});
    sc.pilots = design_pilots(cfg.T, cfg.K, rng);
    sc.combiner = random_combiner(cfg.N, cfg.M, rng);
    const auto L = sc.block_sizes();
    REQUIRE(L == std::vector<int>{1, 2});
    const RMat O = sc.mapping();
    for (int k = 0; k < cfg.K; ++k) REQUIRE(O.row(k).sum() == Catch::Approx(L[k]));
    REQUIRE(O.sum() == Catch::Approx(3.0));
}
