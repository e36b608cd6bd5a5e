#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "nfce/tensor.hpp"

using namespace nfce;
using testutil::random_cmat;

namespace {

FactorSet random_factors(int P, int M, int T, int L, Rng& rng) {
    FactorSet f;
    f.G = random_cmat(P, L, rng);
    f.A = random_cmat(M, L, rng);
    f.S = random_cmat(T, L, rng);
    f.block_sizes.assign(L, 1);
    return f;
}

}  // namespace

TEST_CASE("unfold mode 1 of the all-ones tensor is all ones") {
    Tensor3 y(2, 2, 2);
    for (int p = 0; p < 2; ++p)
        for (int m = 0; m < 2; ++m)
            for (int t = 0; t < 2; ++t) y(p, m, t) = 1.0;
    const CMat u = unfold(y, 1);
    REQUIRE(u.rows() == 2);
    REQUIRE(u.cols() == 4);
    REQUIRE((u.array() - Complex(1.0)).matrix().norm() == 0.0);
}

TEST_CASE("mode-3 unfolding of a rank-1 tensor has the scaled-vec row structure") {
    Rng rng(11);
    const int P = 3, M = 4, T = 2;
    FactorSet f = random_factors(P, M, T, 1, rng);
    const Tensor3 y = cpd_reconstruct(f);
    const CMat u3 = unfold(y, 3);
    for (int t = 0; t < T; ++t)
        for (int m = 0; m < M; ++m)
            for (int p = 0; p < P; ++p) {
                const Complex expect = f.S(t, 0) * f.G(p, 0) * f.A(m, 0);
                REQUIRE(std::abs(u3(t, p + P * m) - expect) < 1e-14);
            }
}

TEST_CASE("Y_(1)^T equals (S kr A) G^T for random factors") {
    Rng rng(7);
    FactorSet f = random_factors(3, 3, 3, 2, rng);
    const Tensor3 y = cpd_reconstruct(f);
    const CMat lhs = unfold(y, 1).transpose();
    const CMat rhs = khatri_rao(f.S, f.A) * f.G.transpose();
    REQUIRE((lhs - rhs).norm() <= 1e-13 * rhs.norm());
}

TEST_CASE("khatri_rao of two identities") {
    const CMat I2 = CMat::Identity(2, 2);
    const CMat kr = khatri_rao(I2, I2);
    REQUIRE(kr.rows() == 4);
    REQUIRE(kr.cols() == 2);
    CMat expect = CMat::Zero(4, 2);
    expect(0, 0) = 1.0;
    expect(3, 1) = 1.0;
    REQUIRE((kr - expect).norm() == 0.0);
}

TEST_CASE("khatri_rao of single columns reduces to kron") {
    Rng rng(3);
    const CMat u = random_cmat(3, 1, rng), v = random_cmat(4, 1, rng);
    REQUIRE((khatri_rao(u, v) - kron(u, v)).norm() == 0.0);
}

TEST_CASE("khatri_rao columns match per-column kron") {
    Rng rng(5);
    const CMat a = random_cmat(3, 2, rng), b = random_cmat(2, 2, rng);
    const CMat kr = khatri_rao(a, b);
    for (int j = 0; j < 2; ++j) {
        const CMat kj = kron(a.col(j), b.col(j));
        REQUIRE((kr.col(j) - kj.col(0)).norm() == 0.0);
    }
}

TEST_CASE("khatri_rao rejects mismatched column counts") {
    Rng rng(1);
    REQUIRE_THROWS_AS(khatri_rao(random_cmat(2, 2, rng), random_cmat(2, 3, rng)),
                      std::invalid_argument);
}

TEST_CASE("cpd_reconstruct of all-ones rank-1 factors is the all-ones tensor") {
    FactorSet f;
    f.G = CMat::Ones(2, 1);
    f.A = CMat::Ones(3, 1);
    f.S = CMat::Ones(2, 1);
    const Tensor3 y = cpd_reconstruct(f);
    for (int p = 0; p < 2; ++p)
        for (int m = 0; m < 3; ++m)
            for (int t = 0; t < 2; ++t) REQUIRE(std::abs(y(p, m, t) - Complex(1.0)) == 0.0);
}

TEST_CASE("cpd_reconstruct with zero components is the zero tensor") {
    FactorSet f;
    f.G.resize(2, 0);
    f.A.resize(3, 0);
    f.S.resize(2, 0);
    REQUIRE(cpd_reconstruct(f).norm() == 0.0);
}

TEST_CASE("cpd_reconstruct matches the entrywise triple loop") {
    Rng rng(13);
    FactorSet f = random_factors(4, 3, 2, 3, rng);
    const Tensor3 y = cpd_reconstruct(f);
    for (int p = 0; p < 4; ++p)
        for (int m = 0; m < 3; ++m)
            for (int t = 0; t < 2; ++t) {
                Complex sum = 0.0;
                for (int l = 0; l < 3; ++l) sum += f.G(p, l) * f.A(m, l) * f.S(t, l);
                REQUIRE(std::abs(y(p, m, t) - sum) < 1e-13);
            }
}

TEST_CASE("all three unfolding identities hold on random tensors") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const int P = 2 + static_cast<int>(rng() % 7);
        const int M = 2 + static_cast<int>(rng() % 7);
        const int T = 2 + static_cast<int>(rng() % 7);
        const int L = 1 + static_cast<int>(rng() % 4);
        FactorSet f = random_factors(P, M, T, L, rng);
        const Tensor3 y = cpd_reconstruct(f);
        const CMat r1 = khatri_rao(f.S, f.A) * f.G.transpose();
        const CMat r2 = khatri_rao(f.S, f.G) * f.A.transpose();
        const CMat r3 = khatri_rao(f.A, f.G) * f.S.transpose();
        REQUIRE((unfold(y, 1).transpose() - r1).norm() <= 1e-12 * std::max(1.0, r1.norm()));
        REQUIRE((unfold(y, 2).transpose() - r2).norm() <= 1e-12 * std::max(1.0, r2.norm()));
        REQUIRE((unfold(y, 3).transpose() - r3).norm() <= 1e-12 * std::max(1.0, r3.norm()));
    }
}

TEST_CASE("fold inverts unfold bit-exactly") {
    Rng rng(19);
    Tensor3 y(4, 3, 5);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.vec()(i) = complex_gaussian(rng);
    for (int mode = 1; mode <= 3; ++mode) {
        const Tensor3 back = fold(unfold(y, mode), mode, 4, 3, 5);
        REQUIRE((back.vec() - y.vec()).norm() == 0.0);
    }
}

TEST_CASE("Frobenius norm is invariant under unfolding") {
    Rng rng(23);
    Tensor3 y(3, 4, 2);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.vec()(i) = complex_gaussian(rng);
    for (int mode = 1; mode <= 3; ++mode)
        REQUIRE(std::abs(unfold(y, mode).norm() - y.norm()) < 1e-13);
}

TEST_CASE("unfold rejects invalid modes") {
    Tensor3 y(2, 2, 2);
    REQUIRE_THROWS_AS(unfold(y, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(unfold(y, 4), std::invalid_argument);
}
