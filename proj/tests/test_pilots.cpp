#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "nfce/pilots.hpp"

using namespace nfce;

TEST_CASE("T = K = 8 pilots are the orthogonal DFT columns") {
    Rng rng(1);
    const PilotMatrix S = design_pilots(8, 8, rng);
    REQUIRE(S.symbols() == 8);
    REQUIRE(S.users() == 8);
    REQUIRE(S.max_coherence() < 1e-12);
    for (int k = 0; k < 8; ++k) REQUIRE(S.S.col(k).norm() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("T = K = 2 pilots are an orthogonal pair") {
    Rng rng(1);
    REQUIRE(design_pilots(2, 2, rng).max_coherence() < 1e-12);
}

TEST_CASE("overloaded pilots respect the Welch bound") {
    Rng rng(5);
    const PilotMatrix S = design_pilots(2, 8, rng);
    const double welch = welch_bound(2, 8);
    REQUIRE(welch == Catch::Approx(std::sqrt(6.0 / 14.0)).margin(1e-12));
    REQUIRE(S.max_coherence() >= welch - 1e-9);
    REQUIRE(S.max_coherence() < 1.0);
    for (int k = 0; k < 8; ++k) REQUIRE(S.S.col(k).norm() == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("designed pilots keep k-rank at least 2") {
    Rng rng(9);
    for (int T : {2, 3, 4}) {
        const PilotMatrix S = design_pilots(T, 8, rng);
        for (int i = 0; i < 8; ++i)
            for (int j = i + 1; j < 8; ++j) {
                CMat pair(T, 2);
                pair.col(0) = S.S.col(i);
                pair.col(1) = S.S.col(j);
                Eigen::JacobiSVD<CMat> svd(pair);
                REQUIRE(svd.singularValues()(1) > 1e-8);
            }
    }
}

TEST_CASE("pilot design rejects T < 2 and is seed-deterministic") {
    Rng rng(3);
    REQUIRE_THROWS_AS(design_pilots(1, 4, rng), std::invalid_argument);
    Rng a(77), b(77);
    REQUIRE((design_pilots(3, 6, a).S - design_pilots(3, 6, b).S).norm() == 0.0);
}

TEST_CASE("combiner entries are unit modulus") {
    Rng rng(4);
    const Combiner W = random_combiner(16, 4, rng);
    for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 16; ++n) REQUIRE(std::abs(W.W(n, m)) == Catch::Approx(1.0).margin(1e-13));
}

TEST_CASE("combiners are numerically full column rank over many seeds") {
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const Combiner W = random_combiner(64, 16, rng);
        Eigen::JacobiSVD<CMat> svd(W.W);
        REQUIRE(svd.singularValues()(15) > 1e-8 * svd.singularValues()(0));
    }
}

TEST_CASE("combiner column coherence is small at N = 256") {
    Rng rng(8);
    const Combiner W = random_combiner(256, 8, rng);
    double acc = 0.0;
    int n = 0;
    for (int i = 0; i < 8; ++i)
        for (int j = i + 1; j < 8; ++j) {
            acc += std::abs(W.W.col(i).dot(W.W.col(j))) / 256.0;
            ++n;
        }
    REQUIRE(acc / n < 0.12);
}

TEST_CASE("combiner rejects M > N") {
    Rng rng(1);
    REQUIRE_THROWS_AS(random_combiner(4, 8, rng), std::invalid_argument);
}
