#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <sstream>

#include "nfce/harness.hpp"

using namespace nfce;

TEST_CASE("parse_config reads every key and keeps defaults for the rest") {
    std::istringstream in(
        "# comment line\n"
        "preset = nlos_mmwave\n"
        "sweep = rf_chains\n"
        "sweep_values = 16, 32, 64  # trailing comment\n"
        "trials = 7\n"
        "seed = 42\n"
        "methods = cpd, btd\n"
        "snr_db = 25\n"
        "antennas = 64\n"
        "r_min_m = 10\n"
        "r_max_m = 30\n");
    const ExperimentConfig cfg = parse_config(in);
    REQUIRE(cfg.preset == "nlos_mmwave");
    REQUIRE(cfg.sweep == "rf_chains");
    REQUIRE(cfg.sweep_values == std::vector<double>{16.0, 32.0, 64.0});
    REQUIRE(cfg.trials == 7);
    REQUIRE(cfg.seed == 42);
    REQUIRE(cfg.methods == std::vector<std::string>{"cpd", "btd"});
    REQUIRE(cfg.snr_db == 25.0);
    REQUIRE(cfg.antennas == 64);
    REQUIRE(cfg.r_min_m == 10.0);
    REQUIRE(cfg.r_max_m == 30.0);
    REQUIRE(cfg.excess_delay_s == 2e-9);
    REQUIRE(cfg.base_config().N == 64);
    REQUIRE(cfg.base_config().fc == 30e9);
}

TEST_CASE("parse_config rejects unknown keys and malformed lines with line numbers") {
    std::istringstream bad_key("trials = 3\nbogus_key = 1\n");
    REQUIRE_THROWS_WITH(parse_config(bad_key),
                        Catch::Matchers::ContainsSubstring("line 2") &&
                            Catch::Matchers::ContainsSubstring("bogus_key"));
    std::istringstream no_eq("trials 3\n");
    REQUIRE_THROWS_WITH(parse_config(no_eq), Catch::Matchers::ContainsSubstring("line 1"));
    std::istringstream bad_method("methods = cpd, frobnicate\n");
    REQUIRE_THROWS_AS(parse_config(bad_method), std::invalid_argument);
    std::istringstream bad_sweep("sweep = frequency\n");
    REQUIRE_THROWS_AS(parse_config(bad_sweep), std::invalid_argument);
}

TEST_CASE("result CSV writes a version comment and round trips exactly") {
    std::vector<ResultRow> rows(2);
    rows[0].method = "cpd";
    rows[0].sweep = "snr_db";
    rows[0].sweep_value = 30.0;
    rows[0].trial = 3;
    rows[0].trial_seed = 123456789012345ULL;
    rows[0].ok = true;
    rows[0].nmse = 1.2345678901234567e-7;
    rows[0].mse_tau = 4e-22;
    rows[0].crb_tau = 1e-23;
    rows[1].method = "somp";
    rows[1].sweep = "snr_db";
    rows[1].sweep_value = 30.0;
    rows[1].trial = 4;
    rows[1].trial_seed = 99;
    rows[1].ok = false;

    std::ostringstream out;
    write_csv(rows, out);
    const std::string text = out.str();
    REQUIRE(text.rfind(std::string(kCsvVersionComment) + "\n" + kCsvHeader + "\n", 0) == 0);

    std::istringstream in(text);
    const auto back = read_csv(in);
    REQUIRE(back.size() == 2);
    REQUIRE(back[0].method == "cpd");
    REQUIRE(back[0].trial_seed == 123456789012345ULL);
    REQUIRE(back[0].ok);
    REQUIRE(back[0].nmse == rows[0].nmse);
    REQUIRE(back[0].mse_tau == rows[0].mse_tau);
    REQUIRE(back[0].crb_tau == rows[0].crb_tau);
    REQUIRE(std::isnan(back[0].mse_pos));
    REQUIRE_FALSE(back[1].ok);
    REQUIRE(std::isnan(back[1].nmse));
}

TEST_CASE("summarize averages successful rows and skips non-finite values") {
    std::vector<ResultRow> rows(3);
    for (auto& r : rows) {
        r.method = "cpd";
        r.sweep = "snr_db";
        r.sweep_value = 10.0;
    }
    rows[0].ok = true;
    rows[0].nmse = 0.1;
    rows[0].mse_tau = 2e-20;
    rows[0].crb_tau = 1e-21;
    rows[1].ok = true;
    rows[1].nmse = 0.3;
    rows[1].mse_tau = 4e-20;
    rows[1].crb_tau = 3e-21;
    rows[2].ok = false;
    rows[2].nmse = 1e9;  // failed rows are excluded from the estimate means

    const auto sum = summarize(rows);
    REQUIRE(sum.size() == 1);
    REQUIRE(sum[0].method == "cpd");
    REQUIRE(sum[0].n == 3);
    REQUIRE(sum[0].n_ok == 2);
    REQUIRE(sum[0].nmse_mean == Catch::Approx(0.2));
    REQUIRE(sum[0].nmse_median == Catch::Approx(0.2));
    REQUIRE(sum[0].mse_tau_mean == Catch::Approx(3e-20));
    REQUIRE(sum[0].crb_tau_mean == Catch::Approx(2e-21));
    REQUIRE(std::isnan(sum[0].mse_pos_mean));
}

TEST_CASE("summarize groups by method and sweep value") {
    std::vector<ResultRow> rows;
    for (const char* m : {"cpd", "somp"})
        for (double v : {10.0, 20.0})
            for (int trial = 0; trial < 3; ++trial) {
                ResultRow r;
                r.method = m;
                r.sweep = "snr_db";
                r.sweep_value = v;
                r.ok = true;
                r.nmse = v + trial;
                rows.push_back(r);
            }
    const auto sum = summarize(rows);
    REQUIRE(sum.size() == 4);
    for (const auto& s : sum) {
        REQUIRE(s.n == 3);
        REQUIRE(s.nmse_mean == Catch::Approx(s.sweep_value + 1.0));
    }
    std::ostringstream out;
    write_summary_csv(sum, out);
    REQUIRE(out.str().rfind(std::string(kCsvVersionComment) + "\n" + kSummaryCsvHeader + "\n", 0) ==
            0);
}

TEST_CASE("summarize rejects an empty result set") {
    REQUIRE_THROWS_AS(summarize({}), std::invalid_argument);
}

TEST_CASE("draw_scenario respects the configured geometry bounds") {
    ExperimentConfig ec;
    ec.r_min_m = 12.0;
    ec.r_max_m = 40.0;
    ec.theta_span_deg = 45.0;
    const SystemConfig cfg = ec.base_config();
    Rng rng(5);
    const Scenario sc = draw_scenario(ec, cfg, rng);
    REQUIRE(sc.total_paths() == cfg.K);  // LoS preset: one path per user
    const double span = 45.0 * std::numbers::pi / 180.0;
    for (const auto& p : sc.paths) {
        REQUIRE(p.r >= 12.0);
        REQUIRE(p.r <= 40.0);
        REQUIRE(std::abs(p.theta) <= span);
        REQUIRE(p.tau == Catch::Approx(p.r / kSpeedOfLight));
    }
}

namespace {

ExperimentConfig tiny_experiment() {
    ExperimentConfig ec;
    ec.preset = "los_thz";
    ec.antennas = 64;
    ec.rf_chains = 8;
    ec.subcarriers = 16;
    ec.symbols = 4;
    ec.users = 2;
    ec.sweep = "snr_db";
    ec.sweep_values = {20.0, 30.0};
    ec.trials = 2;
    ec.seed = 7;
    ec.methods = {"cpd", "somp", "crb"};
    return ec;
}

std::string csv_of(const std::vector<ResultRow>& rows) {
    std::ostringstream out;
    write_csv(rows, out);
    return out.str();
}

}  // namespace

TEST_CASE("run_experiment output is byte-identical across repeats and thread counts") {
    const ExperimentConfig ec = tiny_experiment();
    std::ostringstream sink;
    const std::string a = csv_of(run_experiment(ec, 1, &sink));
    const std::string b = csv_of(run_experiment(ec, 1, &sink));
    const std::string c = csv_of(run_experiment(ec, 2, &sink));
    REQUIRE(a == b);
    REQUIRE(a == c);

    const size_t expected = ec.sweep_values.size() * ec.trials * 2;  // crb adds no rows
    std::istringstream in(a);
    REQUIRE(read_csv(in).size() == expected);

    ExperimentConfig other = ec;
    other.seed = 8;
    REQUIRE(csv_of(run_experiment(other, 1, &sink)) != a);
}

TEST_CASE("run_experiment attaches finite CRB values to LoS rows") {
    ExperimentConfig ec = tiny_experiment();
    ec.sweep_values = {30.0};
    ec.trials = 1;
    std::ostringstream sink;
    const auto rows = run_experiment(ec, 1, &sink);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        REQUIRE(r.ok);
        REQUIRE(std::isfinite(r.nmse));
        REQUIRE(r.crb_tau > 0.0);
        REQUIRE(r.crb_theta > 0.0);
        REQUIRE(r.crb_r > 0.0);
        REQUIRE(r.crb_pos > 0.0);
    }
}

TEST_CASE("a noiseless trial on the reference preset reaches near-exact recovery") {
    ExperimentConfig ec;
    ec.preset = "los_thz";
    ec.sweep_values = {std::numeric_limits<double>::infinity()};
    ec.trials = 1;
    ec.seed = 3;
    ec.methods = {"cpd"};
    std::ostringstream sink;
    const auto rows = run_experiment(ec, 1, &sink);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].ok);
    REQUIRE(rows[0].nmse < 1e-6);
    REQUIRE(std::isnan(rows[0].crb_tau));
}
