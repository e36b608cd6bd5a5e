#pragma once

// Seeded Monte-Carlo experiment runner with CSV persistence. A run sweeps one
// axis (SNR, RF chains or pilot symbols), draws user geometries per trial,
// executes the requested methods and scores them against the ground truth.
//
// Determinism contract: (config, seed) fixes every byte of the output CSV,
// independent of thread count and scheduling. Per-trial seeds are derived by
// hashing, trials never share mutable state, and wall-clock timing goes to
// stderr only.

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nfce/crb.hpp"
#include "nfce/pipeline.hpp"

namespace nfce {

struct ExperimentConfig {
    std::string preset = "los_thz";  // los_thz | nlos_mmwave
    std::string sweep = "snr_db";    // snr_db | rf_chains | symbols
    std::vector<double> sweep_values{30.0};
    int trials = 100;
    std::uint64_t seed = 1;
    std::vector<std::string> methods{"cpd", "cpd_delay_aided", "somp", "crb"};
    double snr_db = 30.0;  // fixed SNR when the sweep axis is not snr_db

    // -1 keeps the preset's value.
    int antennas = -1, rf_chains = -1, subcarriers = -1, symbols = -1, users = -1;
    double carrier_hz = -1.0, bandwidth_hz = -1.0;

    double r_min_m = 20.0, r_max_m = 80.0;
    double theta_span_deg = 60.0;
    double excess_delay_s = 2e-9;  // NLoS only

    SystemConfig base_config() const {
        SystemConfig cfg;
        if (preset == "los_thz") {
            cfg = SystemConfig{256, 32, 64, 4, 8, 100e9, 0.1e9};
        } else if (preset == "nlos_mmwave") {
            cfg = SystemConfig{128, 64, 64, 4, 8, 30e9, 0.1e9};
        } else {
            throw std::invalid_argument("ExperimentConfig: unknown preset '" + preset + "'");
        }
        if (antennas > 0) cfg.N = antennas;
        if (rf_chains > 0) cfg.M = rf_chains;
        if (subcarriers > 0) cfg.P = subcarriers;
        if (symbols > 0) cfg.T = symbols;
        if (users > 0) cfg.K = users;
        if (carrier_hz > 0) cfg.fc = carrier_hz;
        if (bandwidth_hz > 0) cfg.B = bandwidth_hz;
        return cfg;
    }

    void validate() const {
        if (sweep != "snr_db" && sweep != "rf_chains" && sweep != "symbols")
            throw std::invalid_argument("ExperimentConfig: unknown sweep axis '" + sweep + "'");
        if (sweep_values.empty()) throw std::invalid_argument("ExperimentConfig: empty sweep");
        if (trials < 1) throw std::invalid_argument("ExperimentConfig: trials must be >= 1");
        if (methods.empty()) throw std::invalid_argument("ExperimentConfig: no methods selected");
        for (const auto& m : methods)
            if (m != "cpd" && m != "cpd_delay_aided" && m != "btd" && m != "somp" && m != "crb")
                throw std::invalid_argument("ExperimentConfig: unknown method '" + m + "'");
        base_config().validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

}  // namespace detail

// Flat key = value format; '#' starts a comment. List values are
// comma-separated. Unknown keys are an error (typos should not pass quietly).
inline ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        try {
            if (key == "preset") cfg.preset = val;
            else if (key == "sweep") cfg.sweep = val;
            else if (key == "sweep_values") {
                cfg.sweep_values.clear();
                for (const auto& v : detail::split(val, ',')) cfg.sweep_values.push_back(std::stod(v));
            } else if (key == "trials") cfg.trials = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "methods") cfg.methods = detail::split(val, ',');
            else if (key == "snr_db") cfg.snr_db = std::stod(val);
            else if (key == "antennas") cfg.antennas = std::stoi(val);
            else if (key == "rf_chains") cfg.rf_chains = std::stoi(val);
            else if (key == "subcarriers") cfg.subcarriers = std::stoi(val);
            else if (key == "symbols") cfg.symbols = std::stoi(val);
            else if (key == "users") cfg.users = std::stoi(val);
            else if (key == "carrier_hz") cfg.carrier_hz = std::stod(val);
            else if (key == "bandwidth_hz") cfg.bandwidth_hz = std::stod(val);
            else if (key == "r_min_m") cfg.r_min_m = std::stod(val);
            else if (key == "r_max_m") cfg.r_max_m = std::stod(val);
            else if (key == "theta_span_deg") cfg.theta_span_deg = std::stod(val);
            else if (key == "excess_delay_s") cfg.excess_delay_s = std::stod(val);
            else throw std::invalid_argument("unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    return parse_config(in);
}

struct ResultRow {
    std::string method;
    std::string sweep;
    double sweep_value = 0.0;
    int trial = 0;
    std::uint64_t trial_seed = 0;
    bool ok = false;
    double nmse = kNan;
    double mse_tau = kNan;
    double mse_theta = kNan;
    double mse_r = kNan;
    double mse_pos = kNan;
    double crb_tau = kNan;
    double crb_theta = kNan;
    double crb_r = kNan;
    double crb_pos = kNan;
};

inline const char* kCsvVersionComment = "# nfce result csv v1";
inline const char* kCsvHeader =
    "method,sweep,sweep_value,trial,trial_seed,ok,nmse,mse_tau,mse_theta,mse_r,mse_pos,"
    "crb_tau,crb_theta,crb_r,crb_pos";

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string to_csv_line(const ResultRow& r) {
    std::string out = r.method;
    out += ',';
    out += r.sweep;
    out += ',';
    out += detail::fmt_double(r.sweep_value);
    out += ',';
    out += std::to_string(r.trial);
    out += ',';
    out += std::to_string(r.trial_seed);
    out += ',';
    out += r.ok ? '1' : '0';
    for (double v : {r.nmse, r.mse_tau, r.mse_theta, r.mse_r, r.mse_pos, r.crb_tau, r.crb_theta,
                     r.crb_r, r.crb_pos}) {
        out += ',';
        out += detail::fmt_double(v);
    }
    return out;
}

inline void write_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
    out << kCsvVersionComment << '\n' << kCsvHeader << '\n';
    for (const auto& r : rows) out << to_csv_line(r) << '\n';
}

inline std::vector<ResultRow> read_csv(std::istream& in) {
    std::vector<ResultRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        line = detail::trim(line);
        if (line.empty() || line[0] == '#' || line.rfind("method,", 0) == 0) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 15) throw std::invalid_argument("malformed result row: " + line);
        ResultRow r;
        r.method = f[0];
        r.sweep = f[1];
        r.sweep_value = std::stod(f[2]);
        r.trial = std::stoi(f[3]);
        r.trial_seed = std::stoull(f[4]);
        r.ok = f[5] == "1";
        double* slots[] = {&r.nmse, &r.mse_tau, &r.mse_theta, &r.mse_r, &r.mse_pos,
                           &r.crb_tau, &r.crb_theta, &r.crb_r, &r.crb_pos};
        for (int i = 0; i < 9; ++i) *slots[i] = std::stod(f[6 + i]);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Scenario drawing

inline Scenario draw_scenario(const ExperimentConfig& ec, const SystemConfig& cfg, Rng& rng) {
    Scenario sc;
    sc.cfg = cfg;
    sc.model = DistanceModel::Fresnel;
    const double span = ec.theta_span_deg * std::numbers::pi / 180.0;
    const bool nlos = ec.preset == "nlos_mmwave";
    for (int k = 0; k < cfg.K; ++k) {
        const int paths = nlos ? 1 + (rng() % 2) : 1;
        for (int l = 0; l < paths; ++l) {
            PathParams p;
            p.user = k;
            p.theta = uniform(rng, -span, span);
            p.r = uniform(rng, ec.r_min_m, ec.r_max_m);
            p.tau = p.r / kSpeedOfLight;
            if (nlos) {
                if (l > 0) p.tau += uniform(rng, 0.0, ec.excess_delay_s);
                p.alpha = sample_nlos_gain(p.r, rng);
            } else {
                p.alpha = los_gain(cfg.fc, p.r, 0.01, p.tau);
            }
            sc.paths.push_back(p);
        }
    }
    sc.pilots = design_pilots(cfg.T, cfg.K, rng);
    sc.combiner = random_combiner(cfg.N, cfg.M, rng);
    return sc;
}

// ---------------------------------------------------------------------------
// Runner

namespace detail {

struct TrialOutput {
    std::vector<ResultRow> rows;
    double seconds = 0.0;
};

inline TrialOutput run_trial(const ExperimentConfig& ec, const SystemConfig& cfg,
                             double sweep_value, int trial, std::uint64_t trial_seed,
                             const PolarCodebook& book) {
    const auto t0 = std::chrono::steady_clock::now();
    TrialOutput out;
    Rng rng(trial_seed);
    const Scenario sc = draw_scenario(ec, cfg, rng);
    const Tensor3 clean = synthesize(sc);
    const double snr = ec.sweep == "snr_db" ? sweep_value : ec.snr_db;
    const auto [y, noise] = add_noise(clean, snr, rng);

    const ProjectedCodebook projected(book, sc.combiner.W);
    const auto truth = true_channels(sc);
    PipelineContext ctx;
    ctx.sc = &sc;
    ctx.book = &book;
    ctx.projected = &projected;
    ctx.delay_spec = DelaySearchSpec::for_coverage(ec.r_max_m, ec.excess_delay_s);
    ctx.truth = &truth;

    double crb_tau = kNan, crb_theta = kNan, crb_r = kNan, crb_pos = kNan;
    bool want_crb = false;
    for (const auto& m : ec.methods) want_crb = want_crb || m == "crb";
    if (want_crb && sc.total_paths() == cfg.K && noise.sigma2 > 0.0) {
        try {
            const CrbReport crb = crb_report(sc, noise.sigma2);
            crb_tau = crb.crb_tau;
            crb_theta = crb.crb_theta;
            crb_r = crb.crb_r;
            crb_pos = crb.crb_position;
        } catch (const std::exception&) {
        }
    }

    for (const auto& method : ec.methods) {
        if (method == "crb") continue;
        ResultRow row;
        row.method = method;
        row.sweep = ec.sweep;
        row.sweep_value = sweep_value;
        row.trial = trial;
        row.trial_seed = trial_seed;
        row.crb_tau = crb_tau;
        row.crb_theta = crb_theta;
        row.crb_r = crb_r;
        row.crb_pos = crb_pos;
        try {
            EstimationReport rep;
            if (method == "cpd") rep = run_cpd(y, ctx, false);
            else if (method == "cpd_delay_aided") rep = run_cpd(y, ctx, true);
            else if (method == "btd") rep = run_btd(y, ctx);
            else rep = run_somp(y, ctx);
            row.ok = rep.ok;
            row.nmse = rep.nmse;
            row.mse_tau = rep.mse_tau;
            row.mse_theta = rep.mse_theta;
            row.mse_r = rep.mse_r;
            row.mse_pos = rep.mse_pos;
        } catch (const std::exception&) {
            row.ok = false;
        }
        out.rows.push_back(row);
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace detail

inline std::vector<ResultRow> run_experiment(const ExperimentConfig& ec, int threads = 1,
                                             std::ostream* log = &std::cerr) {
    ec.validate();
    if (threads < 1) threads = 1;

    struct Task {
        int point;
        int trial;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (int point = 0; point < static_cast<int>(ec.sweep_values.size()); ++point)
        for (int trial = 0; trial < ec.trials; ++trial)
            tasks.push_back({point, trial,
                             derive_seed(ec.seed, (static_cast<std::uint64_t>(point) << 32) |
                                                      static_cast<std::uint64_t>(trial))});

    // Per-point configs and codebooks, shared read-only across trials.
    std::vector<SystemConfig> cfgs;
    std::vector<std::unique_ptr<PolarCodebook>> books;
    for (double v : ec.sweep_values) {
        SystemConfig cfg = ec.base_config();
        if (ec.sweep == "rf_chains") cfg.M = static_cast<int>(v);
        else if (ec.sweep == "symbols") cfg.T = static_cast<int>(v);
        cfg.validate();
        cfgs.push_back(cfg);
        books.push_back(std::make_unique<PolarCodebook>(cfg));
    }

    std::vector<detail::TrialOutput> outputs(tasks.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& tk = tasks[i];
            try {
                outputs[i] = detail::run_trial(ec, cfgs[tk.point], ec.sweep_values[tk.point],
                                               tk.trial, tk.seed, *books[tk.point]);
            } catch (const std::exception& e) {
                // Whole-trial failure (for example scenario validation): emit
                // failed rows so the run keeps its full shape.
                for (const auto& method : ec.methods) {
                    if (method == "crb") continue;
                    ResultRow row;
                    row.method = method;
                    row.sweep = ec.sweep;
                    row.sweep_value = ec.sweep_values[tk.point];
                    row.trial = tk.trial;
                    row.trial_seed = tk.seed;
                    outputs[i].rows.push_back(row);
                }
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<ResultRow> rows;
    double total_seconds = 0.0;
    for (const auto& o : outputs) {
        rows.insert(rows.end(), o.rows.begin(), o.rows.end());
        total_seconds += o.seconds;
    }
    if (log) *log << "completed " << tasks.size() << " trials in " << total_seconds
                  << " s of worker time\n";
    return rows;
}

// ---------------------------------------------------------------------------
// Aggregation

struct SummaryRow {
    std::string method;
    std::string sweep;
    double sweep_value = 0.0;
    int n = 0;        // rows in the group
    int n_ok = 0;     // successful rows
    double nmse_mean = kNan, nmse_median = kNan;
    double mse_tau_mean = kNan, mse_theta_mean = kNan, mse_r_mean = kNan, mse_pos_mean = kNan;
    double crb_tau_mean = kNan, crb_theta_mean = kNan, crb_r_mean = kNan, crb_pos_mean = kNan;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    int n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            s += x;
            ++n;
        }
    return n > 0 ? s / n : kNan;
}

inline double median_of(std::vector<double> v) {
    std::erase_if(v, [](double x) { return !std::isfinite(x); });
    if (v.empty()) return kNan;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("summarize: no rows");
    std::map<std::pair<std::string, double>, std::vector<const ResultRow*>> groups;
    for (const auto& r : rows) groups[{r.method, r.sweep_value}].push_back(&r);

    std::vector<SummaryRow> out;
    for (const auto& [key, members] : groups) {
        SummaryRow s;
        s.method = key.first;
        s.sweep_value = key.second;
        s.sweep = members.front()->sweep;
        s.n = static_cast<int>(members.size());
        std::vector<double> nmse, mtau, mtheta, mr, mpos, ctau, ctheta, cr, cpos;
        for (const ResultRow* r : members) {
            if (r->ok) {
                ++s.n_ok;
                nmse.push_back(r->nmse);
                mtau.push_back(r->mse_tau);
                mtheta.push_back(r->mse_theta);
                mr.push_back(r->mse_r);
                mpos.push_back(r->mse_pos);
            }
            ctau.push_back(r->crb_tau);
            ctheta.push_back(r->crb_theta);
            cr.push_back(r->crb_r);
            cpos.push_back(r->crb_pos);
        }
        s.nmse_mean = detail::mean_of(nmse);
        s.nmse_median = detail::median_of(nmse);
        s.mse_tau_mean = detail::mean_of(mtau);
        s.mse_theta_mean = detail::mean_of(mtheta);
        s.mse_r_mean = detail::mean_of(mr);
        s.mse_pos_mean = detail::mean_of(mpos);
        s.crb_tau_mean = detail::mean_of(ctau);
        s.crb_theta_mean = detail::mean_of(ctheta);
        s.crb_r_mean = detail::mean_of(cr);
        s.crb_pos_mean = detail::mean_of(cpos);
        out.push_back(s);
    }
    return out;
}

inline const char* kSummaryCsvHeader =
    "method,sweep,sweep_value,n,n_ok,nmse_mean,nmse_median,mse_tau_mean,mse_theta_mean,"
    "mse_r_mean,mse_pos_mean,crb_tau_mean,crb_theta_mean,crb_r_mean,crb_pos_mean";

inline void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
    out << kCsvVersionComment << '\n' << kSummaryCsvHeader << '\n';
    for (const auto& s : rows) {
        out << s.method << ',' << s.sweep << ',' << detail::fmt_double(s.sweep_value) << ','
            << s.n << ',' << s.n_ok;
        for (double v : {s.nmse_mean, s.nmse_median, s.mse_tau_mean, s.mse_theta_mean,
                         s.mse_r_mean, s.mse_pos_mean, s.crb_tau_mean, s.crb_theta_mean,
                         s.crb_r_mean, s.crb_pos_mean})
            out << ',' << detail::fmt_double(v);
        out << '\n';
    }
}

}  // namespace nfce
