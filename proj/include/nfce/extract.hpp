#pragma once

// Turns recovered factor matrices into user associations, channel parameters,
// reconstructed channels and user positions.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nfce/codebook.hpp"
#include "nfce/geometry.hpp"
#include "nfce/pilots.hpp"
#include "nfce/tensor.hpp"

namespace nfce {

// ---------------------------------------------------------------------------
// User association

struct AssociationResult {
    std::vector<int> user_of_column;  // estimated column k -> user index
    std::vector<double> score;        // winning correlation per column
    bool ok = true;                   // false if a degenerate column was seen
};

// Greedy pilot-correlation matching: every column picks its best user; on a
// conflict the higher-correlation column keeps the index and the loser
// re-picks among the remaining ones.
inline AssociationResult associate_users(const CMat& s_hat, const PilotMatrix& pilots) {
    const int K = pilots.users();
    if (s_hat.cols() != K || s_hat.rows() != pilots.symbols())
        throw std::invalid_argument("associate_users: dimension mismatch");

    RMat corr(K, K);  // corr(i, k) = normalized |s_i^H shat_k|
    AssociationResult res;
    for (int k = 0; k < K; ++k) {
        const double nk = s_hat.col(k).norm();
        if (nk < 1e-300) res.ok = false;
        for (int i = 0; i < K; ++i)
            corr(i, k) = nk < 1e-300
                             ? 0.0
                             : std::abs(pilots.S.col(i).dot(s_hat.col(k))) / (pilots.S.col(i).norm() * nk);
    }

    res.user_of_column.assign(K, -1);
    res.score.assign(K, 0.0);
    std::vector<bool> index_taken(K, false);
    std::vector<bool> column_done(K, false);
    for (int assigned = 0; assigned < K;) {
        // Each unfinished column picks its argmax over remaining indices.
        std::vector<int> want(K, -1);
        for (int k = 0; k < K; ++k) {
            if (column_done[k]) continue;
            double best = -1.0;
            for (int i = 0; i < K; ++i) {
                if (index_taken[i]) continue;
                if (corr(i, k) > best) {
                    best = corr(i, k);
                    want[k] = i;
                }
            }
        }
        // Winners of contested indices keep them; losers retry next round.
        for (int i = 0; i < K; ++i) {
            if (index_taken[i]) continue;
            int winner = -1;
            for (int k = 0; k < K; ++k)
                if (want[k] == i && (winner < 0 || corr(i, k) > corr(i, winner))) winner = k;
            if (winner >= 0) {
                res.user_of_column[winner] = i;
                res.score[winner] = corr(i, winner);
                index_taken[i] = true;
                column_done[winner] = true;
                ++assigned;
            }
        }
    }
    return res;
}

// Reorders columns so that column i corresponds to user i.
inline CMat apply_permutation(const CMat& m, const std::vector<int>& user_of_column) {
    CMat out(m.rows(), m.cols());
    for (int k = 0; k < static_cast<int>(user_of_column.size()); ++k)
        out.col(user_of_column[k]) = m.col(k);
    return out;
}

// ---------------------------------------------------------------------------
// Delay search

struct DelaySearchSpec {
    double tau_max = 0.0;
    int coarse_n = 256;
    int fine_refine = 32;     // fine step = coarse step / fine_refine
    int fine_halfwidth = 1;   // fine window spans +/- this many coarse steps
    int polish_iters = 0;     // golden-section refinement inside one fine step

    double coarse_step() const { return tau_max / (coarse_n - 1); }
    double fine_step() const { return coarse_step() / fine_refine; }
    double snap(double tau) const { return std::round(tau / fine_step()) * fine_step(); }

    // 1.2x the maximum plausible delay: farthest user plus NLoS excess.
    static DelaySearchSpec for_coverage(double r_max_m, double excess_delay_s = 2e-9) {
        DelaySearchSpec s;
        s.tau_max = 1.2 * (r_max_m / kSpeedOfLight + excess_delay_s);
        return s;
    }
};

namespace detail {

inline double delay_correlation(const CVec& g_hat, double tau, const SystemConfig& cfg) {
    const CVec g = delay_response(tau, cfg);
    return std::abs(g.dot(g_hat)) / (g.norm() * g_hat.norm());
}

// Golden-section maximization of a unimodal-near-peak objective on [lo, hi].
template <typename F>
inline double golden_max(F&& f, double lo, double hi, int iters) {
    constexpr double phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters; ++i) {
        if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    return f1 >= f2 ? x1 : x2;
}

}  // namespace detail

// Two-stage coarse-fine maximization of |g^H(tau) g_hat| / (||g|| ||g_hat||).
// Returns nullopt when the correlation surface is flat (no detection).
inline std::optional<double> estimate_delay(const CVec& g_hat, const SystemConfig& cfg,
                                            const DelaySearchSpec& spec) {
    if (g_hat.norm() < 1e-300) throw std::invalid_argument("estimate_delay: zero input");
    if (spec.tau_max <= 0.0) throw std::invalid_argument("estimate_delay: tau_max must be positive");

    double best_tau = 0.0, best = -1.0;
    for (int i = 0; i < spec.coarse_n; ++i) {
        const double tau = i * spec.coarse_step();
        const double c = detail::delay_correlation(g_hat, tau, cfg);
        if (c > best) {
            best = c;
            best_tau = tau;
        }
    }
    if (best < 1e-6) return std::nullopt;

    const int half = spec.fine_halfwidth * spec.fine_refine;
    double fine_tau = best_tau, fine_best = best;
    for (int j = -half; j <= half; ++j) {
        const double tau = best_tau + j * spec.fine_step();
        if (tau < 0.0) continue;
        const double c = detail::delay_correlation(g_hat, tau, cfg);
        if (c > fine_best) {
            fine_best = c;
            fine_tau = tau;
        }
    }
    if (spec.polish_iters > 0) {
        const auto obj = [&](double tau) {
            return tau < 0.0 ? -1.0 : detail::delay_correlation(g_hat, tau, cfg);
        };
        fine_tau = detail::golden_max(obj, std::max(0.0, fine_tau - spec.fine_step()),
                                      fine_tau + spec.fine_step(), spec.polish_iters);
    }
    return fine_tau;
}

// ---------------------------------------------------------------------------
// Angle / range search

// W^H times every codebook atom, with column norms; shared by the searches
// and the SOMP baseline.
struct ProjectedCodebook {
    const PolarCodebook* book = nullptr;
    const CMat* W = nullptr;
    CMat projected;   // M x Q
    RVec norms;       // Q

    ProjectedCodebook(const PolarCodebook& b, const CMat& w) : book(&b), W(&w) {
        projected = w.adjoint() * b.atoms();
        norms = projected.colwise().norm();
    }
};

struct AngleRangeEstimate {
    double theta = 0.0;
    double r = 0.0;
    double score = 0.0;
};

namespace detail {

inline double atom_correlation(const CVec& a_hat, double theta, double r, const SystemConfig& cfg,
                               const CMat& W, DistanceModel model) {
    const CVec wb = W.adjoint() * steering_vector(theta, r, cfg, model);
    const double n = wb.norm();
    if (n < 1e-300) return 0.0;
    return std::abs(wb.dot(a_hat)) / (n * a_hat.norm());
}

}  // namespace detail

// Joint (theta, r) estimate: coarse argmax over the polar codebook, then a
// local fine grid (refine x in sin(theta) and in 1/r) around the winner. The
// metric normalizes by ||W^H b||, not ||b||.
inline std::optional<AngleRangeEstimate> estimate_angle_range(const CVec& a_hat,
                                                              const ProjectedCodebook& pc,
                                                              int refine = 16,
                                                              int polish_rounds = 0) {
    if (a_hat.norm() < 1e-300) throw std::invalid_argument("estimate_angle_range: zero input");
    const PolarCodebook& book = *pc.book;
    const double ahn = a_hat.norm();

    // coarse: one matrix product over all atoms
    const RVec scores = (pc.projected.adjoint() * a_hat).cwiseAbs();
    int best_idx = -1;
    double best = -1.0;
    for (Eigen::Index q = 0; q < scores.size(); ++q) {
        if (pc.norms(q) < 1e-300) continue;
        const double c = scores(q) / (pc.norms(q) * ahn);
        if (c > best) {
            best = c;
            best_idx = static_cast<int>(q);
        }
    }
    if (best < 1e-6) return std::nullopt;

    const int ia = best_idx / book.n_rings();
    const int ir = best_idx % book.n_rings();
    const double sin0 = book.sin_theta_of(ia);
    const double u0 = 1.0 / book.radius_of(ir);
    const double ds = book.sin_step() / refine;
    const double du = book.inv_r_step() / refine;

    AngleRangeEstimate est{book.angle_of(ia), book.radius_of(ir), best};
    for (int js = -refine; js <= refine; ++js) {
        const double s = sin0 + js * ds;
        if (s <= -1.0 || s >= 1.0) continue;
        const double theta = std::asin(s);
        for (int ju = -refine; ju <= refine; ++ju) {
            const double u = u0 + ju * du;
            if (u <= 0.0) continue;
            const double c = detail::atom_correlation(a_hat, theta, 1.0 / u, book.config(),
                                                      *pc.W, book.model());
            if (c > est.score) est = {theta, 1.0 / u, c};
        }
    }
    // Continuous refinement. Over a one-sided aperture the linear (sin theta)
    // and quadratic (1/r) phase terms are strongly correlated, which makes
    // naive coordinate ascent stall on a diagonal ridge. Instead, golden-max
    // over sin(theta) of the envelope max_u corr(s, u), where the inner
    // maximization scans the full inverse-distance span and then polishes.
    if (polish_rounds > 0) {
        const auto obj = [&](double sv, double uv) {
            if (sv <= -1.0 || sv >= 1.0 || uv <= 0.0) return -1.0;
            return detail::atom_correlation(a_hat, std::asin(sv), 1.0 / uv, book.config(), *pc.W,
                                            book.model());
        };
        const double u_lo = 1.0 / book.spec().r_max;
        const double u_hi = 1.0 / book.spec().r_min;
        const double u_scan_step = book.inv_r_step() / 4.0;
        const auto best_u = [&](double sv) {
            double bu = u_lo, bc = -1.0;
            for (double uv = u_lo; uv <= u_hi + 0.5 * u_scan_step; uv += u_scan_step) {
                const double c = obj(sv, uv);
                if (c > bc) {
                    bc = c;
                    bu = uv;
                }
            }
            return detail::golden_max([&](double uv) { return obj(sv, uv); },
                                      std::max(u_lo, bu - u_scan_step),
                                      std::min(u_hi, bu + u_scan_step), 40);
        };
        const double s0 = std::sin(est.theta);
        const double half = book.sin_step();
        const double s = detail::golden_max([&](double sv) { return obj(sv, best_u(sv)); },
                                            s0 - half, s0 + half, 4 * polish_rounds);
        const double u = best_u(s);
        const double c = obj(s, u);
        if (c > est.score) est = {std::asin(s), 1.0 / u, c};
    }
    return est;
}

// Delay-aided LoS path: r is fixed (r_hat = c tau_hat) and only the angle is
// searched, coarse over the codebook's angle grid then fine.
inline std::optional<AngleRangeEstimate> estimate_angle_given_range(const CVec& a_hat, double r_hat,
                                                                    const ProjectedCodebook& pc,
                                                                    int refine = 16,
                                                                    int polish_iters = 0) {
    if (a_hat.norm() < 1e-300) throw std::invalid_argument("estimate_angle_given_range: zero input");
    if (r_hat <= 0.0) throw std::invalid_argument("estimate_angle_given_range: r must be positive");
    const PolarCodebook& book = *pc.book;

    double best = -1.0;
    int best_ia = 0;
    for (int ia = 0; ia < book.n_angles(); ++ia) {
        const double c = detail::atom_correlation(a_hat, book.angle_of(ia), r_hat, book.config(),
                                                  *pc.W, book.model());
        if (c > best) {
            best = c;
            best_ia = ia;
        }
    }
    if (best < 1e-6) return std::nullopt;

    const double sin0 = book.sin_theta_of(best_ia);
    const double ds = book.sin_step() / refine;
    AngleRangeEstimate est{book.angle_of(best_ia), r_hat, best};
    for (int js = -refine; js <= refine; ++js) {
        const double s = sin0 + js * ds;
        if (s <= -1.0 || s >= 1.0) continue;
        const double c = detail::atom_correlation(a_hat, std::asin(s), r_hat, book.config(),
                                                  *pc.W, book.model());
        if (c > est.score) est = {std::asin(s), r_hat, c};
    }
    if (polish_iters > 0) {
        const auto obj = [&](double sv) {
            if (sv <= -1.0 || sv >= 1.0) return -1.0;
            return detail::atom_correlation(a_hat, std::asin(sv), r_hat, book.config(), *pc.W,
                                            book.model());
        };
        const double s0 = std::sin(est.theta);
        const double s = detail::golden_max(obj, s0 - ds, s0 + ds, polish_iters);
        const double c = obj(s);
        if (c > est.score) est = {std::asin(s), r_hat, c};
    }
    return est;
}

// ---------------------------------------------------------------------------
// Gain recovery

namespace detail {

inline CMat pinv_solve(const CMat& a, const CMat& b, bool* flagged = nullptr) {
    Eigen::JacobiSVD<CMat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() > 0 && sv(0) > 0 && sv(sv.size() - 1) < 1e-10 * sv(0)) {
        if (flagged) *flagged = true;
        CMat reg = a.adjoint() * a;
        reg.diagonal().array() += 1e-10 * sv(0) * sv(0);
        return reg.ldlt().solve(a.adjoint() * b);
    }
    return svd.solve(b);
}

}  // namespace detail

// LoS gains: Lambda_1 = diag(Gtilde^+ Ghat), Lambda_3 = diag(S_o^+ Shat_o),
// alpha = diag(Btilde^+ Ahat Lambda_1 Lambda_3). Inputs must already be
// permutation-fixed (column k <-> user k).
inline CVec recover_gains_los(const CMat& g_hat, const CMat& a_hat, const CMat& s_hat,
                              const std::vector<double>& taus, const std::vector<double>& thetas,
                              const std::vector<double>& rs, const PilotMatrix& pilots,
                              const CMat& W, const SystemConfig& cfg,
                              DistanceModel model = DistanceModel::Fresnel,
                              bool* ill_conditioned = nullptr) {
    const int K = static_cast<int>(taus.size());
    CMat g_ref(cfg.P, K), b_ref(cfg.M, K);
    for (int k = 0; k < K; ++k) {
        g_ref.col(k) = delay_response(taus[k], cfg);
        b_ref.col(k) = W.adjoint() * steering_vector(thetas[k], rs[k], cfg, model);
    }
    // Per-column normalized projections throughout. These agree with the
    // diagonal of the pseudo-inverse products when the reference columns are
    // orthogonal, but stay bounded when they are not: S_o is a wide frame for
    // T < K (pseudo-inverse diagonal shrinks by about T/K), and two users
    // with nearly equal delays make G_ref almost singular.
    if (ill_conditioned) *ill_conditioned = false;
    CVec alpha(K);
    for (int k = 0; k < K; ++k) {
        const Complex l1 = g_ref.col(k).dot(g_hat.col(k)) / g_ref.col(k).squaredNorm();
        const Complex l3 = pilots.S.col(k).dot(s_hat.col(k)) / pilots.S.col(k).squaredNorm();
        const Complex l2 = b_ref.col(k).dot(a_hat.col(k)) / b_ref.col(k).squaredNorm();
        alpha(k) = l2 * l1 * l3;
    }
    return alpha;
}

// NLoS gains: block transforms Lambda_{1,k} from Gtilde^+ Ghat,
// lambda_{3,k} from S_o^+ Shat_o, Lambda_2^+ = blkdiag(lambda_{3,k}
// Lambda_{1,k}^T), alpha = diag(Btilde^+ Ahat Lambda_2^+). Estimates are
// ordered path-major (grouped by user), permutation already removed.
inline CVec recover_gains_nlos(const CMat& g_hat, const CMat& a_hat, const CMat& s_hat,
                               const std::vector<double>& taus, const std::vector<double>& thetas,
                               const std::vector<double>& rs, const std::vector<int>& block_sizes,
                               const PilotMatrix& pilots, const CMat& W, const SystemConfig& cfg,
                               DistanceModel model = DistanceModel::Fresnel,
                               bool* ill_conditioned = nullptr) {
    const int L = static_cast<int>(taus.size());
    CMat g_ref(cfg.P, L), b_ref(cfg.M, L);
    for (int l = 0; l < L; ++l) {
        g_ref.col(l) = delay_response(taus[l], cfg);
        b_ref.col(l) = W.adjoint() * steering_vector(thetas[l], rs[l], cfg, model);
    }
    const CMat lam1_full = detail::pinv_solve(g_ref, g_hat, ill_conditioned);  // L x L
    const int K_users = static_cast<int>(s_hat.cols());
    CVec lambda3(K_users);
    for (int k = 0; k < K_users; ++k)
        lambda3(k) = pilots.S.col(k).dot(s_hat.col(k)) / pilots.S.col(k).squaredNorm();

    CMat lam2_pinv = CMat::Zero(L, L);
    int at = 0;
    for (size_t k = 0; k < block_sizes.size(); ++k) {
        const int Lk = block_sizes[k];
        lam2_pinv.block(at, at, Lk, Lk) = lambda3(k) * lam1_full.block(at, at, Lk, Lk).transpose();
        at += Lk;
    }
    const CMat proj = detail::pinv_solve(b_ref, a_hat, ill_conditioned) * lam2_pinv;
    return proj.diagonal();
}

// ---------------------------------------------------------------------------
// Channel reconstruction, localization, NMSE

inline std::vector<std::vector<CVec>> reconstruct_channels(const std::vector<PathParams>& est_paths,
                                                           const SystemConfig& cfg,
                                                           DistanceModel model = DistanceModel::Fresnel) {
    std::vector<std::vector<CVec>> h(cfg.P, std::vector<CVec>(cfg.K, CVec::Zero(cfg.N)));
    for (int k = 0; k < cfg.K; ++k) {
        std::vector<PathParams> mine;
        for (const auto& path : est_paths)
            if (path.user == k) mine.push_back(path);
        if (mine.empty()) continue;
        for (int p = 1; p <= cfg.P; ++p) h[p - 1][k] = channel_vector(mine, p, cfg, model);
    }
    return h;
}

inline double channel_nmse(const std::vector<std::vector<CVec>>& truth,
                           const std::vector<std::vector<CVec>>& est) {
    double num = 0.0, den = 0.0;
    for (size_t p = 0; p < truth.size(); ++p)
        for (size_t k = 0; k < truth[p].size(); ++k) {
            num += (truth[p][k] - est[p][k]).squaredNorm();
            den += truth[p][k].squaredNorm();
        }
    return den > 0.0 ? num / den : 0.0;
}

inline Eigen::Vector2d localize(double r, double theta) {
    if (r <= 0.0) throw std::invalid_argument("localize: r must be positive");
    return {r * std::cos(theta), r * std::sin(theta)};
}

}  // namespace nfce
