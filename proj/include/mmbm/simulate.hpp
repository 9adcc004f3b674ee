#pragma once

#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace mmbm {

// Deterministic, replication-splittable RNG.  xoshiro256++ seeded through
// splitmix64; normals by the polar method with the usual one-value cache.
struct Rng {
    std::uint64_t s[4];
    double cached = 0.0;
    bool have_cached = false;

    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : s) {
            x += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            word = z ^ (z >> 31);
        }
    }

    static std::uint64_t rotl(std::uint64_t v, int k) {
        return (v << k) | (v >> (64 - k));
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    double uniform() {  // (0, 1]
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    double normal() {
        if (have_cached) {
            have_cached = false;
            return cached;
        }
        double u, v, r2;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            r2 = u * u + v * v;
        } while (r2 >= 1.0 || r2 == 0.0);
        const double f = std::sqrt(-2.0 * std::log(r2) / r2);
        cached = v * f;
        have_cached = true;
        return u * f;
    }
};

inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct SimConfig {
    double dt = 1e-4;
    long n_cycles = 10000;  // regeneration cycles per replication
    int replications = 1;
    std::uint64_t seed = 1;
    long warmup_cycles = 100;
    // CDF evaluation levels in (0, b], strictly increasing.  Empty means a
    // default 20-point uniform grid.
    std::vector<double> grid;
};

struct SimReport {
    std::vector<double> grid;
    Matrix cdf;        // grid x (m_u + m_d): fraction of time at level <= x in phase j
    Matrix cdf_se;
    Vector total_cdf;  // summed over phases
    Vector total_cdf_se;
    Matrix H0_hat, H0_se;  // up-leg phase at b by starting phase; rows with no visits are zero
    Matrix Hb_hat, Hb_se;
    Vector up_visits, down_visits;
    Vector up_times, up_times_se;  // mean leg duration by starting phase
    Vector down_times, down_times_se;
    double up_fraction = 0.0, up_fraction_se = 0.0;
    long cycles = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
    // Boundary interaction is resolved by the exact one-step law rather than
    // by endpoint clamping or a detection band of width O(sqrt(dt)): a
    // Brownian-bridge test catches target crossings the step endpoint missed,
    // and the reflecting side applies the Skorokhod map of the sampled bridge
    // minimum.  Coefficients are constant within a step (phase jumps truncate
    // steps), so neither correction leaves an O(sqrt(dt)) barrier bias for
    // the cross-validation tests to absorb.
    std::string hit_detection = "bridge-exact";
};

namespace detail {

struct PhaseSampler {
    Vector rates;
    Matrix jump_cum;  // cumulative off-diagonal jump probabilities per row

    explicit PhaseSampler(const Matrix& Q) {
        const Eigen::Index m = Q.rows();
        rates = -Q.diagonal();
        jump_cum = Matrix::Zero(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < m; ++j) {
                if (j != i && rates(i) > 0.0) acc += Q(i, j) / rates(i);
                jump_cum(i, j) = acc;
            }
        }
    }

    double holding(Eigen::Index i, Rng& g) const {
        return rates(i) > 0.0 ? -std::log(g.uniform()) / rates(i)
                              : std::numeric_limits<double>::infinity();
    }

    Eigen::Index next(Eigen::Index i, Rng& g) const {
        const double u = g.uniform();
        Eigen::Index j = 0;
        while (j + 1 < jump_cum.cols() && u > jump_cum(i, j)) ++j;
        return j;
    }
};

inline Eigen::Index sample_row(const Matrix& P, Eigen::Index row, Rng& g) {
    const double u = g.uniform();
    double acc = 0.0;
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        acc += P(row, j);
        if (u <= acc) return j;
    }
    return P.cols() - 1;
}

// Time per (level bin, column) for one leg or cycle.  Bins are [0, g0],
// (g0, g1], ..., (g_{G-1}, b]; the cursor exploits that the level moves a
// little per step.
struct Occupancy {
    std::vector<double> grid;
    Matrix t;  // (G+1) x columns
    Eigen::Index cursor = 0;

    Occupancy(std::vector<double> g, Eigen::Index columns)
        : grid(std::move(g)),
          t(Matrix::Zero(static_cast<Eigen::Index>(grid.size()) + 1, columns)) {}

    void reset() {
        t.setZero();
        cursor = 0;
    }

    void add(double level, Eigen::Index col, double s) {
        const auto G = static_cast<Eigen::Index>(grid.size());
        Eigen::Index k = cursor;
        while (k < G && level > grid[static_cast<size_t>(k)]) ++k;
        while (k > 0 && level <= grid[static_cast<size_t>(k - 1)]) --k;
        cursor = k;
        t(k, col) += s;
    }
};

struct LegOutcome {
    double duration = 0.0;
    Eigen::Index end_phase = 0;
};

// Minimum of a Brownian bridge over one step, from 0 to endpoint d with
// increment variance s2h: P(min <= a) = exp(2a(d - a)/s2h), a <= min(0, d).
inline double bridge_min(double d, double s2h, Rng& g) {
    const double lv = std::log(g.uniform());
    return 0.5 * (d - std::sqrt(d * d - 2.0 * s2h * lv));
}

// One boundary-to-boundary passage of the regulated leg process.  Exact phase
// jump times; Euler-Maruyama level steps of length min(dt, time to next
// jump).  Coefficients are constant within a step, so the boundaries are
// handled by the exact step law in the distance-to-target coordinate u
// (u = b at the start of either leg, the target sits at u = 0, the reflector
// at u = b): a bridge test absorbs crossings the endpoint missed, and the
// Skorokhod map of the sampled bridge minimum reflects at u = b.  Randomness
// for either correction is only consumed when its bridge probability clears
// exp(-40); below that the rule is deterministic, which keeps runs seed-
// reproducible and the hot path cheap.
inline LegOutcome run_leg(const MmbmParams& p, double b, bool upward,
                          Eigen::Index phase, double dt, const PhaseSampler& ps,
                          Rng& g, Occupancy* occ, Eigen::Index col_offset) {
    double u = b;
    double duration = 0.0;
    double hold = ps.holding(phase, g);
    for (long step_count = 0;; ++step_count) {
        if (step_count > 2000000000L)
            throw NumericalFailure("run_leg: passage did not complete within the "
                                   "step budget; dt is likely far too small for b");
        const double step = std::min(dt, hold);
        if (occ) occ->add(upward ? b - u : u, col_offset + phase, step);
        duration += step;
        const double s2h = p.sigma(phase) * p.sigma(phase) * step;
        const double du = (upward ? -1.0 : 1.0) * p.mu(phase) * step +
                          p.sigma(phase) * std::sqrt(step) * g.normal();
        const double ur = u + du;
        if (ur <= 0.0 ||
            (u * ur < 20.0 * s2h &&
             g.uniform() < std::exp(-2.0 * u * ur / s2h)))
            return {duration, phase};
        const double v = b - u;
        double vr = b - ur;
        if (vr <= 0.0 || v * vr < 20.0 * s2h)
            vr -= std::min(0.0, v + bridge_min(-du, s2h, g));
        u = b - vr;
        if (u <= 0.0) return {duration, phase};
        hold -= step;
        if (hold <= 0.0) {
            phase = ps.next(phase, g);
            hold = ps.holding(phase, g);
        }
    }
}

inline std::vector<double> resolve_grid(const std::vector<double>& requested,
                                        double b) {
    std::vector<double> grid = requested;
    if (grid.empty())
        for (int k = 1; k <= 20; ++k) grid.push_back(b * k / 20.0);
    double prev = 0.0;
    for (double x : grid) {
        if (!(x > prev && x <= b))
            throw InvalidModel("simulate: grid must be strictly increasing inside "
                               "(0, b]");
        prev = x;
    }
    return grid;
}

inline void check_config(const SimConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw InvalidModel("simulate: dt must be positive");
    if (cfg.n_cycles < 1) throw InvalidModel("simulate: n_cycles must be >= 1");
    if (cfg.replications < 1)
        throw InvalidModel("simulate: replications must be >= 1");
    if (cfg.warmup_cycles < 0)
        throw InvalidModel("simulate: warmup_cycles must be >= 0");
}

inline void dt_warning(const SimConfig& cfg, double b, double max_abs_mu,
                       double max_s2, std::vector<std::string>& warnings) {
    const double bound =
        1e-2 * std::min(max_abs_mu > 0 ? b / max_abs_mu
                                       : std::numeric_limits<double>::infinity(),
                        b * b / max_s2);
    if (cfg.dt > bound)
        warnings.push_back("dt = " + std::to_string(cfg.dt) +
                           " exceeds the recommended bound " + std::to_string(bound) +
                           "; discretization bias may be visible");
}

// Laplace-adjusted binomial standard error: keeps rare-cell uncertainty
// honest when a count is 0 out of n.
inline double binomial_se(double count, double n) {
    if (n <= 0.0) return 1.0;
    const double p = (count + 1.0) / (n + 2.0);
    return std::sqrt(p * (1.0 - p) / n);
}

} // namespace detail

inline SimReport simulate(const FlexibleModel& model, const SimConfig& cfg) {
    model.validate();
    detail::check_config(cfg);
    const Eigen::Index mu_n = model.up.phases();
    const Eigen::Index md_n = model.down.phases();
    const Eigen::Index joint = mu_n + md_n;

    SimReport report;
    report.grid = detail::resolve_grid(cfg.grid, model.b);
    report.dt = cfg.dt;
    report.seed = cfg.seed;
    detail::dt_warning(cfg, model.b,
                       std::max(model.up.mu.cwiseAbs().maxCoeff(),
                                model.down.mu.cwiseAbs().maxCoeff()),
                       std::max(model.up.variance().maxCoeff(),
                                model.down.variance().maxCoeff()),
                       report.warnings);

    const auto G = static_cast<Eigen::Index>(report.grid.size());
    const detail::PhaseSampler ps_up(model.up.Q);
    const detail::PhaseSampler ps_down(model.down.Q);

    // Regenerative accumulators.  For each ratio statistic r = sum A / sum T
    // over cycles, the standard error is sqrt(SA2 - 2r SAT + r^2 ST2) / ST.
    Matrix SA = Matrix::Zero(G, joint), SA2 = Matrix::Zero(G, joint),
           SAT = Matrix::Zero(G, joint);
    Vector SAtot = Vector::Zero(G), SAtot2 = Vector::Zero(G), SAtotT = Vector::Zero(G);
    double ST = 0.0, ST2 = 0.0;
    double SUp = 0.0, SUp2 = 0.0, SUpT = 0.0;
    Matrix h0_count = Matrix::Zero(mu_n, mu_n);
    Matrix hb_count = Matrix::Zero(md_n, md_n);
    Vector up_start = Vector::Zero(mu_n), down_start = Vector::Zero(md_n);
    Vector up_dur = Vector::Zero(mu_n), up_dur2 = Vector::Zero(mu_n);
    Vector down_dur = Vector::Zero(md_n), down_dur2 = Vector::Zero(md_n);
    long cycles = 0;

    detail::Occupancy occ(report.grid, joint);
    for (int rep = 0; rep < cfg.replications; ++rep) {
        Rng g(replication_seed(cfg.seed, static_cast<std::uint64_t>(rep)));
        Eigen::Index phase = 0;
        for (long cycle = 0; cycle < cfg.warmup_cycles + cfg.n_cycles; ++cycle) {
            occ.reset();
            const Eigen::Index up_phase = phase;
            const auto up = detail::run_leg(model.up, model.b, true, up_phase,
                                            cfg.dt, ps_up, g, &occ, 0);
            const Eigen::Index down_phase =
                detail::sample_row(model.switch_at_top, up.end_phase, g);
            occ.cursor = static_cast<Eigen::Index>(report.grid.size());
            const auto down = detail::run_leg(model.down, model.b, false, down_phase,
                                              cfg.dt, ps_down, g, &occ, mu_n);
            phase = detail::sample_row(model.switch_at_bottom, down.end_phase, g);
            if (cycle < cfg.warmup_cycles) continue;

            ++cycles;
            const double T = up.duration + down.duration;
            ST += T;
            ST2 += T * T;
            SUp += up.duration;
            SUp2 += up.duration * up.duration;
            SUpT += up.duration * T;
            h0_count(up_phase, up.end_phase) += 1.0;
            hb_count(down_phase, down.end_phase) += 1.0;
            up_start(up_phase) += 1.0;
            down_start(down_phase) += 1.0;
            up_dur(up_phase) += up.duration;
            up_dur2(up_phase) += up.duration * up.duration;
            down_dur(down_phase) += down.duration;
            down_dur2(down_phase) += down.duration * down.duration;
            for (Eigen::Index j = 0; j < joint; ++j) {
                double run = 0.0;
                for (Eigen::Index k = 0; k < G; ++k) {
                    run += occ.t(k, j);
                    SA(k, j) += run;
                    SA2(k, j) += run * run;
                    SAT(k, j) += run * T;
                }
            }
            double run_tot = 0.0;
            for (Eigen::Index k = 0; k < G; ++k) {
                run_tot += occ.t.row(k).sum();
                SAtot(k) += run_tot;
                SAtot2(k) += run_tot * run_tot;
                SAtotT(k) += run_tot * T;
            }
        }
    }
    if (ST <= 0.0) throw NumericalFailure("simulate: no time accumulated");

    report.cycles = cycles;
    report.cdf = Matrix::Zero(G, joint);
    report.cdf_se = Matrix::Zero(G, joint);
    for (Eigen::Index k = 0; k < G; ++k)
        for (Eigen::Index j = 0; j < joint; ++j) {
            const double r = SA(k, j) / ST;
            report.cdf(k, j) = r;
            const double v = SA2(k, j) - 2.0 * r * SAT(k, j) + r * r * ST2;
            report.cdf_se(k, j) = std::sqrt(std::max(0.0, v)) / ST;
        }
    // The total CDF needs its own per-cycle sums: variances do not add across
    // phases because the per-phase occupancy times are correlated.
    report.total_cdf = report.cdf.rowwise().sum();
    report.total_cdf_se = Vector::Zero(G);
    for (Eigen::Index k = 0; k < G; ++k) {
        const double r = report.total_cdf(k);
        const double v = SAtot2(k) - 2.0 * r * SAtotT(k) + r * r * ST2;
        report.total_cdf_se(k) = std::sqrt(std::max(0.0, v)) / ST;
    }

    auto finish_hits = [](const Matrix& counts, const Vector& starts, Matrix& H,
                          Matrix& SE) {
        const Eigen::Index n = counts.rows();
        H = Matrix::Zero(n, n);
        SE = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                if (starts(i) > 0.0) H(i, j) = counts(i, j) / starts(i);
                SE(i, j) = detail::binomial_se(counts(i, j), starts(i));
            }
    };
    finish_hits(h0_count, up_start, report.H0_hat, report.H0_se);
    finish_hits(hb_count, down_start, report.Hb_hat, report.Hb_se);
    report.up_visits = up_start;
    report.down_visits = down_start;

    auto finish_times = [](const Vector& sum, const Vector& sum2, const Vector& n,
                           Vector& mean, Vector& se) {
        mean = Vector::Zero(sum.size());
        se = Vector::Zero(sum.size());
        for (Eigen::Index i = 0; i < sum.size(); ++i) {
            if (n(i) > 0.0) mean(i) = sum(i) / n(i);
            if (n(i) > 1.0) {
                const double var = std::max(0.0, sum2(i) / n(i) - mean(i) * mean(i));
                se(i) = std::sqrt(var / n(i));
            } else {
                se(i) = std::numeric_limits<double>::infinity();
            }
        }
    };
    finish_times(up_dur, up_dur2, up_start, report.up_times, report.up_times_se);
    finish_times(down_dur, down_dur2, down_start, report.down_times,
                 report.down_times_se);

    report.up_fraction = SUp / ST;
    {
        const double r = report.up_fraction;
        const double v = SUp2 - 2.0 * r * SUpT + r * r * ST2;
        report.up_fraction_se = std::sqrt(std::max(0.0, v)) / ST;
    }
    return report;
}

enum class LegDirection { up, down };

struct ExcursionEstimate {
    Vector durations, duration_se;  // mean passage time by starting phase
    Matrix H, H_se;                 // phase distribution at the far boundary
    Vector counts;
    std::vector<double> grid;       // levels with sojourn estimates (may be empty)
    std::vector<Matrix> sojourn;    // per level: (start phase) x (phase) mean time in [0, x]
    std::vector<Matrix> sojourn_se;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

// Controlled-start estimator for one leg direction: n_cycles legs in total,
// split evenly across starting phases, each run to the far boundary.
inline ExcursionEstimate estimate_excursions(const MmbmParams& p, double b,
                                             LegDirection dir, const SimConfig& cfg) {
    p.validate();
    detail::check_config(cfg);
    if (!(b > 0.0)) throw InvalidModel("estimate_excursions: b must be positive");
    const Eigen::Index m = p.phases();
    const long per_phase =
        std::max<long>(1, cfg.n_cycles / static_cast<long>(m));

    ExcursionEstimate est;
    est.dt = cfg.dt;
    est.seed = cfg.seed;
    est.grid = cfg.grid;  // empty means durations/hits only
    std::sort(est.grid.begin(), est.grid.end());
    for (double x : est.grid)
        if (!(x > 0.0 && x <= b))
            throw InvalidModel("estimate_excursions: grid levels must lie in (0, b]");
    detail::dt_warning(cfg, b, p.mu.cwiseAbs().maxCoeff(), p.variance().maxCoeff(),
                       est.warnings);

    const auto G = static_cast<Eigen::Index>(est.grid.size());
    const detail::PhaseSampler ps(p.Q);
    const bool upward = dir == LegDirection::up;

    Vector dur = Vector::Zero(m), dur2 = Vector::Zero(m), n = Vector::Zero(m);
    Matrix hits = Matrix::Zero(m, m);
    std::vector<Matrix> soj(static_cast<size_t>(G), Matrix::Zero(m, m));
    std::vector<Matrix> soj2(static_cast<size_t>(G), Matrix::Zero(m, m));

    detail::Occupancy occ(est.grid, m);
    for (int rep = 0; rep < cfg.replications; ++rep) {
        Rng g(replication_seed(cfg.seed, static_cast<std::uint64_t>(rep)));
        for (Eigen::Index start = 0; start < m; ++start) {
            for (long c = 0; c < per_phase; ++c) {
                occ.reset();
                if (!upward) occ.cursor = G;
                const auto leg =
                    detail::run_leg(p, b, upward, start, cfg.dt, ps, g, &occ, 0);
                n(start) += 1.0;
                dur(start) += leg.duration;
                dur2(start) += leg.duration * leg.duration;
                hits(start, leg.end_phase) += 1.0;
                for (Eigen::Index j = 0; j < m; ++j) {
                    double run = 0.0;
                    for (Eigen::Index k = 0; k < G; ++k) {
                        run += occ.t(k, j);
                        soj[static_cast<size_t>(k)](start, j) += run;
                        soj2[static_cast<size_t>(k)](start, j) += run * run;
                    }
                }
            }
        }
    }

    est.counts = n;
    est.durations = Vector::Zero(m);
    est.duration_se = Vector::Zero(m);
    est.H = Matrix::Zero(m, m);
    est.H_se = Matrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        est.durations(i) = dur(i) / n(i);
        const double var = std::max(0.0, dur2(i) / n(i) - est.durations(i) * est.durations(i));
        est.duration_se(i) = n(i) > 1.0 ? std::sqrt(var / n(i))
                                        : std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m; ++j) {
            est.H(i, j) = hits(i, j) / n(i);
            est.H_se(i, j) = detail::binomial_se(hits(i, j), n(i));
        }
    }
    est.sojourn.resize(static_cast<size_t>(G));
    est.sojourn_se.resize(static_cast<size_t>(G));
    for (Eigen::Index k = 0; k < G; ++k) {
        Matrix mean = Matrix::Zero(m, m), se = Matrix::Zero(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j) {
                mean(i, j) = soj[static_cast<size_t>(k)](i, j) / n(i);
                const double var = std::max(
                    0.0, soj2[static_cast<size_t>(k)](i, j) / n(i) - mean(i, j) * mean(i, j));
                se(i, j) = n(i) > 1.0 ? std::sqrt(var / n(i))
                                      : std::numeric_limits<double>::infinity();
            }
        est.sojourn[static_cast<size_t>(k)] = std::move(mean);
        est.sojourn_se[static_cast<size_t>(k)] = std::move(se);
    }
    return est;
}

} // namespace mmbm
