#pragma once

#include "sojourn.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace mmbm {

// Stationary law of the flexible two-boundary process, assembled from the
// per-leg passage and sojourn objects.  nu_u is the stationary phase mix at
// departures from 0, nu_d the mix at departures from b; the CDF is
//   Pi(x) = normalizer^{-1} (nu_u M0u(x), nu_d Mbd(x)).
struct StationaryDistribution {
    double b = 0.0;
    RowVector nu_u;
    RowVector nu_d;
    double normalizer = 0.0;
    double up_time = 0.0;    // nu_u . M0u(b) 1, mean up-leg duration per cycle
    double down_time = 0.0;  // nu_d . Mbd(b) 1
    Vector up_leg_times;     // M0u(b) 1, by starting phase
    Vector down_leg_times;   // Mbd(b) 1, by starting phase
    SojournKit up_kit;
    SojournKit down_kit;
    Matrix H0_up;    // phase-at-b distribution of the up leg
    Matrix Hb_down;  // phase-at-0 distribution of the down leg
    std::vector<std::string> warnings;

    Eigen::Index up_phases() const { return nu_u.size(); }
    Eigen::Index down_phases() const { return nu_d.size(); }
};

inline StationaryDistribution assemble(const FlexibleModel& model,
                                       const Tolerances& tol = default_tolerances()) {
    model.validate(tol);
    const GeneratorPair gen_u = solve_pair(model.up, tol);
    const GeneratorPair gen_d = solve_pair(model.down, tol);
    if (gen_u.drift_class == DriftClass::zero || gen_d.drift_class == DriftClass::zero)
        throw UnsupportedCase("assemble: a leg has zero mean drift; expected "
                              "sojourn times, and with them the stationary "
                              "distribution, are unavailable in that regime");

    const PassageSolution pass_u = solve_passage(model.up, gen_u, model.b, tol);
    const PassageSolution pass_d = solve_passage(model.down, gen_d, model.b, tol);
    const SojournKit kit_u = build_kit(model.up, gen_u, pass_u, model.b, tol);
    const SojournKit kit_d = build_kit(model.down, gen_d, pass_d, model.b, tol);

    // Phase chain observed at successive departures from level 0.
    const Matrix cycle =
        pass_u.H0 * model.switch_at_top * pass_d.Hb * model.switch_at_bottom;
    Matrix cycle_pos = cycle.cwiseMax(0.0);
    if ((cycle - cycle_pos).norm() > 1e-9)
        throw NumericalFailure("assemble: boundary-cycle chain has significant "
                               "negative entries");
    if (model.up.phases() > 1 && !strongly_connected(cycle_pos))
        throw InvalidModel("assemble: the boundary-cycle phase chain is "
                           "reducible; the stationary phase mix at level 0 is "
                           "not unique");

    StationaryDistribution dist;
    dist.b = model.b;
    dist.nu_u = perron_left(cycle_pos, tol);
    const double fp_residual = (dist.nu_u * cycle - dist.nu_u).cwiseAbs().maxCoeff();
    if (fp_residual > 1e-9)
        throw NumericalFailure("assemble: fixed-point residual " +
                               std::to_string(fp_residual) + " of nu_u");
    dist.nu_d = dist.nu_u * pass_u.H0 * model.switch_at_top;

    dist.up_leg_times = sojourn_up(kit_u, model.b, tol).rowwise().sum();
    dist.down_leg_times = sojourn_down(kit_d, model.b, tol).rowwise().sum();
    dist.up_time = dist.nu_u.dot(dist.up_leg_times);
    dist.down_time = dist.nu_d.dot(dist.down_leg_times);
    dist.normalizer = dist.up_time + dist.down_time;
    if (!(dist.normalizer > 0.0))
        throw NumericalFailure("assemble: nonpositive cycle length");

    dist.up_kit = kit_u;
    dist.down_kit = kit_d;
    dist.H0_up = pass_u.H0;
    dist.Hb_down = pass_d.Hb;
    dist.warnings = pass_u.warnings;
    dist.warnings.insert(dist.warnings.end(), pass_d.warnings.begin(),
                         pass_d.warnings.end());
    return dist;
}

// Joint CDF row vector over up phases followed by down phases.
inline RowVector cdf_eval(const StationaryDistribution& dist, double x,
                          const Tolerances& tol = default_tolerances()) {
    if (!(x >= 0.0 && x <= dist.b))
        throw InvalidModel("cdf_eval: x must lie in [0, b]");
    RowVector out(dist.up_phases() + dist.down_phases());
    out.head(dist.up_phases()) = dist.nu_u * sojourn_up(dist.up_kit, x, tol);
    out.tail(dist.down_phases()) = dist.nu_d * sojourn_down(dist.down_kit, x, tol);
    return out / dist.normalizer;
}

inline double total_cdf(const StationaryDistribution& dist, double x,
                        const Tolerances& tol = default_tolerances()) {
    return cdf_eval(dist, x, tol).sum();
}

// Smallest x with total CDF >= p, by bisection on the monotone total CDF.
inline double quantile(const StationaryDistribution& dist, double p,
                       const Tolerances& tol = default_tolerances()) {
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidModel("quantile: p must lie in [0, 1]");
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return dist.b;
    double lo = 0.0, hi = dist.b;
    while (hi - lo > 1e-8 * dist.b) {
        const double mid = 0.5 * (lo + hi);
        (total_cdf(dist, mid, tol) >= p ? hi : lo) = mid;
    }
    return hi;
}

// Long-run fraction of time spent on up legs.
inline double up_leg_fraction(const StationaryDistribution& dist) {
    return dist.up_time / dist.normalizer;
}

} // namespace mmbm
