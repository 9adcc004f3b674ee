#pragma once

#include "passage.hpp"

#include <cmath>
#include <utility>

namespace mmbm {

// Precomputed pieces for the expected-sojourn matrices of one leg pair over
// [0, b].  Immutable after construction; evaluation at different x values is
// independent.
//
// Zero drift is rejected: the linear system characterizing the sojourn
// matrices loses rank there and no completing identity is available.
struct SojournKit {
    Matrix K;
    Matrix K_hat;
    double b = 0.0;
    DriftClass drift_class = DriftClass::negative;
    Vector sigma;
    Matrix exp_Kb;
    Matrix exp_Khat_b;
    Matrix T0;      // 2 (-P_b)^{-1} (I - e^{Kb} e^{Khat b})^{-1}
    Matrix T0_hat;  // 2 (-P_hat_b)^{-1} (I - e^{Khat b} e^{Kb})^{-1}
};

inline SojournKit build_kit(const MmbmParams& p, const GeneratorPair& g,
                            const PassageSolution& passage, double b,
                            const Tolerances& tol = default_tolerances()) {
    if (g.drift_class == DriftClass::zero)
        throw UnsupportedCase("build_kit: sojourn matrices are not available at "
                              "zero mean drift; the completing identity for the "
                              "rank-deficient system is unknown");
    if (!(b > 0.0) || std::abs(passage.b - b) > 1e-12 * std::max(1.0, b))
        throw InvalidModel("build_kit: b does not match the passage solution");
    (void)tol;

    const Eigen::Index m = p.phases();
    const Matrix Ds = p.sigma.asDiagonal();
    const Matrix Ds_inv = p.sigma.cwiseInverse().asDiagonal();
    const Vector s2 = p.variance();
    const Matrix drift_term = (2.0 * p.mu.cwiseQuotient(s2)).asDiagonal();

    SojournKit kit;
    kit.K = Ds * g.U * Ds_inv + drift_term;
    kit.K_hat = Ds * g.Uhat * Ds_inv - drift_term;
    kit.b = b;
    kit.drift_class = g.drift_class;
    kit.sigma = p.sigma;
    kit.exp_Kb = matrix_exp(kit.K * b);
    kit.exp_Khat_b = matrix_exp(kit.K_hat * b);

    const Matrix I = Matrix::Identity(m, m);
    kit.T0 = 2.0 * (-passage.P_b).partialPivLu().solve(
                       (I - kit.exp_Kb * kit.exp_Khat_b).partialPivLu().solve(I));
    kit.T0_hat = 2.0 * (-passage.P_hat_b).partialPivLu().solve(
                           (I - kit.exp_Khat_b * kit.exp_Kb).partialPivLu().solve(I));
    return kit;
}

namespace detail {

inline void check_sojourn_x(const SojournKit& kit, double x, const char* what) {
    if (!(x >= 0.0 && x <= kit.b))
        throw InvalidModel(std::string(what) + ": x must lie in [0, b]");
}

// K carries the zero eigenvalue when the drift is positive, K_hat when it is
// negative; the integral of the matrix exponential needs to know which.
inline Matrix F_K(const SojournKit& kit, double x, const Tolerances& tol) {
    return integral_exp(kit.K, x, kit.drift_class == DriftClass::positive, tol);
}

inline Matrix F_Khat(const SojournKit& kit, double x, const Tolerances& tol) {
    return integral_exp(kit.K_hat, x, kit.drift_class == DriftClass::negative, tol);
}

} // namespace detail

// Expected time in [0, x], by phase, during a passage from 0 to b:
//   M0(x) = 2(-P_b)^{-1}(I - e^{Kb}e^{Khat b})^{-1}
//           (F(K;x) - e^{Kb} e^{Khat(b-x)} F(Khat;x)) Dsigma^{-1}
inline Matrix sojourn_up(const SojournKit& kit, double x,
                         const Tolerances& tol = default_tolerances()) {
    detail::check_sojourn_x(kit, x, "sojourn_up");
    const Matrix inner = detail::F_K(kit, x, tol) -
                         kit.exp_Kb * matrix_exp(kit.K_hat * (kit.b - x)) *
                             detail::F_Khat(kit, x, tol);
    return kit.T0 * inner * kit.sigma.cwiseInverse().asDiagonal();
}

// Expected time in [0, x], by phase, during a passage from b to 0:
//   Mb(x) = 2(-P_hat_b)^{-1}(I - e^{Khat b}e^{Kb})^{-1}
//           e^{Khat(b-x)} (F(Khat;x) - e^{Khat x} F(K;x)) Dsigma^{-1}
inline Matrix sojourn_down(const SojournKit& kit, double x,
                           const Tolerances& tol = default_tolerances()) {
    detail::check_sojourn_x(kit, x, "sojourn_down");
    const Matrix inner =
        matrix_exp(kit.K_hat * (kit.b - x)) *
        (detail::F_Khat(kit, x, tol) - matrix_exp(kit.K_hat * x) * detail::F_K(kit, x, tol));
    return kit.T0_hat * inner * kit.sigma.cwiseInverse().asDiagonal();
}

// Expected passage durations by starting phase: time in [0, b] is the whole
// leg, so row sums of M0(b) and Mb(b) are the mean passage times.
inline std::pair<Vector, Vector> excursion_times(const SojournKit& kit,
                                                 const Tolerances& tol = default_tolerances()) {
    const Vector up = sojourn_up(kit, kit.b, tol).rowwise().sum();
    const Vector down = sojourn_down(kit, kit.b, tol).rowwise().sum();
    if (up.minCoeff() <= 0.0 || down.minCoeff() <= 0.0)
        throw NumericalFailure("excursion_times: nonpositive expected duration");
    return {up, down};
}

} // namespace mmbm
