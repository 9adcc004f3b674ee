#pragma once

#include "sojourn.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace mmbm {

// Fast-oscillating fluid approximation of an MMBM: each diffusion phase i is
// split into an up state with rate mu_i + sqrt(lambda) sigma_i and a down
// state with rate mu_i - sqrt(lambda) sigma_i, switching at rate lambda.
// As lambda grows the fluid paths converge to the diffusion, which makes the
// fluid pipeline an independent oracle for the MMBM formulas.
struct FluidParams {
    double lambda = 0.0;
    Matrix T;  // 2m x 2m phase generator
    Vector C;  // 2m rates; first m positive (up states), last m negative
    Eigen::Index m = 0;

    Matrix T_uu() const { return T.topLeftCorner(m, m); }
    Matrix T_ud() const { return T.topRightCorner(m, m); }
    Matrix T_du() const { return T.bottomLeftCorner(m, m); }
    Matrix T_dd() const { return T.bottomRightCorner(m, m); }
    Vector C_up() const { return C.head(m); }
    Vector C_down_abs() const { return -C.tail(m); }
};

inline double min_fluid_lambda(const MmbmParams& p) {
    return p.mu.cwiseQuotient(p.sigma).cwiseAbs2().maxCoeff();
}

inline FluidParams build_fluid(const MmbmParams& p, double lambda,
                               const Tolerances& tol = default_tolerances()) {
    p.validate(tol);
    const double threshold = min_fluid_lambda(p);
    if (!(lambda > threshold))
        throw InvalidModel("build_fluid: lambda must exceed max_i (mu_i/sigma_i)^2 = " +
                           std::to_string(threshold) +
                           " so that every split state keeps a nonzero rate of "
                           "the intended sign");
    const Eigen::Index m = p.phases();
    FluidParams f;
    f.lambda = lambda;
    f.m = m;
    f.T = Matrix::Zero(2 * m, 2 * m);
    f.T.topLeftCorner(m, m) = p.Q - lambda * Matrix::Identity(m, m);
    f.T.topRightCorner(m, m) = lambda * Matrix::Identity(m, m);
    f.T.bottomLeftCorner(m, m) = lambda * Matrix::Identity(m, m);
    f.T.bottomRightCorner(m, m) = p.Q - lambda * Matrix::Identity(m, m);
    const double rootl = std::sqrt(lambda);
    f.C.resize(2 * m);
    f.C.head(m) = p.mu + rootl * p.sigma;
    f.C.tail(m) = p.mu - rootl * p.sigma;
    if (f.C.head(m).minCoeff() <= 0.0 || f.C.tail(m).maxCoeff() >= 0.0)
        throw InvalidModel("build_fluid: rate signs inconsistent with the split");
    return f;
}

namespace detail {

// Minimal nonnegative solution of  B + A X + X D + X E X = 0  by Newton
// iteration from X = 0; each step solves the Sylvester equation
//   (A + X E) H + H (D + E X) = -R(X).
// Only the residual contract matters to callers.
inline Matrix solve_riccati(const Matrix& A, const Matrix& B, const Matrix& D,
                            const Matrix& E, const Tolerances& tol) {
    const Eigen::Index m = A.rows();
    Matrix X = Matrix::Zero(m, m);
    const double scale = std::max(1.0, inf_norm(B));
    for (int it = 0; it < 10000; ++it) {
        const Matrix R = B + A * X + X * D + X * E * X;
        if (inf_norm(R) <= 1e-12 * scale) {
            if (X.minCoeff() < -1e-10)
                throw NumericalFailure("solve_riccati: converged to a solution "
                                       "with negative entries");
            return X.cwiseMax(0.0);
        }
        X += solve_sylvester(A + X * E, D + E * X, -R);
    }
    throw NumericalFailure("solve_riccati: no convergence within the iteration cap");
}

} // namespace detail

// First-return probability matrix of the free fluid: Psi(i,j) is the
// probability that a path leaving level 0 upward in up-state i first returns
// to 0 in down-state j.
inline Matrix riccati_psi(const FluidParams& f,
                          const Tolerances& tol = default_tolerances()) {
    const Matrix Cu_inv = f.C_up().cwiseInverse().asDiagonal();
    const Matrix Cd_inv = f.C_down_abs().cwiseInverse().asDiagonal();
    const Matrix A = Cu_inv * f.T_uu();
    const Matrix B = Cu_inv * f.T_ud();
    const Matrix D = Cd_inv * f.T_dd();
    const Matrix E = Cd_inv * f.T_du();
    Matrix psi = detail::solve_riccati(A, B, D, E, tol);
    if ((psi * Vector::Ones(f.m)).maxCoeff() > 1.0 + 1e-8)
        throw NumericalFailure("riccati_psi: row sums exceed one");
    return psi;
}

// Mirror object for paths leaving 0 downward (equivalently riccati_psi of
// the level-reversed fluid).
inline Matrix riccati_psi_hat(const FluidParams& f,
                              const Tolerances& tol = default_tolerances()) {
    const Matrix Cu_inv = f.C_up().cwiseInverse().asDiagonal();
    const Matrix Cd_inv = f.C_down_abs().cwiseInverse().asDiagonal();
    const Matrix A = Cd_inv * f.T_dd();
    const Matrix B = Cd_inv * f.T_du();
    const Matrix D = Cu_inv * f.T_uu();
    const Matrix E = Cu_inv * f.T_ud();
    Matrix psi = detail::solve_riccati(A, B, D, E, tol);
    if ((psi * Vector::Ones(f.m)).maxCoeff() > 1.0 + 1e-8)
        throw NumericalFailure("riccati_psi_hat: row sums exceed one");
    return psi;
}

inline std::pair<Matrix, Matrix> k_lambda(const FluidParams& f, const Matrix& psi,
                                          const Matrix& psi_hat) {
    const Matrix Cu_inv = f.C_up().cwiseInverse().asDiagonal();
    const Matrix Cd_inv = f.C_down_abs().cwiseInverse().asDiagonal();
    Matrix K = Cu_inv * f.T_uu() + psi * Cd_inv * f.T_du();
    Matrix K_hat = Cd_inv * f.T_dd() + psi_hat * Cu_inv * f.T_ud();
    return {std::move(K), std::move(K_hat)};
}

// FluidParams plus every derived matrix the sojourn formulas need.
struct FluidKit {
    FluidParams f;
    Matrix psi;
    Matrix psi_hat;
    Matrix K;
    Matrix K_hat;
    DriftClass drift_class = DriftClass::negative;
};

inline FluidKit build_fluid_kit(const MmbmParams& p, double lambda,
                                const Tolerances& tol = default_tolerances()) {
    FluidKit kit;
    kit.f = build_fluid(p, lambda, tol);
    kit.psi = riccati_psi(kit.f, tol);
    kit.psi_hat = riccati_psi_hat(kit.f, tol);
    auto ks = k_lambda(kit.f, kit.psi, kit.psi_hat);
    kit.K = std::move(ks.first);
    kit.K_hat = std::move(ks.second);
    kit.drift_class = classify_drift(mean_drift(p, tol), tol);
    return kit;
}

// Expected time in [0, x] per split state before first return to 0, for a
// path started upward at 0:  Gamma_0(x) = F(K;x) [C_u^{-1}, Psi |C_d|^{-1}].
// K carries a zero eigenvalue unless the drift is negative.
inline Matrix gamma_zero(const FluidKit& kit, double x,
                         const Tolerances& tol = default_tolerances()) {
    if (!(x >= 0.0)) throw InvalidModel("gamma_zero: x must be >= 0");
    const Matrix F = integral_exp(kit.K, x, kit.drift_class != DriftClass::negative, tol);
    Matrix out(kit.f.m, 2 * kit.f.m);
    out.leftCols(kit.f.m) = F * kit.f.C_up().cwiseInverse().asDiagonal();
    out.rightCols(kit.f.m) =
        F * kit.psi * kit.f.C_down_abs().cwiseInverse().asDiagonal();
    return out;
}

// Same quantity for a path started downward at b, before first return to b:
//   Gammahat_b(x) = e^{Khat(b-x)} F(Khat;x) [Psihat C_u^{-1}, |C_d|^{-1}].
inline Matrix gamma_b(const FluidKit& kit, double b, double x,
                      const Tolerances& tol = default_tolerances()) {
    if (!(b > 0.0) || !(x >= 0.0 && x <= b))
        throw InvalidModel("gamma_b: need 0 <= x <= b");
    const Matrix F =
        integral_exp(kit.K_hat, x, kit.drift_class != DriftClass::positive, tol);
    const Matrix lead = matrix_exp(kit.K_hat * (b - x)) * F;
    Matrix out(kit.f.m, 2 * kit.f.m);
    out.leftCols(kit.f.m) =
        lead * kit.psi_hat * kit.f.C_up().cwiseInverse().asDiagonal();
    out.rightCols(kit.f.m) = lead * kit.f.C_down_abs().cwiseInverse().asDiagonal();
    return out;
}

// Mean sojourn in [0, x] during a passage across the strip, with the far
// boundary taboo:   [[I, e^{Kb} Psi],[e^{Khat b} Psihat, I]] [N0; Nb] =
// [Gamma_0(x); Gammahat_b(x)].  The coefficient matrix is singular exactly
// at zero drift.
inline std::pair<Matrix, Matrix> taboo_sojourn(const FluidKit& kit, double b,
                                               double x,
                                               const Tolerances& tol = default_tolerances()) {
    if (!(b > 0.0) || !(x >= 0.0 && x <= b))
        throw InvalidModel("taboo_sojourn: need 0 <= x <= b");
    const Eigen::Index m = kit.f.m;
    Matrix W(2 * m, 2 * m);
    W.topLeftCorner(m, m) = Matrix::Identity(m, m);
    W.topRightCorner(m, m) = matrix_exp(kit.K * b) * kit.psi;
    W.bottomLeftCorner(m, m) = matrix_exp(kit.K_hat * b) * kit.psi_hat;
    W.bottomRightCorner(m, m) = Matrix::Identity(m, m);

    Eigen::JacobiSVD<Matrix> svd(W);
    if (svd.singularValues()(2 * m - 1) <
        1e-10 * std::max(1.0, svd.singularValues()(0)))
        throw UnsupportedCase("taboo_sojourn: coefficient matrix is singular; "
                              "this happens exactly at zero mean drift, which "
                              "the sojourn pipeline does not support");

    Matrix rhs(2 * m, 2 * m);
    rhs.topRows(m) = gamma_zero(kit, x, tol);
    rhs.bottomRows(m) = gamma_b(kit, b, x, tol);
    const Matrix N = W.partialPivLu().solve(rhs);
    if (inf_norm(W * N - rhs) > 1e-9 * std::max(1.0, inf_norm(rhs)))
        throw NumericalFailure("taboo_sojourn: block system residual too large");
    return {N.topRows(m), N.bottomRows(m)};
}

struct ConvergenceRow {
    double lambda = 0.0;
    double err_up = 0.0;
    double err_down = 0.0;
    double order_up = 0.0;    // decay order vs the previous row; 0 for the first
    double order_down = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    double m0_norm = 0.0;
    double mb_norm = 0.0;
    bool errors_decrease = false;
    bool final_within_threshold = false;
    bool passed = false;
    // The 2% acceptance threshold at the largest lambda is an engineering
    // choice; the theory gives O(1/sqrt(lambda)) with no explicit constant.
    double threshold = 0.02;
};

// Cross-checks the fluid pipeline against the diffusion sojourn matrices:
//   A(lambda) = sqrt(lambda) (-P_b)^{-1} N0 [I; I]      -> M0(x)
//   B(lambda) = sqrt(lambda) (-P_hat_b)^{-1} Nb [I; I]  -> Mb(x)
inline ConvergenceReport convergence_check(const MmbmParams& p, double b, double x,
                                           const std::vector<double>& lambdas,
                                           const Tolerances& tol = default_tolerances()) {
    if (lambdas.size() < 2)
        throw InvalidModel("convergence_check: need at least two lambda values");
    for (size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] > lambdas[i - 1]))
            throw InvalidModel("convergence_check: lambdas must be increasing");

    const GeneratorPair gen = solve_pair(p, tol);
    const PassageSolution pass = solve_passage(p, gen, b, tol);
    const SojournKit kit = build_kit(p, gen, pass, b, tol);
    const Matrix M0 = sojourn_up(kit, x, tol);
    const Matrix Mb = sojourn_down(kit, x, tol);

    const Eigen::Index m = p.phases();
    Matrix stack(2 * m, m);
    stack << Matrix::Identity(m, m), Matrix::Identity(m, m);

    ConvergenceReport report;
    report.m0_norm = inf_norm(M0);
    report.mb_norm = inf_norm(Mb);
    for (double lambda : lambdas) {
        const FluidKit fk = build_fluid_kit(p, lambda, tol);
        const auto [N0, Nb] = taboo_sojourn(fk, b, x, tol);
        const double rootl = std::sqrt(lambda);
        const Matrix A = rootl * (-pass.P_b).partialPivLu().solve(N0 * stack);
        const Matrix B = rootl * (-pass.P_hat_b).partialPivLu().solve(Nb * stack);
        ConvergenceRow row;
        row.lambda = lambda;
        row.err_up = inf_norm(A - M0);
        row.err_down = inf_norm(B - Mb);
        if (!report.rows.empty()) {
            const ConvergenceRow& prev = report.rows.back();
            const double dl = std::log(lambda / prev.lambda);
            row.order_up = std::log(prev.err_up / row.err_up) / dl;
            row.order_down = std::log(prev.err_down / row.err_down) / dl;
        }
        report.rows.push_back(row);
    }

    report.errors_decrease = true;
    for (size_t i = 1; i < report.rows.size(); ++i)
        if (report.rows[i].err_up >= report.rows[i - 1].err_up ||
            report.rows[i].err_down >= report.rows[i - 1].err_down)
            report.errors_decrease = false;
    const ConvergenceRow& last = report.rows.back();
    report.final_within_threshold =
        last.err_up <= report.threshold * report.m0_norm &&
        last.err_down <= report.threshold * report.mb_norm;
    report.passed = report.errors_decrease && report.final_within_threshold;
    return report;
}

} // namespace mmbm
