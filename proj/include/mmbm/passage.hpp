#pragma once

#include "quadratic.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace mmbm {

// One direction of boundary-to-boundary passage.  H is the phase
// distribution at the moment the far boundary is first reached; L and P are
// the derivative and boundary blocks it factors through, H = (-P)^{-1} L.
struct PassageLeg {
    Matrix L;
    Matrix P;
    Matrix H;
    double system_residual = 0.0;
    std::vector<std::string> warnings;
};

// Both legs over the strip [0, b].
struct PassageSolution {
    double b = 0.0;
    Matrix L_b, P_b, H0;
    Matrix L_hat_b, P_hat_b, Hb;
    std::vector<std::string> warnings;
};

// Two-sided exit from [0, b] started inside the strip: to_top(i,j) is the
// probability of leaving through b in phase j from level x in phase i.
struct ExitProbabilities {
    Matrix to_bottom;
    Matrix to_top;
};

namespace detail {

// Every passage-type identity in this header is an instance of
//   [X1 X2] [[I, E],[Ehat, I]] = [R1 R2],
// which pins [X1 X2] uniquely except at zero drift, where the coefficient
// matrix drops rank by one and a moment identity [X1 X2] w = s completes it.
// The stacked least-squares solve is then consistent, so its residual stays
// at roundoff level.
struct BoundaryPair {
    Matrix X1, X2;
    double residual = 0.0;
    std::vector<std::string> warnings;
};

inline BoundaryPair solve_boundary_pair(const Matrix& E, const Matrix& Ehat,
                                        const Matrix& R1, const Matrix& R2,
                                        const Vector& w1, const Vector& w2,
                                        const Vector& s, DriftClass drift_class,
                                        const std::string& what,
                                        const Tolerances& tol) {
    const Eigen::Index m = E.rows();
    Matrix G(2 * m, 2 * m);
    G.topLeftCorner(m, m) = Matrix::Identity(m, m);
    G.topRightCorner(m, m) = E;
    G.bottomLeftCorner(m, m) = Ehat;
    G.bottomRightCorner(m, m) = Matrix::Identity(m, m);
    Matrix R(m, 2 * m);
    R << R1, R2;

    Eigen::JacobiSVD<Matrix> svd(G);
    const double smin = svd.singularValues()(2 * m - 1);
    const double smax = svd.singularValues()(0);
    const bool direct_ok = smin > 1e-12 * smax;

    Matrix direct;
    if (direct_ok)
        direct = G.transpose().partialPivLu().solve(R.transpose()).transpose();

    auto system_residual = [&](const Matrix& X) { return inf_norm(X * G - R); };
    const double scale = std::max(1.0, inf_norm(R));

    BoundaryPair out;
    Matrix X;
    if (drift_class != DriftClass::zero) {
        if (!direct_ok)
            throw NumericalFailure(what + ": drift classified as " +
                                   std::string(drift_class == DriftClass::negative
                                                   ? "negative" : "positive") +
                                   " but the boundary system is numerically "
                                   "singular; classification is inconsistent");
        X = direct;
    } else {
        Matrix Gw(2 * m, 2 * m + 1);
        Gw.leftCols(2 * m) = G;
        Gw.col(2 * m) << w1, w2;
        Matrix Rs(m, 2 * m + 1);
        Rs << R, s;
        Matrix augmented = Gw.transpose()
                               .colPivHouseholderQr()
                               .solve(Rs.transpose())
                               .transpose();
        if (direct_ok) {
            const double gap = inf_norm(augmented - direct) /
                               std::max(1.0, inf_norm(direct));
            if (gap > 1e-5)
                out.warnings.push_back(
                    what + ": near-zero drift, direct and moment-augmented "
                           "solutions differ by " + std::to_string(gap) +
                    "; result may be ill-conditioned");
            X = system_residual(augmented) <= system_residual(direct) ? augmented
                                                                      : direct;
        } else {
            X = augmented;
        }
    }

    out.residual = system_residual(X);
    if (out.residual > 1e-9 * scale)
        throw NumericalFailure(what + ": boundary system residual " +
                               std::to_string(out.residual) + " exceeds tolerance");
    out.X1 = X.leftCols(m);
    out.X2 = X.rightCols(m);
    return out;
}

// (-P)^{-1} L with a conditioning guard; P is a nonsingular subgenerator.
inline Matrix hit_distribution(const Matrix& P, const Matrix& L,
                               const std::string& what) {
    Eigen::JacobiSVD<Matrix> svd(-P);
    if (svd.singularValues()(P.rows() - 1) <
        1e-12 * std::max(1.0, svd.singularValues()(0)))
        throw NumericalFailure(what + ": boundary block P is numerically singular");
    return (-P).partialPivLu().solve(L);
}

inline Vector gauge_vector(const MmbmParams& p, const Tolerances& tol) {
    return -(group_inverse(p.Q, tol) * p.mu);
}

} // namespace detail

// First passage from 0 to b.  The unknowns (L_b, P_b) satisfy
//   [L_b P_b] [[I, e^{Ub}],[e^{Uhat b}, I]] = sigma .* [-Uhat e^{Uhat b}, U]
// and at zero drift additionally [L_b P_b] [b1 + h; h] = sigma, h = -Q# mu.
inline PassageLeg passage_up(const MmbmParams& p, const GeneratorPair& g, double b,
                             const Tolerances& tol = default_tolerances()) {
    if (!(b > 0.0)) throw InvalidModel("passage_up: b must be positive");
    const Matrix E = matrix_exp(g.U * b);
    const Matrix Ehat = matrix_exp(g.Uhat * b);
    const Matrix R1 = -(p.sigma.asDiagonal() * g.Uhat * Ehat);
    const Matrix R2 = p.sigma.asDiagonal() * g.U;

    Vector w1 = Vector::Zero(p.phases()), w2 = Vector::Zero(p.phases());
    if (g.drift_class == DriftClass::zero) {
        const Vector h = detail::gauge_vector(p, tol);
        w1 = Vector::Constant(p.phases(), b) + h;
        w2 = h;
    }
    auto pair = detail::solve_boundary_pair(E, Ehat, R1, R2, w1, w2, p.sigma,
                                            g.drift_class, "passage_up", tol);
    PassageLeg leg;
    leg.L = std::move(pair.X1);
    leg.P = std::move(pair.X2);
    leg.H = detail::hit_distribution(leg.P, leg.L, "passage_up");
    leg.system_residual = pair.residual;
    leg.warnings = std::move(pair.warnings);
    return leg;
}

// First passage from b to 0; same system with the roles of U and Uhat
// exchanged and the unknowns ordered [P_hat_b L_hat_b]:
//   [P_hat L_hat] [[I, e^{Ub}],[e^{Uhat b}, I]] = sigma .* [Uhat, -U e^{Ub}]
// zero-drift completion [P_hat L_hat] [-h; b1 - h] = sigma.
inline PassageLeg passage_down(const MmbmParams& p, const GeneratorPair& g, double b,
                               const Tolerances& tol = default_tolerances()) {
    if (!(b > 0.0)) throw InvalidModel("passage_down: b must be positive");
    const Matrix E = matrix_exp(g.U * b);
    const Matrix Ehat = matrix_exp(g.Uhat * b);
    const Matrix R1 = p.sigma.asDiagonal() * g.Uhat;
    const Matrix R2 = -(p.sigma.asDiagonal() * g.U * E);

    Vector w1 = Vector::Zero(p.phases()), w2 = Vector::Zero(p.phases());
    if (g.drift_class == DriftClass::zero) {
        const Vector h = detail::gauge_vector(p, tol);
        w1 = -h;
        w2 = Vector::Constant(p.phases(), b) - h;
    }
    auto pair = detail::solve_boundary_pair(E, Ehat, R1, R2, w1, w2, p.sigma,
                                            g.drift_class, "passage_down", tol);
    PassageLeg leg;
    leg.P = std::move(pair.X1);
    leg.L = std::move(pair.X2);
    leg.H = detail::hit_distribution(leg.P, leg.L, "passage_down");
    leg.system_residual = pair.residual;
    leg.warnings = std::move(pair.warnings);
    return leg;
}

inline PassageSolution solve_passage(const MmbmParams& p, const GeneratorPair& g,
                                     double b,
                                     const Tolerances& tol = default_tolerances()) {
    PassageLeg up = passage_up(p, g, b, tol);
    PassageLeg down = passage_down(p, g, b, tol);
    PassageSolution out;
    out.b = b;
    out.L_b = std::move(up.L);
    out.P_b = std::move(up.P);
    out.H0 = std::move(up.H);
    out.L_hat_b = std::move(down.L);
    out.P_hat_b = std::move(down.P);
    out.Hb = std::move(down.H);
    out.warnings = std::move(up.warnings);
    out.warnings.insert(out.warnings.end(), down.warnings.begin(),
                        down.warnings.end());
    return out;
}

// Exit probabilities from level x in the open strip:
//   [P(x,b) P(x,0)] [[I, e^{Ub}],[e^{Uhat b}, I]] = [e^{Uhat(b-x)}, e^{Ux}]
// with zero-drift completion
//   P(x,b)((b-x)1 + h) + P(x,0)(-x1 + h) = h.
inline ExitProbabilities exit_probabilities(const MmbmParams& p,
                                            const GeneratorPair& g, double b,
                                            double x,
                                            const Tolerances& tol = default_tolerances()) {
    if (!(b > 0.0)) throw InvalidModel("exit_probabilities: b must be positive");
    if (!(x >= 0.0 && x <= b))
        throw InvalidModel("exit_probabilities: x must lie in [0, b]");
    const Matrix E = matrix_exp(g.U * b);
    const Matrix Ehat = matrix_exp(g.Uhat * b);
    const Matrix R1 = matrix_exp(g.Uhat * (b - x));
    const Matrix R2 = matrix_exp(g.U * x);

    Vector w1 = Vector::Zero(p.phases()), w2 = Vector::Zero(p.phases());
    Vector s = Vector::Zero(p.phases());
    if (g.drift_class == DriftClass::zero) {
        const Vector h = detail::gauge_vector(p, tol);
        w1 = Vector::Constant(p.phases(), b - x) + h;
        w2 = Vector::Constant(p.phases(), -x) + h;
        s = h;
    }
    auto pair = detail::solve_boundary_pair(E, Ehat, R1, R2, w1, w2, s,
                                            g.drift_class, "exit_probabilities", tol);
    return {std::move(pair.X2), std::move(pair.X1)};
}

} // namespace mmbm
