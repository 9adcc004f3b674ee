#pragma once

#include "linalg.hpp"
#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace mmbm {

// Extremal solutions of  diag(sigma^2) X^2 + 2 diag(mu) X + 2(Q - diag(r)) = 0.
// U is the minimal solution; -Uhat is the maximal one.  Both U and Uhat have
// their spectra in the closed left half-plane and act as (sub)generators of
// the phase process observed at up/down record epochs.
struct GeneratorPair {
    Matrix U;
    Matrix Uhat;
    double drift = 0.0;
    DriftClass drift_class = DriftClass::negative;
    int zero_roots = 0;  // structural roots pinned at 0: 2 at zero drift, 1 otherwise, 0 killed
    double residual_U = 0.0;
    double residual_Uhat = 0.0;
};

struct QuadraticOptions {
    // Killing rates; empty means none.  When present every entry must be
    // strictly positive, which keeps all 2m pencil roots off the imaginary
    // axis and the split unambiguous.
    Vector kill;
    // Newton iteration on the defining equation, used when the eigenvector
    // basis of the companion pencil is too ill-conditioned to trust.
    bool newton_refine = false;
};

inline double inf_norm(const Matrix& A) {
    return A.cwiseAbs().rowwise().sum().maxCoeff();
}

namespace detail {

// One Newton sweep for R(X) = A2 X^2 + A1 X + A0: the correction H solves
// (X + A2^{-1} A1) H + H X = -A2^{-1} R(X).
inline Matrix newton_solve_quadratic(Matrix X, const Vector& s2, const Vector& mu,
                                     const Matrix& A0, double stop,
                                     const Tolerances& tol) {
    const Matrix A2inv_A1 = (2.0 * mu.cwiseQuotient(s2)).asDiagonal();
    for (int it = 0; it < tol.max_iterations; ++it) {
        Matrix R = s2.asDiagonal() * (X * X) + (2.0 * mu).asDiagonal() * X + A0;
        if (inf_norm(R) <= stop) return X;
        Matrix rhs = -(R.array().colwise() / s2.array()).matrix();
        X += solve_sylvester(X + A2inv_A1, X, rhs);
    }
    throw NumericalFailure("solve_pair: Newton refinement did not reach the "
                           "residual tolerance");
}

} // namespace detail

inline GeneratorPair solve_pair(const MmbmParams& p,
                                const Tolerances& tol = default_tolerances(),
                                const QuadraticOptions& opts = {}) {
    p.validate(tol);
    const Eigen::Index m = p.phases();
    const bool killed = opts.kill.size() > 0;
    if (killed) {
        if (opts.kill.size() != m)
            throw InvalidModel("solve_pair: kill rate vector has wrong length");
        if (opts.kill.minCoeff() <= 0.0)
            throw InvalidModel("solve_pair: the killed variant requires strictly "
                               "positive rates in every phase");
    }

    const Vector s2 = p.variance();
    Matrix A0 = 2.0 * p.Q;
    if (killed) A0.diagonal() -= 2.0 * opts.kill;

    // Companion linearization: pencil roots are the eigenvalues of
    //   [ 0               I            ]
    //   [ -A2^{-1} A0     -A2^{-1} A1  ]
    // with eigenvectors stacked as [x; z x].
    Matrix C = Matrix::Zero(2 * m, 2 * m);
    C.topRightCorner(m, m) = Matrix::Identity(m, m);
    C.bottomLeftCorner(m, m) = -(A0.array().colwise() / s2.array()).matrix();
    C.bottomRightCorner(m, m) = (-2.0 * p.mu.cwiseQuotient(s2)).asDiagonal();

    Eigen::EigenSolver<Matrix> es(C);
    if (es.info() != Eigen::Success)
        throw NumericalFailure("solve_pair: companion eigen decomposition failed");
    const ComplexVector z = es.eigenvalues();
    const ComplexMatrix top = es.eigenvectors().topRows(m);

    const double drift = mean_drift(p, tol);
    const DriftClass dclass = classify_drift(drift, tol);

    // The pencil always has an exact root at 0 when r = 0 (Q 1 = 0); a second
    // root sits at 0 exactly when the mean drift vanishes.  That second root
    // may only be pinned when the drift is small enough that forcing it to
    // zero stays below the residual tolerance; in between the model is
    // rejected rather than silently misclassified.
    constexpr double structural_drift = 1e-10;
    const int n_zero = killed ? 0 : (std::abs(drift) < structural_drift ? 2 : 1);

    std::vector<Eigen::Index> order(static_cast<size_t>(2 * m));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(z(a)) < std::abs(z(b));
    });

    const double zscale = std::max(1.0, std::abs(z(order.back())));
    std::vector<Eigen::Index> left, right;
    std::vector<char> structural(static_cast<size_t>(2 * m), 0);
    for (int k = 0; k < n_zero; ++k) {
        const Eigen::Index i = order[static_cast<size_t>(k)];
        if (std::abs(z(i)) > 1e-6 * zscale)
            throw NumericalFailure("solve_pair: expected structural zero root, "
                                   "smallest pencil root has modulus " +
                                   std::to_string(std::abs(z(i))));
        structural[static_cast<size_t>(i)] = 1;
        if (n_zero == 2)
            (k == 0 ? left : right).push_back(i);
        else
            (drift < 0.0 ? left : right).push_back(i);
    }
    for (Eigen::Index i = 0; i < 2 * m; ++i) {
        if (structural[static_cast<size_t>(i)]) continue;
        const double re = z(i).real();
        if (re < -tol.eigen_split)
            left.push_back(i);
        else if (re > tol.eigen_split)
            right.push_back(i);
        else
            throw NumericalFailure("solve_pair: pencil root " + std::to_string(re) +
                                   (std::abs(z(i).imag()) > 0 ? " + i*" + std::to_string(z(i).imag()) : "") +
                                   " lies on the imaginary axis and is not one of "
                                   "the structural zeros");
    }
    if (left.size() != static_cast<size_t>(m) || right.size() != static_cast<size_t>(m))
        throw NumericalFailure("solve_pair: root split " + std::to_string(left.size()) +
                               "/" + std::to_string(right.size()) + ", expected " +
                               std::to_string(m) + " per side");

    // Reconstruct one solution from the selected roots.  Structural zeros get
    // the exact eigenvector 1 (A0 1 = 0 whenever r = 0).
    auto build = [&](const std::vector<Eigen::Index>& sel, const char* side) {
        ComplexMatrix V(m, m);
        ComplexVector d(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            const Eigen::Index i = sel[static_cast<size_t>(k)];
            if (structural[static_cast<size_t>(i)]) {
                V.col(k) = ComplexVector::Ones(m);
                d(k) = 0.0;
            } else {
                V.col(k) = top.col(i) / top.col(i).norm();
                d(k) = z(i);
            }
        }
        Eigen::JacobiSVD<ComplexMatrix> svd(V);
        const double cond = svd.singularValues()(0) / svd.singularValues()(m - 1);
        Matrix X;
        bool trusted = cond <= 1e12;
        if (trusted) {
            ComplexMatrix VD = V * d.asDiagonal();
            X = real_part(V.transpose().partialPivLu().solve(VD.transpose()).transpose(),
                          std::string("solve_pair(") + side + ")");
        } else if (!opts.newton_refine) {
            throw NumericalFailure(std::string("solve_pair: eigenvector basis for ") +
                                   side + " has condition number " + std::to_string(cond) +
                                   "; enable newton_refine to iterate on the "
                                   "defining equation instead");
        } else {
            X = d.real().asDiagonal();  // eigenvalue estimates as the starting point
        }
        return std::pair<Matrix, bool>(X, trusted);
    };

    const double scale = std::max(1.0, inf_norm(A0));
    auto [U, u_ok] = build(left, "U");
    auto [negUhat, h_ok] = build(right, "Uhat");
    if (!u_ok)
        U = detail::newton_solve_quadratic(U, s2, p.mu, A0, 0.1 * 1e-8 * scale, tol);
    if (!h_ok)
        negUhat = detail::newton_solve_quadratic(negUhat, s2, p.mu, A0, 0.1 * 1e-8 * scale, tol);

    Matrix Uhat = -negUhat;
    auto residual = [&](const Matrix& X) {
        return inf_norm(s2.asDiagonal() * (X * X) + (2.0 * p.mu).asDiagonal() * X + A0);
    };
    GeneratorPair out;
    out.residual_U = residual(U);
    out.residual_Uhat = residual(-Uhat);
    if (out.residual_U > 1e-8 * scale || out.residual_Uhat > 1e-8 * scale)
        throw NumericalFailure("solve_pair: residuals " + std::to_string(out.residual_U) +
                               ", " + std::to_string(out.residual_Uhat) +
                               " exceed tolerance");
    out.U = std::move(U);
    out.Uhat = std::move(Uhat);
    out.drift = drift;
    out.drift_class = dclass;
    out.zero_roots = n_zero;
    return out;
}

} // namespace mmbm
