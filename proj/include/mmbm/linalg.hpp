#pragma once

#include "types.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

namespace mmbm {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RowVector = Eigen::RowVectorXd;

inline Matrix matrix_exp(const Matrix& A) {
    return A.exp();
}

// Re(M), guarding that the imaginary part is numerical noise.  Everything in
// this library is real; complex intermediates come only from eigen/Schur
// decompositions of real matrices.
inline Matrix real_part(const ComplexMatrix& M, const std::string& context,
                        double rel = 1e-8) {
    const double re = M.real().norm();
    const double im = M.imag().norm();
    if (im > rel * std::max(re, 1.0))
        throw NumericalFailure(context + ": imaginary residue " + std::to_string(im) +
                               " exceeds " + std::to_string(rel) + " * scale");
    return M.real();
}

// Rotates an eigenvector column so its largest entry is real positive, which
// makes the real-part extraction stable when the eigenvalue is real.
inline ComplexVector align_phase(const ComplexVector& c) {
    Eigen::Index k = 0;
    c.cwiseAbs().maxCoeff(&k);
    const std::complex<double> pivot = c(k);
    if (std::abs(pivot) == 0.0) return c;
    return c * (std::conj(pivot) / std::abs(pivot));
}

// Right and left null vectors of a matrix whose zero eigenvalue is simple,
// scaled so that |v|_2 = 1 and u.v = 1.  v*u is then the spectral projector
// onto the null space.
struct NullPair {
    Vector v;
    RowVector u;
};

inline NullPair null_vectors(const Matrix& A,
                             const Tolerances& tol = default_tolerances()) {
    const Eigen::Index m = A.rows();
    Eigen::EigenSolver<Matrix> right(A);
    Eigen::EigenSolver<Matrix> left(A.transpose());
    if (right.info() != Eigen::Success || left.info() != Eigen::Success)
        throw NumericalFailure("null_vectors: eigen decomposition failed");

    auto smallest = [m](const Eigen::EigenSolver<Matrix>& es) {
        Eigen::Index best = 0;
        double bestabs = std::abs(es.eigenvalues()(0));
        for (Eigen::Index i = 1; i < m; ++i) {
            const double a = std::abs(es.eigenvalues()(i));
            if (a < bestabs) { bestabs = a; best = i; }
        }
        return best;
    };

    Vector v = real_part(align_phase(right.eigenvectors().col(smallest(right))),
                         "null_vectors(right)");
    RowVector u = real_part(align_phase(left.eigenvectors().col(smallest(left))),
                            "null_vectors(left)")
                      .transpose();
    v.normalize();
    u.normalize();
    const double s = u.dot(v);
    if (std::abs(s) < tol.singular_null)
        throw NumericalFailure("null_vectors: left/right null vectors nearly "
                               "orthogonal (|u.v| = " + std::to_string(std::abs(s)) +
                               "); zero eigenvalue is defective or not simple");
    u /= s;
    return {v, u};
}

// Group inverse of a matrix with a simple zero eigenvalue:
//   A# = (A + v u)^{-1} - v u,  with v u the spectral projector at zero.
// For an irreducible generator Q this is the unique X with
//   X Q = Q X = I - 1 alpha,  X 1 = 0.
inline Matrix group_inverse(const Matrix& A,
                            const Tolerances& tol = default_tolerances()) {
    const Eigen::Index m = A.rows();
    const NullPair np = null_vectors(A, tol);
    const Matrix P = np.v * np.u;
    const Matrix X = (A + P).inverse() - P;
    const Matrix I = Matrix::Identity(m, m);
    const double scale = std::max(1.0, A.norm());
    if ((X * A - (I - P)).norm() > 1e3 * tol.residual * scale ||
        (A * X - (I - P)).norm() > 1e3 * tol.residual * scale)
        throw NumericalFailure("group_inverse: defining equations violated");
    return X;
}

// Strong connectivity of the directed graph with an edge i -> j whenever
// Q(i,j) > 0, i != j.  Irreducibility of the generator in graph form.
inline bool strongly_connected(const Matrix& Q) {
    const Eigen::Index m = Q.rows();
    auto reach_all = [m](auto&& edge) {
        std::vector<char> seen(static_cast<size_t>(m), 0);
        std::vector<Eigen::Index> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const Eigen::Index i = stack.back();
            stack.pop_back();
            for (Eigen::Index j = 0; j < m; ++j)
                if (!seen[static_cast<size_t>(j)] && edge(i, j)) {
                    seen[static_cast<size_t>(j)] = 1;
                    stack.push_back(j);
                }
        }
        return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    };
    return reach_all([&](Eigen::Index i, Eigen::Index j) { return i != j && Q(i, j) > 0.0; }) &&
           reach_all([&](Eigen::Index i, Eigen::Index j) { return i != j && Q(j, i) > 0.0; });
}

// Stationary probability row vector of an irreducible generator, via the
// bordered system [Q^T 1; 1^T 0] [x; s] = [0; 1].
inline RowVector stationary_vector(const Matrix& Q,
                                   const Tolerances& tol = default_tolerances()) {
    const Eigen::Index m = Q.rows();
    if (Q.cols() != m) throw InvalidModel("stationary_vector: Q not square");
    if (!strongly_connected(Q))
        throw InvalidModel("stationary_vector: generator is reducible; "
                           "stationary vector is not unique");
    Matrix M(m + 1, m + 1);
    M.topLeftCorner(m, m) = Q.transpose();
    M.topRightCorner(m, 1) = Vector::Ones(m);
    M.bottomLeftCorner(1, m) = RowVector::Ones(m);
    M(m, m) = 0.0;
    Vector rhs = Vector::Zero(m + 1);
    rhs(m) = 1.0;
    Vector x = M.fullPivLu().solve(rhs).head(m);
    if (x.minCoeff() < -1e-9)
        throw NumericalFailure("stationary_vector: negative component " +
                               std::to_string(x.minCoeff()));
    x = x.cwiseMax(0.0);
    x /= x.sum();
    RowVector alpha = x.transpose();
    if ((alpha * Q).norm() > tol.residual * std::max(1.0, Q.norm()) * 1e2)
        throw NumericalFailure("stationary_vector: residual alpha*Q too large");
    return alpha;
}

// F(A; x) = int_0^x exp(A u) du.
//
// The caller must state whether A is singular: the two regimes need different
// formulas, and inferring the branch from a rank estimate misclassifies the
// near-zero-drift models this library cares most about.
//   regular:   A^{-1} (e^{Ax} - I)
//   singular:  -A# (I - e^{Ax}) + x v u   (simple zero eigenvalue)
inline Matrix integral_exp(const Matrix& A, double x, bool singular,
                           const Tolerances& tol = default_tolerances()) {
    if (!(x >= 0.0)) throw InvalidModel("integral_exp: x must be >= 0");
    const Eigen::Index m = A.rows();
    const Matrix I = Matrix::Identity(m, m);
    const Matrix E = matrix_exp(A * x);

    Eigen::JacobiSVD<Matrix> svd(A);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(m - 1);
    if (!singular) {
        if (smin < 1e-10 * smax)
            throw NumericalFailure("integral_exp: regular branch requested but "
                                   "matrix is numerically singular (smin/smax = " +
                                   std::to_string(smin / smax) + ")");
        return A.partialPivLu().solve(E - I);
    }
    if (smin > 1e-6 * std::max(smax, 1.0))
        throw NumericalFailure("integral_exp: singular branch requested for a "
                               "well-conditioned matrix (smin/smax = " +
                               std::to_string(smin / smax) + ")");
    const NullPair np = null_vectors(A, tol);
    const Matrix P = np.v * np.u;
    const Matrix Ash = (A + P).inverse() - P;
    return -Ash * (I - E) + x * P;
}

// Solves A X + X B = C.  Requires spec(A) and spec(-B) disjoint.
inline Matrix solve_sylvester(const Matrix& A, const Matrix& B, const Matrix& C) {
    using Cplx = std::complex<double>;
    const Eigen::Index m = A.rows();
    const Eigen::Index n = B.rows();
    Eigen::ComplexSchur<ComplexMatrix> sa(A.cast<Cplx>());
    Eigen::ComplexSchur<ComplexMatrix> sb(B.cast<Cplx>());
    if (sa.info() != Eigen::Success || sb.info() != Eigen::Success)
        throw NumericalFailure("solve_sylvester: Schur decomposition failed");
    const ComplexMatrix& Ta = sa.matrixT();
    const ComplexMatrix& Tb = sb.matrixT();
    const ComplexMatrix& Ua = sa.matrixU();
    const ComplexMatrix& Ub = sb.matrixU();

    const double scale = std::max(1.0, std::max(A.norm(), B.norm()));
    ComplexMatrix F = Ua.adjoint() * C.cast<Cplx>() * Ub;
    ComplexMatrix Y(m, n);
    ComplexMatrix M = Ta;
    for (Eigen::Index j = 0; j < n; ++j) {
        ComplexVector rhs = F.col(j);
        if (j > 0) rhs -= Y.leftCols(j) * Tb.col(j).head(j);
        M.diagonal() = Ta.diagonal().array() + Tb(j, j);
        for (Eigen::Index i = 0; i < m; ++i)
            if (std::abs(M(i, i)) < 1e-13 * scale)
                throw NumericalFailure("solve_sylvester: spectra of A and -B overlap");
        Y.col(j) = M.triangularView<Eigen::Upper>().solve(rhs);
    }
    return real_part(Ua * Y * Ub.adjoint(), "solve_sylvester");
}

// Left Perron vector of an irreducible nonnegative matrix, normalised to a
// probability vector.  Dense eigensolve first; power iteration fallback when
// the dense route returns a sign-mixed vector.
inline RowVector perron_left(const Matrix& M,
                             const Tolerances& tol = default_tolerances()) {
    const Eigen::Index m = M.rows();
    if (M.minCoeff() < -1e-12)
        throw InvalidModel("perron_left: matrix has negative entries");

    Eigen::EigenSolver<Matrix> es(M.transpose());
    if (es.info() == Eigen::Success) {
        Eigen::Index best = 0;
        double bestabs = std::abs(es.eigenvalues()(0));
        for (Eigen::Index i = 1; i < m; ++i) {
            const double a = std::abs(es.eigenvalues()(i));
            if (a > bestabs) { bestabs = a; best = i; }
        }
        ComplexVector c = align_phase(es.eigenvectors().col(best));
        if (c.imag().norm() <= 1e-8 * std::max(1.0, c.real().norm())) {
            Vector w = c.real();
            if (w.sum() < 0.0) w = -w;
            if (w.minCoeff() > -1e-10) {
                w = w.cwiseMax(0.0);
                RowVector nu = w.transpose() / w.sum();
                return nu;
            }
        }
    }

    RowVector nu = RowVector::Constant(m, 1.0 / static_cast<double>(m));
    for (int it = 0; it < 100000; ++it) {
        RowVector next = nu * M;
        const double s = next.sum();
        if (s <= 0.0)
            throw NumericalFailure("perron_left: power iteration collapsed");
        next /= s;
        if ((next - nu).norm() < 1e-12) return next;
        nu = next;
    }
    (void)tol;
    throw NumericalFailure("perron_left: power iteration did not converge");
}

} // namespace mmbm
