#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace mmbm;
using Catch::Approx;

namespace {

// Composite Simpson on [0, x] with 400 panels; plenty for these integrands.
Matrix quad_integral_exp(const Matrix& A, double x) {
    const int n = 400;
    const double h = x / n;
    Matrix acc = Matrix::Zero(A.rows(), A.cols());
    for (int k = 0; k < n; ++k) {
        const double a = k * h;
        acc += (matrix_exp(A * a) + 4.0 * matrix_exp(A * (a + h / 2)) +
                matrix_exp(A * (a + h))) *
               (h / 6.0);
    }
    return acc;
}

Matrix cyclic_generator(int m, double rate) {
    Matrix Q = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        Q(i, (i + 1) % m) = rate;
        Q(i, i) = -rate;
    }
    return Q;
}

} // namespace

TEST_CASE("integral of exp(Au) matches quadrature, regular branch", "[linalg]") {
    std::mt19937_64 g(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix A(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) A(i, j) = u(g);
    A -= 3.0 * Matrix::Identity(3, 3);  // push the spectrum safely left
    for (double x : {0.3, 0.7, 2.0}) {
        const Matrix F = integral_exp(A, x, false);
        REQUIRE((F - quad_integral_exp(A, x)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("integral of exp(Au) matches quadrature, singular branch", "[linalg]") {
    const Matrix Q = cyclic_generator(3, 0.7);
    for (double x : {0.5, 1.5}) {
        const Matrix F = integral_exp(Q, x, true);
        REQUIRE((F - quad_integral_exp(Q, x)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("integral_exp rejects a branch that contradicts the spectrum",
          "[linalg]") {
    const Matrix Q = cyclic_generator(3, 0.7);
    const Matrix S = Q - 2.0 * Matrix::Identity(3, 3);
    REQUIRE_THROWS_AS(integral_exp(Q, 1.0, false), NumericalFailure);
    REQUIRE_THROWS_AS(integral_exp(S, 1.0, true), NumericalFailure);
}

TEST_CASE("group inverse satisfies its defining equations", "[linalg]") {
    const Matrix Q = cyclic_generator(8, 0.1);
    const Matrix Qs = group_inverse(Q);
    const RowVector alpha = stationary_vector(Q);
    const Matrix I = Matrix::Identity(8, 8);
    REQUIRE((Qs * Q + Vector::Ones(8) * alpha - I).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((Q * Qs - Qs * Q).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((Qs * Vector::Ones(8)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stationary vector of the cyclic generator is uniform", "[linalg]") {
    const RowVector alpha = stationary_vector(cyclic_generator(8, 0.1));
    REQUIRE((alpha.array() - 0.125).abs().maxCoeff() < 1e-12);
}

TEST_CASE("stationary vector of a random generator", "[linalg]") {
    std::mt19937_64 g(5);
    const MmbmParams p = helpers::random_params(g, 6);
    const RowVector alpha = stationary_vector(p.Q);
    REQUIRE((alpha * p.Q).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(alpha.sum() == Approx(1.0).margin(1e-13));
    REQUIRE(alpha.minCoeff() > 0.0);
}

TEST_CASE("null vectors of a generator", "[linalg]") {
    const Matrix Q = cyclic_generator(5, 0.3);
    const NullPair n = null_vectors(Q);
    REQUIRE((Q * n.v).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((n.u * Q).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(n.u.dot(n.v) == Approx(1.0).margin(1e-12));
}

TEST_CASE("Sylvester solver on disjoint spectra", "[linalg]") {
    std::mt19937_64 g(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix A(4, 4), B(3, 3), C(4, 3);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) A(i, j) = u(g);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) B(i, j) = u(g);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) C(i, j) = u(g);
    A -= 4.0 * Matrix::Identity(4, 4);
    B += 4.0 * Matrix::Identity(3, 3);
    const Matrix X = solve_sylvester(A, B, C);
    REQUIRE((A * X + X * B - C).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("Sylvester solver rejects overlapping spectra", "[linalg]") {
    const Matrix A = Matrix::Identity(2, 2);
    const Matrix B = -Matrix::Identity(2, 2);
    REQUIRE_THROWS_AS(solve_sylvester(A, B, Matrix::Ones(2, 2)),
                      NumericalFailure);
}

TEST_CASE("left Perron vector of a stochastic matrix", "[linalg]") {
    std::mt19937_64 g(23);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    Matrix P(5, 5);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) P(i, j) = u(g);
        P.row(i) /= P.row(i).sum();
    }
    const RowVector nu = perron_left(P);
    REQUIRE((nu * P - nu).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(nu.sum() == Approx(1.0).margin(1e-12));
    REQUIRE(nu.minCoeff() > 0.0);
}

TEST_CASE("strong connectivity detection", "[linalg]") {
    REQUIRE(strongly_connected(cyclic_generator(4, 0.2)));
    Matrix Q = Matrix::Zero(4, 4);
    Q.topLeftCorner(2, 2) = cyclic_generator(2, 0.2);
    Q.bottomRightCorner(2, 2) = cyclic_generator(2, 0.2);
    REQUIRE_FALSE(strongly_connected(Q));
    // one-way bridge: reachable forward, not backward
    Q(1, 2) = 0.1;
    Q(1, 1) -= 0.1;
    REQUIRE_FALSE(strongly_connected(Q));
}

TEST_CASE("matrix exponential of a generator is stochastic", "[linalg]") {
    const Matrix E = matrix_exp(cyclic_generator(6, 0.4) * 2.5);
    REQUIRE((E * Vector::Ones(6) - Vector::Ones(6)).cwiseAbs().maxCoeff() <
            1e-12);
    REQUIRE(E.minCoeff() >= 0.0);
}
