#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace mmbm;
using Catch::Approx;

namespace {

// Residual of the defining equation D_s2 X^2 + 2 D_mu X + 2Q (+ kill term),
// scaled by the free coefficient.
double equation_residual(const MmbmParams& p, const Matrix& X,
                         const Vector& kill = Vector()) {
    const Matrix s2 = p.variance().asDiagonal();
    const Matrix dm = p.mu.asDiagonal();
    Matrix A0 = 2.0 * p.Q;
    if (kill.size() > 0) A0 -= 2.0 * Matrix(kill.asDiagonal());
    const Matrix R = s2 * X * X + 2.0 * dm * X + A0;
    return inf_norm(R) / std::max(1.0, inf_norm(A0));
}

} // namespace

TEST_CASE("single-phase roots, negative drift", "[quadratic]") {
    const GeneratorPair g = solve_pair(helpers::scalar_params(-1.0, 10.0));
    REQUIRE(g.drift == Approx(-1.0));
    REQUIRE(g.drift_class == DriftClass::negative);
    REQUIRE(g.U(0, 0) == Approx(0.0).margin(1e-14));
    REQUIRE(g.Uhat(0, 0) == Approx(-0.2).margin(1e-12));
}

TEST_CASE("single-phase roots, positive drift", "[quadratic]") {
    const GeneratorPair g = solve_pair(helpers::scalar_params(1.0, 10.0));
    REQUIRE(g.drift_class == DriftClass::positive);
    REQUIRE(g.U(0, 0) == Approx(-0.2).margin(1e-12));
    REQUIRE(g.Uhat(0, 0) == Approx(0.0).margin(1e-14));
}

TEST_CASE("single-phase roots, exact zero drift", "[quadratic]") {
    const GeneratorPair g = solve_pair(helpers::scalar_params(0.0, 2.0));
    REQUIRE(g.drift_class == DriftClass::zero);
    REQUIRE(g.zero_roots == 2);
    REQUIRE(g.U(0, 0) == 0.0);
    REQUIRE(g.Uhat(0, 0) == 0.0);
}

TEST_CASE("killed single phase matches the scalar quadratic", "[quadratic]") {
    // 10 x^2 - 2 x - 1 = 0 has roots (2 +- sqrt(44)) / 20.
    QuadraticOptions opts;
    opts.kill = Vector::Constant(1, 0.5);
    const GeneratorPair g = solve_pair(helpers::scalar_params(-1.0, 10.0),
                                       default_tolerances(), opts);
    const double root_minus = (2.0 - std::sqrt(44.0)) / 20.0;
    const double root_plus = (2.0 + std::sqrt(44.0)) / 20.0;
    REQUIRE(g.zero_roots == 0);
    REQUIRE(g.U(0, 0) == Approx(root_minus).margin(1e-12));
    REQUIRE(g.Uhat(0, 0) == Approx(-root_plus).margin(1e-12));
}

TEST_CASE("killing rates must be strictly positive everywhere", "[quadratic]") {
    QuadraticOptions opts;
    opts.kill = (Vector(2) << 0.5, 0.0).finished();
    MmbmParams p;
    p.Q = (Matrix(2, 2) << -1.0, 1.0, 1.0, -1.0).finished();
    p.mu = (Vector(2) << -1.0, 1.0).finished();
    p.sigma = Vector::Ones(2);
    REQUIRE_THROWS_AS(solve_pair(p, default_tolerances(), opts), InvalidModel);
}

TEST_CASE("generator pair residuals on the bundled models", "[quadratic]") {
    for (const MmbmParams& p :
         {helpers::scalar_params(-1.0, 10.0), helpers::cyclic8_params(),
          helpers::video_params()}) {
        const GeneratorPair g = solve_pair(p);
        REQUIRE(equation_residual(p, g.U) < 1e-10);
        REQUIRE(equation_residual(p, -g.Uhat) < 1e-10);
    }
}

TEST_CASE("drift trichotomy row sums on a random corpus", "[quadratic]") {
    std::mt19937_64 gen(101);
    int negatives = 0, positives = 0;
    for (int t = 0; t < 60; ++t) {
        const MmbmParams p = helpers::random_params(gen);
        const GeneratorPair g = solve_pair(p);
        REQUIRE(equation_residual(p, g.U) < 1e-8);
        REQUIRE(equation_residual(p, -g.Uhat) < 1e-8);
        const Vector ru = g.U.rowwise().sum();
        const Vector rh = g.Uhat.rowwise().sum();
        if (g.drift_class == DriftClass::negative) {
            ++negatives;
            REQUIRE(ru.cwiseAbs().maxCoeff() < 1e-7);
            REQUIRE(rh.maxCoeff() < 1e-10);   // substochastic side
            REQUIRE(rh.minCoeff() < -1e-10);  // and strictly so somewhere
        } else {
            ++positives;
            REQUIRE(g.drift_class == DriftClass::positive);
            REQUIRE(rh.cwiseAbs().maxCoeff() < 1e-7);
            REQUIRE(ru.maxCoeff() < 1e-10);
            REQUIRE(ru.minCoeff() < -1e-10);
        }
    }
    REQUIRE(negatives > 5);
    REQUIRE(positives > 5);
}

TEST_CASE("exact zero drift pins both structural roots", "[quadratic]") {
    std::mt19937_64 gen(202);
    for (int t = 0; t < 10; ++t) {
        const MmbmParams p = helpers::zero_drift_params(gen);
        const GeneratorPair g = solve_pair(p);
        REQUIRE(g.drift_class == DriftClass::zero);
        REQUIRE(g.zero_roots == 2);
        REQUIRE(equation_residual(p, g.U) < 1e-8);
        REQUIRE(equation_residual(p, -g.Uhat) < 1e-8);
        REQUIRE(g.U.rowwise().sum().cwiseAbs().maxCoeff() < 1e-7);
        REQUIRE(g.Uhat.rowwise().sum().cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("level reversal swaps the two solutions", "[quadratic]") {
    std::mt19937_64 gen(303);
    for (int t = 0; t < 10; ++t) {
        const MmbmParams p = helpers::random_params(gen, 5);
        const GeneratorPair g = solve_pair(p);
        const GeneratorPair r = solve_pair(reverse_levels(p));
        REQUIRE((r.U - g.Uhat).cwiseAbs().maxCoeff() <
                1e-7 * std::max(1.0, inf_norm(g.Uhat)));
        REQUIRE((r.Uhat - g.U).cwiseAbs().maxCoeff() <
                1e-7 * std::max(1.0, inf_norm(g.U)));
    }
}

TEST_CASE("tiny but non-structural drift is refused, not misclassified",
          "[quadratic]") {
    // |alpha . mu| = 5e-10 sits between the structural-root threshold and the
    // spectral split, where neither branch can be certified.
    const MmbmParams p = helpers::scalar_params(-5e-10, 2.0);
    REQUIRE_THROWS_AS(solve_pair(p), NumericalFailure);
}

TEST_CASE("Newton refinement changes nothing on a healthy model",
          "[quadratic]") {
    QuadraticOptions opts;
    opts.newton_refine = true;
    const MmbmParams p = helpers::cyclic8_params();
    const GeneratorPair a = solve_pair(p);
    const GeneratorPair b = solve_pair(p, default_tolerances(), opts);
    REQUIRE((a.U - b.U).cwiseAbs().maxCoeff() < 1e-9);
    REQUIRE((a.Uhat - b.Uhat).cwiseAbs().maxCoeff() < 1e-9);
}
