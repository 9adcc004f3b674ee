#pragma once

// Model builders shared by the unit and acceptance suites.  Kept free of any
// test-framework includes so the acceptance binary can use them too.

#include <mmbm/mmbm.hpp>

#include <random>

namespace helpers {

using namespace mmbm;

inline MmbmParams scalar_params(double mu, double s2) {
    MmbmParams p;
    p.Q = Matrix::Zero(1, 1);
    p.mu = Vector::Constant(1, mu);
    p.sigma = Vector::Constant(1, std::sqrt(s2));
    return p;
}

inline FlexibleModel scalar_model(double mu_u, double s2_u, double mu_d,
                                  double s2_d, double b) {
    FlexibleModel m;
    m.b = b;
    m.up = scalar_params(mu_u, s2_u);
    m.down = scalar_params(mu_d, s2_d);
    m.switch_at_top = Matrix::Ones(1, 1);
    m.switch_at_bottom = Matrix::Ones(1, 1);
    return m;
}

// Three single-phase cases: same up leg, down leg (mu, s2) =
// (-1,10), (-10,10), (-1,1).
inline FlexibleModel bm_case(int c) {
    const double mu_d = c == 2 ? -10.0 : -1.0;
    const double s2_d = c == 3 ? 1.0 : 10.0;
    return scalar_model(-1.0, 10.0, mu_d, s2_d, 4.0);
}

// 8 phases cycling at rate 0.1, drift -1 everywhere, high volatility in the
// last phase.
inline MmbmParams cyclic8_params(double mu_all = -1.0) {
    MmbmParams p;
    p.Q = Matrix::Zero(8, 8);
    for (int i = 0; i < 8; ++i) {
        p.Q(i, (i + 1) % 8) = 0.1;
        p.Q(i, i) = -0.1;
    }
    p.mu = Vector::Constant(8, mu_all);
    p.sigma = Vector::Ones(8);
    p.sigma(7) = 10.0;
    return p;
}

inline FlexibleModel cyclic_case(int c) {
    FlexibleModel m;
    m.b = 20.0;
    m.up = cyclic8_params();
    m.down = cyclic8_params(c == 3 ? -10.0 : -1.0);
    m.switch_at_top = Matrix::Identity(8, 8);
    m.switch_at_bottom = Matrix::Identity(8, 8);
    return m;
}

// 5-state video streaming model: buffering (1,3), playing (2,4),
// finishing (5).  beta_scale = 10 speeds the stage cycling up tenfold.
inline MmbmParams video_params(double beta_scale = 1.0, double s2_scale = 1.0) {
    const double a = 1.0 / 60.0;
    const double bB = 0.1 * beta_scale, bP = 0.03 * beta_scale,
                 bF = 0.1 * beta_scale;
    MmbmParams p;
    p.Q = Matrix::Zero(5, 5);
    p.Q(0, 1) = bB;
    p.Q(0, 2) = a;
    p.Q(1, 3) = a;
    p.Q(1, 4) = bP;
    p.Q(2, 0) = a;
    p.Q(2, 3) = bB;
    p.Q(3, 1) = a;
    p.Q(3, 4) = bP;
    p.Q(4, 0) = bF * 0.5;
    p.Q(4, 2) = bF * 0.5;
    for (int i = 0; i < 5; ++i) p.Q(i, i) = -p.Q.row(i).sum();
    const double dL = 0.25, dH = 0.625, dec = 0.5, gL = 0.25, gH = 0.625,
                 g = 0.5;
    p.mu = (Vector(5) << dL, dL - dec, dH, dH - dec, -dec).finished();
    p.sigma = (Vector(5) << gL, gL + g, gH, gH + g, g)
                  .finished()
                  .cwiseSqrt() *
              std::sqrt(s2_scale);
    return p;
}

inline FlexibleModel video_case(int c) {
    FlexibleModel m;
    m.b = 1.0;
    m.up = video_params();
    m.down = video_params(c == 4 ? 10.0 : 1.0, c == 3 ? 0.01 : 1.0);
    m.switch_at_top = c == 2 ? Matrix(Matrix::Constant(5, 5, 0.2))
                             : Matrix(Matrix::Identity(5, 5));
    m.switch_at_bottom = m.switch_at_top;
    return m;
}

// Like random_params below but with |mu|/sigma^2 kept moderate.  Passage
// solves invert the boundary block P, whose rows scale like exp(Uhat b); wild
// drift-to-variance ratios push cond(P) past the solver's 1e12 guard for
// b >= 1, which is a documented refusal, not a bug.  Corpus tests that build
// passage legs draw from here.
inline MmbmParams mild_params(std::mt19937_64& g, int max_m = 8) {
    std::uniform_int_distribution<int> md(1, max_m);
    std::uniform_real_distribution<double> rate(0.05, 2.0);
    std::uniform_real_distribution<double> drift(-1.2, 1.2);
    std::uniform_real_distribution<double> vol(0.7, 1.8);
    const int m = md(g);
    MmbmParams p;
    p.Q = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j)
            if (i != j) p.Q(i, j) = rate(g);
        p.Q(i, i) = -p.Q.row(i).sum() + p.Q(i, i);
    }
    p.mu = Vector::NullaryExpr(m, [&](Eigen::Index) { return drift(g); });
    p.sigma = Vector::NullaryExpr(m, [&](Eigen::Index) { return vol(g); });
    return p;
}

// Dense random generator with uniform(0.05, 2) off-diagonal rates: strongly
// connected for every m >= 1.
inline MmbmParams random_params(std::mt19937_64& g, int max_m = 8) {
    std::uniform_int_distribution<int> md(1, max_m);
    std::uniform_real_distribution<double> rate(0.05, 2.0);
    std::uniform_real_distribution<double> drift(-3.0, 3.0);
    std::uniform_real_distribution<double> vol(0.3, 3.0);
    const int m = md(g);
    MmbmParams p;
    p.Q = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j)
            if (i != j) p.Q(i, j) = rate(g);
        p.Q(i, i) = -p.Q.row(i).sum() + p.Q(i, i);
    }
    p.mu = Vector::NullaryExpr(m, [&](Eigen::Index) { return drift(g); });
    p.sigma = Vector::NullaryExpr(m, [&](Eigen::Index) { return vol(g); });
    return p;
}

// Shift mu so that alpha . mu vanishes to rounding error.
inline MmbmParams zero_drift_params(std::mt19937_64& g, int max_m = 8) {
    MmbmParams p = random_params(g, max_m);
    const RowVector alpha = stationary_vector(p.Q);
    p.mu.array() -= alpha.dot(p.mu);
    return p;
}

} // namespace helpers
