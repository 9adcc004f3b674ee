#pragma once

#include "linalg.hpp"
#include "types.hpp"

#include <cmath>
#include <string>

namespace mmbm {

// One Markov-modulated Brownian motion: phase generator Q, per-phase drift
// mu and volatility sigma (sigma_i > 0 throughout; purely fluid phases are
// out of scope).
struct MmbmParams {
    Matrix Q;
    Vector mu;
    Vector sigma;

    Eigen::Index phases() const { return Q.rows(); }

    Vector variance() const { return sigma.cwiseProduct(sigma); }

    void validate(const Tolerances& tol = default_tolerances()) const {
        const Eigen::Index m = Q.rows();
        if (m == 0 || Q.cols() != m)
            throw InvalidModel("model: Q must be square and non-empty");
        if (mu.size() != m || sigma.size() != m)
            throw InvalidModel("model: mu and sigma must have one entry per phase");
        const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = 0; j < m; ++j)
                if (i != j && Q(i, j) < -1e-12 * scale)
                    throw InvalidModel("model: negative off-diagonal rate Q(" +
                                       std::to_string(i) + "," + std::to_string(j) + ")");
            if (std::abs(Q.row(i).sum()) > 1e-10 * scale)
                throw InvalidModel("model: row " + std::to_string(i) +
                                   " of Q does not sum to zero");
            if (!(sigma(i) > 0.0))
                throw InvalidModel("model: sigma must be strictly positive in "
                                   "every phase");
        }
        if (m > 1 && !strongly_connected(Q))
            throw InvalidModel("model: Q is reducible");
    }
};

enum class DriftClass { negative, zero, positive };

inline double mean_drift(const MmbmParams& p,
                         const Tolerances& tol = default_tolerances()) {
    return stationary_vector(p.Q, tol).dot(p.mu);
}

inline DriftClass classify_drift(double drift,
                                 const Tolerances& tol = default_tolerances()) {
    if (std::abs(drift) < tol.zero_drift) return DriftClass::zero;
    return drift < 0.0 ? DriftClass::negative : DriftClass::positive;
}

inline const char* to_string(DriftClass c) {
    switch (c) {
        case DriftClass::negative: return "negative";
        case DriftClass::zero: return "zero";
        case DriftClass::positive: return "positive";
    }
    return "?";
}

// Reading the level upside down (x -> b - x) negates every drift and swaps
// the roles of the two boundaries; several identities in the test suite rest
// on this.
inline MmbmParams reverse_levels(const MmbmParams& p) {
    return {p.Q, -p.mu, p.sigma};
}

// Two-sided model with instantaneous phase resampling at the boundaries.
// The up leg runs until the level first reaches b, then the phase is redrawn
// from switch_at_top and the down leg runs until the level first returns to
// 0, where switch_at_bottom redraws the phase for the next up leg.
struct FlexibleModel {
    MmbmParams up;
    MmbmParams down;
    Matrix switch_at_top;     // up phase -> down phase, row stochastic
    Matrix switch_at_bottom;  // down phase -> up phase, row stochastic
    double b = 0.0;

    void validate(const Tolerances& tol = default_tolerances()) const {
        up.validate(tol);
        down.validate(tol);
        if (!(b > 0.0)) throw InvalidModel("model: boundary b must be positive");
        auto check_stochastic = [](const Matrix& P, Eigen::Index rows,
                                   Eigen::Index cols, const std::string& name) {
            if (P.rows() != rows || P.cols() != cols)
                throw InvalidModel("model: " + name + " has wrong shape");
            for (Eigen::Index i = 0; i < rows; ++i) {
                if (P.row(i).minCoeff() < -1e-12)
                    throw InvalidModel("model: " + name + " has a negative entry");
                if (std::abs(P.row(i).sum() - 1.0) > 1e-10)
                    throw InvalidModel("model: row " + std::to_string(i) + " of " +
                                       name + " does not sum to one");
            }
        };
        check_stochastic(switch_at_top, up.phases(), down.phases(), "switch_at_top");
        check_stochastic(switch_at_bottom, down.phases(), up.phases(), "switch_at_bottom");
    }
};

} // namespace mmbm
