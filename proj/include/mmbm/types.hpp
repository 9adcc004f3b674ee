#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mmbm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base for everything thrown by this library.  The subclasses map onto the
// CLI exit codes, so new failure kinds should pick one of these rather than
// inventing a sibling.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input that fails validation (non-generator Q, sigma <= 0, bad switch
// matrix, malformed config).  CLI exit code 2.
struct InvalidModel : Error {
    using Error::Error;
};

// A solver that should have converged did not, or produced output violating
// its own residual checks.  CLI exit code 3.
struct NumericalFailure : Error {
    using Error::Error;
};

// Structurally sound input outside the supported regime (e.g. sojourn
// matrices for a zero-drift leg).  CLI exit code 4.
struct UnsupportedCase : Error {
    using Error::Error;
};

// Central knobs for the numerical layer.  Defaults are what the test suite
// runs with; callers may relax them for experiments but the residual checks
// stay on.
struct Tolerances {
    double residual = 1e-10;      // acceptance threshold for defining-equation residuals
    double eigen_split = 1e-8;    // |Re z| below this is suspicious for a non-structural root
    double singular_null = 1e-12; // |u.v| below this means the null vectors are unusable
    double zero_drift = 1e-6;     // |alpha.mu| below this counts as the zero-drift regime
    double convergence = 1e-13;   // Newton / fixed-point stopping threshold
    int max_iterations = 200;
};

inline const Tolerances& default_tolerances() {
    static const Tolerances tol{};
    return tol;
}

} // namespace mmbm
