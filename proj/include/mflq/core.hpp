#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mflq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base for all solver failures; carries the time at which the solve broke
// down when that is meaningful (negative otherwise).
class SolveError : public std::runtime_error {
public:
    SolveError(std::string what, double t = -1.0)
        : std::runtime_error(std::move(what)), time_(t) {}

    double time() const { return time_; }

private:
    double time_;
};

// NaN/Inf showed up mid-integration (Riccati blow-up or corrupted data).
class NonFiniteError : public SolveError {
public:
    using SolveError::SolveError;
};

// A pivoted factorization fell below the singularity threshold.
class SingularError : public SolveError {
public:
    using SolveError::SolveError;
};

class NotSymmetricError : public SolveError {
public:
    using SolveError::SolveError;
};

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace mflq
