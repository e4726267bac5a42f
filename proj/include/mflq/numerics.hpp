#pragma once

#include "mflq/core.hpp"

#include <functional>
#include <span>
#include <vector>

namespace mflq {

// Uniform time grid on [0, T] with N steps and N+1 nodes t_k = k*T/N.
struct Grid {
    double horizon = 1.0;
    int steps = 2000;

    Grid() = default;
    Grid(double T, int N);

    double dt() const { return horizon / steps; }
    int nodes() const { return steps + 1; }
    double time(int k) const { return (k * horizon) / steps; }
};

// Matrix-valued trajectory stored at every grid node, linear interpolation
// in between.  Shapes are uniform along the path.
class MatrixPath {
public:
    MatrixPath() = default;
    MatrixPath(Grid grid, std::vector<Matrix> values);

    // Constant path with the given value at every node.
    static MatrixPath constant(const Grid& grid, const Matrix& value);

    const Grid& grid() const { return grid_; }
    int nodes() const { return static_cast<int>(values_.size()); }
    Eigen::Index rows() const { return values_.empty() ? 0 : values_[0].rows(); }
    Eigen::Index cols() const { return values_.empty() ? 0 : values_[0].cols(); }

    const Matrix& at(int k) const { return values_[static_cast<size_t>(k)]; }
    Matrix& at(int k) { return values_[static_cast<size_t>(k)]; }

    Matrix eval(double t) const;

    const std::vector<Matrix>& values() const { return values_; }

private:
    Grid grid_;
    std::vector<Matrix> values_;
};

enum class Direction { Forward, Backward };

using OdeRhs = std::function<Matrix(double, const Matrix&)>;
using OdeProject = std::function<void(Matrix&)>;

// Classical fixed-step RK4 over the grid.  Forward starts from t=0,
// backward integrates in reversed time from the terminal value; the result
// is stored at every grid node either way.  `substeps` subdivides each grid
// interval (stage times use linear coefficient interpolation); `project` is
// applied after every accepted substep (used to re-symmetrize Riccati
// flows).  Throws NonFiniteError with the first offending time.
MatrixPath integrate_ode(const OdeRhs& rhs, const Matrix& init, const Grid& grid,
                         Direction direction, int substeps = 1,
                         const OdeProject& project = nullptr);

// Composite trapezoid rule for a scalar sampled on the full grid.
double quad_trapezoid(const Grid& grid, std::span<const double> samples);

// Solves Mat * X = rhs by partially pivoted LU; throws SingularError when
// the smallest pivot falls below 1e-12 times the max row norm of Mat.
Matrix solve_linear(const Matrix& mat, const Matrix& rhs);

// Smallest eigenvalue of a symmetric matrix; throws NotSymmetricError if
// the asymmetry exceeds 1e-8 relative to the magnitude of M.
double sym_eig_min(const Matrix& m);

}  // namespace mflq
