#include "mflq/numerics.hpp"

#include <cmath>
#include <utility>

namespace mflq {

Grid::Grid(double T, int N) : horizon(T), steps(N) {
    if (!(T > 0.0)) throw ShapeError("grid horizon must be positive");
    if (N < 2) throw ShapeError("grid needs at least 2 steps");
}

MatrixPath::MatrixPath(Grid grid, std::vector<Matrix> values)
    : grid_(grid), values_(std::move(values)) {
    if (static_cast<int>(values_.size()) != grid_.nodes())
        throw ShapeError("matrix path needs one value per grid node");
    for (const Matrix& v : values_)
        if (v.rows() != values_[0].rows() || v.cols() != values_[0].cols())
            throw ShapeError("matrix path values must share one shape");
}

MatrixPath MatrixPath::constant(const Grid& grid, const Matrix& value) {
    return MatrixPath(grid, std::vector<Matrix>(static_cast<size_t>(grid.nodes()), value));
}

Matrix MatrixPath::eval(double t) const {
    const int n = grid_.steps;
    double s = t / grid_.dt();
    if (s <= 0.0) return values_.front();
    if (s >= static_cast<double>(n)) return values_.back();
    int k = static_cast<int>(s);
    if (k >= n) k = n - 1;
    double w = s - k;
    if (w == 0.0) return values_[static_cast<size_t>(k)];
    return (1.0 - w) * values_[static_cast<size_t>(k)] + w * values_[static_cast<size_t>(k + 1)];
}

namespace {

Matrix rk4_step(const OdeRhs& rhs, double t, const Matrix& x, double h) {
    Matrix k1 = rhs(t, x);
    Matrix k2 = rhs(t + 0.5 * h, x + (0.5 * h) * k1);
    Matrix k3 = rhs(t + 0.5 * h, x + (0.5 * h) * k2);
    Matrix k4 = rhs(t + h, x + h * k3);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

MatrixPath integrate_ode(const OdeRhs& rhs, const Matrix& init, const Grid& grid,
                         Direction direction, int substeps, const OdeProject& project) {
    if (substeps < 1) substeps = 1;
    std::vector<Matrix> values(static_cast<size_t>(grid.nodes()));
    const bool forward = direction == Direction::Forward;
    const double h = (forward ? grid.dt() : -grid.dt()) / substeps;

    Matrix state = init;
    if (project) project(state);
    values[forward ? 0 : static_cast<size_t>(grid.steps)] = state;

    for (int i = 0; i < grid.steps; ++i) {
        const int from = forward ? i : grid.steps - i;
        double t = grid.time(from);
        for (int s = 0; s < substeps; ++s) {
            state = rk4_step(rhs, t, state, h);
            if (project) project(state);
            t += h;
            if (!all_finite(state))
                throw NonFiniteError("integrate_ode: non-finite state", t);
        }
        values[static_cast<size_t>(forward ? from + 1 : from - 1)] = state;
    }
    return MatrixPath(grid, std::move(values));
}

double quad_trapezoid(const Grid& grid, std::span<const double> samples) {
    if (static_cast<int>(samples.size()) != grid.nodes())
        throw ShapeError("quad_trapezoid needs one sample per grid node");
    double acc = 0.5 * (samples.front() + samples.back());
    for (size_t k = 1; k + 1 < samples.size(); ++k) acc += samples[k];
    return acc * grid.dt();
}

Matrix solve_linear(const Matrix& mat, const Matrix& rhs) {
    if (mat.rows() != mat.cols()) throw ShapeError("solve_linear: matrix must be square");
    if (mat.rows() != rhs.rows()) throw ShapeError("solve_linear: rhs row mismatch");

    Eigen::PartialPivLU<Matrix> lu(mat);
    const double max_row_norm = mat.cwiseAbs().rowwise().sum().maxCoeff();
    const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(min_pivot > 1e-12 * max_row_norm))
        throw SingularError("solve_linear: pivot below 1e-12 of max row norm");
    return lu.solve(rhs);
}

double sym_eig_min(const Matrix& m) {
    if (m.rows() != m.cols()) throw NotSymmetricError("sym_eig_min: matrix not square");
    const double scale = std::max(1.0, max_abs(m));
    if (max_abs(m - m.transpose()) > 1e-8 * scale)
        throw NotSymmetricError("sym_eig_min: matrix not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(m), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

}  // namespace mflq
