#pragma once

#include "mflq/model.hpp"

#include <cstdint>

namespace mflq::testing {

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

// Scalar problem: dY = (2Y - 2E[Y] + 2u - E[u]) dt + Z dW on [0,1] with
// running cost -Z^2 + 2u^2 - 2E[Y]E[u] - E[Z]^2 - E[u]^2 (already in
// normal form).
inline ProblemSpec example61(double zeta0 = 1.0, double zeta1 = 0.0) {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.A = CoeffFn::constant(scalar(2.0));
    s.A_hat = CoeffFn::constant(scalar(-2.0));
    s.B = CoeffFn::constant(scalar(2.0));
    s.B_hat = CoeffFn::constant(scalar(-1.0));
    s.S2_hat = CoeffFn::constant(scalar(-1.0));
    s.R11 = CoeffFn::constant(scalar(-1.0));
    s.R11_hat = CoeffFn::constant(scalar(-1.0));
    s.R22 = CoeffFn::constant(scalar(2.0));
    s.R22_hat = CoeffFn::constant(scalar(-1.0));
    s.terminal.zeta0 = Vector::Constant(1, zeta0);
    s.terminal.zeta1 = Vector::Constant(1, zeta1);
    return s;
}

// Scalar problem: dY = (Y + E[Y] + u + E[u] + Z) dt + Z dW on [0,1] with
// running cost -8YZ - 6Yu - 2Z^2 + u^2 + 4E[Y]E[Z] - 2E[Y]E[u] + E[Z]^2.
inline ProblemSpec example62(double zeta0 = 0.0, double zeta1 = 1.0) {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.A = CoeffFn::constant(scalar(1.0));
    s.A_hat = CoeffFn::constant(scalar(1.0));
    s.B = CoeffFn::constant(scalar(1.0));
    s.B_hat = CoeffFn::constant(scalar(1.0));
    s.C = CoeffFn::constant(scalar(1.0));
    s.S1 = CoeffFn::constant(scalar(-4.0));
    s.S1_hat = CoeffFn::constant(scalar(2.0));
    s.S2 = CoeffFn::constant(scalar(-3.0));
    s.S2_hat = CoeffFn::constant(scalar(-1.0));
    s.R11 = CoeffFn::constant(scalar(-2.0));
    s.R11_hat = CoeffFn::constant(scalar(1.0));
    s.R22 = CoeffFn::constant(scalar(1.0));
    s.terminal.zeta0 = Vector::Constant(1, zeta0);
    s.terminal.zeta1 = Vector::Constant(1, zeta1);
    return s;
}

// Deterministic uniform/gaussian source independent of the library RNG.
class TestRng {
public:
    explicit TestRng(std::uint64_t seed) : state_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return lo + (hi - lo) * next01();
    }

    double gaussian() {
        // Box-Muller on two fresh uniforms
        double u1 = next01();
        double u2 = next01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    Matrix matrix(Eigen::Index r, Eigen::Index c, double scale) {
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform(-scale, scale);
        return m;
    }

    Matrix symmetric(Eigen::Index nn, double scale) {
        Matrix m = matrix(nn, nn, scale);
        return 0.5 * (m + m.transpose());
    }

    int integer(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next01() * (hi - lo + 1 - 1e-12));
    }

private:
    double next01() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        z = z ^ (z >> 31);
        return static_cast<double>(z >> 11) * 0x1.0p-53;
    }

    std::uint64_t state_;
};

}  // namespace mflq::testing
