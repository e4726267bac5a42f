#pragma once

#include "mflq/core.hpp"
#include "mflq/numerics.hpp"

#include <string>
#include <vector>

namespace mflq {

// Time-dependent coefficient: either a constant matrix or samples on [0, T]
// with linear interpolation between strictly increasing sample times.
class CoeffFn {
public:
    enum class Kind { Constant, Sampled };

    CoeffFn() = default;

    static CoeffFn constant(Matrix value);
    static CoeffFn sampled(std::vector<double> times, std::vector<Matrix> samples);

    Kind kind() const { return kind_; }
    bool is_constant() const { return kind_ == Kind::Constant; }
    Eigen::Index rows() const { return samples_.empty() ? 0 : samples_[0].rows(); }
    Eigen::Index cols() const { return samples_.empty() ? 0 : samples_[0].cols(); }

    Matrix eval(double t) const;

    const std::vector<double>& times() const { return times_; }
    const std::vector<Matrix>& samples() const { return samples_; }

    // Pointwise sum; sampled operands are merged on the union of their
    // sample grids (exact for piecewise-linear data).
    friend CoeffFn operator+(const CoeffFn& a, const CoeffFn& b);

    CoeffFn transposed() const;
    CoeffFn scaled(double s) const;

    bool operator==(const CoeffFn& other) const;

private:
    Kind kind_ = Kind::Constant;
    std::vector<double> times_;    // empty for constants
    std::vector<Matrix> samples_;  // single entry for constants
};

// Terminal datum zeta = zeta0 + zeta1 * W(T).
struct TerminalData {
    Vector zeta0;
    Vector zeta1;
};

// Process of the form V(t) = mean(t) + loading(t) * W(t) with deterministic
// vector paths; the exactly solvable class used throughout.
struct AffineProcess {
    MatrixPath mean;     // n x 1
    MatrixPath loading;  // n x 1

    // E[V V'](t) = mean mean' + t * loading loading'
    Matrix second_moment(int k) const {
        double t = mean.grid().time(k);
        return mean.at(k) * mean.at(k).transpose() +
               t * loading.at(k) * loading.at(k).transpose();
    }
};

// Full problem data: backward state dynamics, quadratic cost, linear cost
// terms and the terminal condition.  Hatted entries weight the mean terms;
// tilde quantities (plain + hat) are derived on demand, never stored.
struct ProblemSpec {
    int n = 0;       // state dimension
    int m = 0;       // control dimension
    double T = 1.0;  // horizon

    // dynamics: dY = (A Y + Ah E[Y] + B u + Bh E[u] + C Z + Ch E[Z] + f) dt + Z dW
    CoeffFn A, A_hat, C, C_hat;  // n x n
    CoeffFn B, B_hat;            // n x m
    CoeffFn f;                   // n x 1, deterministic

    // cost weights
    Matrix G, G_hat;                 // n x n constant symmetric
    CoeffFn Q, Q_hat;                // n x n
    CoeffFn S1, S1_hat;              // n x n
    CoeffFn S2, S2_hat;              // n x m
    CoeffFn R11, R11_hat;            // n x n
    CoeffFn R12, R12_hat;            // n x m
    CoeffFn R22, R22_hat;            // m x m

    // linear cost terms
    Vector g;                        // n, deterministic
    CoeffFn q, rho1;                 // n x 1
    CoeffFn rho2;                    // m x 1

    TerminalData terminal;

    bool operator==(const ProblemSpec& other) const;
};

// All-zero spec of the given dimensions (useful as a construction base).
ProblemSpec zero_spec(int n, int m, double T);

struct ValidationReport {
    bool passed = true;
    std::vector<std::string> violations;
};

ValidationReport validate(const ProblemSpec& spec);

// Tilde (plain + hat) coefficient family.
struct TildeCoeffs {
    CoeffFn A, B, C;
    Matrix G;
    CoeffFn Q, S1, S2, R11, R12, R22;
};

TildeCoeffs tilde(const ProblemSpec& spec);

// Zeroes every inhomogeneity (f, g, q, rho1, rho2) and the terminal datum;
// the resulting cost is the homogeneous functional J_0.
ProblemSpec homogeneous(const ProblemSpec& spec);

}  // namespace mflq
