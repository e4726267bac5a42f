#pragma once

#include "mflq/model.hpp"
#include "mflq/numerics.hpp"
#include "mflq/riccati.hpp"

namespace mflq {

// Normal-form image of a problem (no Y-quadratics, no Y(0)-quadratics, no
// Z/u cross weights) together with the transform data needed to map
// controls and costs back and forth.
struct NormalFormProblem {
    ProblemSpec problem;        // satisfies the normal form
    Grid grid;
    MatrixPath phi;             // Phi(0) = -G of the original problem
    MatrixPath phi_tilde;       // Phi~(0) = -G~ of the original problem

    // control-transform data of the original problem
    CoeffFn orig_R12, orig_R22, orig_R12_tilde, orig_R22_tilde;
    int orig_n = 0;
    int orig_m = 0;

    // Constant cost shift: J_original = J_normal - offset(zeta).
    double offset(const TerminalData& zeta) const;
};

// Reduction to normal form.  Throws SingularError when R22 or
// R22~ fails to factorize on the grid.
NormalFormProblem reduce(const ProblemSpec& spec, const Grid& grid);

enum class MapDirection { ToOriginal, ToNormal };

// Invertible control transform between the original and normal-form
// problems.  Only the control changes; Y and Z pass through, but the
// companion Z supplies the coupling term.
AffineProcess map_control(const NormalFormProblem& normal, const AffineProcess& u,
                          MapDirection direction, const AffineProcess& y,
                          const AffineProcess& z);

// Differentiable symmetric pair h = (H, H~) with caller-supplied derivatives.
struct HTransform {
    MatrixPath H, H_tilde, dH, dH_tilde;

    static HTransform constant(const Grid& grid, const Matrix& H0, const Matrix& H0_tilde);
};

struct EquivCoeffs {
    CoeffFn Q_h, S1_h, S2_h, N1_h;
    CoeffFn Q_h_tilde, S1_h_tilde, S2_h_tilde, N1_h_tilde;
    CoeffFn q_h;
};

// Equivalent-cost coefficient family for a normal-form problem.
EquivCoeffs equivalent_coeffs(const ProblemSpec& spec, const HTransform& h, const Grid& grid);

// Constant shift between J and J_h for affine terminal data:
// J = J_h - shift.
double equivalent_cost_shift(const ProblemSpec& spec, const HTransform& h,
                             const TerminalData& zeta);

// Re-expresses a normal-form problem with the equivalent cost functional
// J_h as a ProblemSpec (the H(0) terms land in G / G_hat).
ProblemSpec spec_with_equivalent_cost(const ProblemSpec& spec, const HTransform& h,
                                      const EquivCoeffs& coeffs);

}  // namespace mflq
