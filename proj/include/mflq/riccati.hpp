#pragma once

#include "mflq/model.hpp"
#include "mflq/numerics.hpp"

#include <utility>
#include <vector>

namespace mflq {

// Worst-case (over the grid) scalar certificates attached to a solved
// backward Riccati pair.  inv margins are smallest singular values of
// I + Upsilon*R11 (resp. the tilde weight); weighted margins are smallest
// eigenvalues of (I + Upsilon*R11)^-1 Upsilon (resp. tilde).
struct RiccatiCert {
    double min_eig_upsilon = 0.0;
    double min_eig_upsilon_tilde = 0.0;
    double min_inv_margin_R11 = 0.0;
    double min_inv_margin_R11_tilde = 0.0;
    double min_eig_weighted = 0.0;
    double min_eig_weighted_tilde = 0.0;
};

struct RiccatiSolution {
    MatrixPath upsilon;
    MatrixPath upsilon_tilde;
    RiccatiCert cert;
};

struct PiSolution {
    double lambda = 0.0;
    MatrixPath pi;
    MatrixPath pi_tilde;
    double weight_cert = 0.0;        // min eig over grid of [R11+Pi, R12; R12', R22]
    double weight_cert_tilde = 0.0;  // tilde analogue (with plain Pi in the corner)
};

struct LimitReport {
    std::vector<double> lambdas;             // solvable ladder entries, ascending
    std::vector<double> gap_upsilon;         // sup over grid of |Pi^-1 - Upsilon|
    std::vector<double> gap_upsilon_tilde;
    std::vector<double> gap_ratios;          // consecutive gap quotients (observed rate)
    bool gaps_strictly_decreasing = false;
    bool pinv_monotone_decreasing = false;   // Pi_l^-1 decreasing in lambda, PSD order
    bool pi_monotone_increasing = false;     // Pi_{l2} - Pi_{l1} > 0 at every node
    bool pinv_above_upsilon = false;         // Pi_l^-1 >= Upsilon at every node
    double lambda0_estimate = 0.0;           // smallest solvable ladder entry
    std::vector<double> unsolvable;          // ladder entries whose solve failed
};

// Auxiliary transforms: Phi' + Phi A + A' Phi + Q = 0 from Phi(0) = -G,
// and the tilde analogue; both integrated forward.
std::pair<MatrixPath, MatrixPath> solve_phi(const ProblemSpec& spec, const Grid& grid);

// True when G, G~, Q, Q~, R12, R12~ all vanish on the grid.
bool is_normal_form(const ProblemSpec& spec, double tol = 1e-12);

// Stage derivative of the stacked backward pair [Upsilon | UpsilonTilde];
// exposed so dependent backward solves can integrate alongside the pair and
// consume stage-exact values instead of interpolated ones.
Matrix upsilon_pair_rhs(const ProblemSpec& spec, const TildeCoeffs& tld, double t,
                        const Matrix& stacked);

// Backward pair with zero terminal data.  The tilde equation consumes the
// plain solution, so the two are integrated as one stacked flow with
// per-step symmetrization.  Requires normal form.
RiccatiSolution solve_upsilon(const ProblemSpec& spec, const Grid& grid);

// Same flow with terminal value (1/lambda) I on both equations; used as the
// independent reciprocal oracle for solve_pi_lambda.
RiccatiSolution solve_upsilon_shifted(const ProblemSpec& spec, const Grid& grid,
                                      double lambda);

// Forward-problem pair with terminal lambda I.  The weighting blocks are
// factorized (and sign-checked) at every stage evaluation; the terminal
// layer is stiff for large lambda, so each grid interval is subdivided by a
// deterministic, coefficient-scaled substep count.
PiSolution solve_pi_lambda(const ProblemSpec& spec, const Grid& grid, double lambda);

// Runs the lambda ladder, comparing Pi_lambda^-1 against Upsilon node by
// node; records gap decay and the positive-semidefinite-order monotonicity.
LimitReport upsilon_via_limit(const ProblemSpec& spec, const Grid& grid,
                              const std::vector<double>& ladder);

}  // namespace mflq
