#pragma once

#include "mflq/model.hpp"
#include "mflq/processes.hpp"
#include "mflq/riccati.hpp"

#include <string>
#include <vector>

namespace mflq {

// Feedback representation of the optimal control:
//   u = -K (X - E[X]) - K~ E[X] - c_w W - c_det
// where c_w carries the Brownian loading of the centered offset and c_det
// the deterministic mean offset.
struct ControlLaw {
    MatrixPath K;       // m x n, acts on X - E[X]
    MatrixPath K_tilde; // m x n, acts on E[X]
    MatrixPath c_w;     // m x 1
    MatrixPath c_det;   // m x 1
};

ControlLaw build_control_law(const ProblemSpec& spec, const RiccatiSolution& ric,
                             const EtaBeta& eta_beta, const Grid& grid);

// Per-node tables for reconstructing (Y, Z, u) from a simulated adjoint
// state:  Y = ups F + ups~ m + a + b W,
//         Z = Zx F + Zw W + Zc,
//         u = -K F - K~ m - c_w W - c_det,        F = X - E[X].
struct ReconstructionTables {
    int n = 0, m = 0;
    std::vector<Matrix> y_state;   // ups
    std::vector<Vector> y_w;       // b
    std::vector<Vector> y_const;   // ups~ m + a
    std::vector<Matrix> z_state;   // Zx
    std::vector<Vector> z_w;       // Zw
    std::vector<Vector> z_const;   // Zc
    std::vector<Matrix> u_state;   // -K
    std::vector<Vector> u_w;       // -c_w
    std::vector<Vector> u_const;   // -K~ m - c_det
};

ReconstructionTables build_reconstruction(const ProblemSpec& spec, const RiccatiSolution& ric,
                                          const EtaBeta& eta_beta, const ControlLaw& law,
                                          const std::vector<Vector>& mean_exact);

struct ValueBreakdown {
    double total = 0.0;
    std::vector<std::pair<std::string, double>> terms;

    double term(const std::string& name) const;
};

// Closed-form optimal value under the affine representation; expectations
// use E[W(t)] = 0 and E[W(t)^2] = t, integrals are trapezoid sums.
ValueBreakdown optimal_value(const ProblemSpec& spec, const RiccatiSolution& ric,
                             const EtaBeta& eta_beta, const Grid& grid);

// Forward-problem value 1/2 E[<Pi(0)(xi-E[xi]), xi-E[xi]> + <Pi~(0)E[xi], E[xi]>];
// the centered term vanishes for deterministic xi but is kept in the code path.
double forward_value(const PiSolution& pi, const Vector& xi);

}  // namespace mflq
