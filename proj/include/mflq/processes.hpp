#pragma once

#include "mflq/model.hpp"
#include "mflq/numerics.hpp"
#include "mflq/riccati.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace mflq {

// ---------------------------------------------------------------------------
// Counter-based randomness: path i sees the same stream no matter how work
// is scheduled, so ensembles are bitwise reproducible for a fixed seed.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t path)
        : base_(splitmix64(splitmix64(seed) ^ splitmix64(0x1234567ull + path))) {}

    // k-th standard normal of this stream (Box-Muller on two hashed counters)
    double operator()(std::uint64_t k) const {
        std::uint64_t a = splitmix64(base_ ^ (2 * k + 1));
        std::uint64_t b = splitmix64(base_ ^ (2 * k + 2));
        double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;          // [0, 1)
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

private:
    std::uint64_t base_;
};

// Runs fn(chunk_index) for chunk_index in [0, count) across `workers`
// threads.  Chunk indices are handed out atomically; any per-chunk output
// must go into chunk-indexed slots so results never depend on scheduling.
void run_chunks(std::int64_t count, int workers, const std::function<void(std::int64_t)>& fn);

int default_workers();

// ---------------------------------------------------------------------------
// Offset mean-field BSDE (eta, beta) and affine state solves
// ---------------------------------------------------------------------------

struct EtaBeta {
    AffineProcess eta;   // eta = mean + loading * W
    MatrixPath beta;     // equals eta.loading under the ansatz
    double residual_mean = 0.0;  // worst coefficient-match residual, mean part
    double residual_w = 0.0;     // worst coefficient-match residual, W part
};

// Literal transcription of the offset-BSDE drift with explicit slots for
// the centered/mean components; the ODE right-hand sides used by the solver
// are derived by hand, and the two are compared node by node.
struct EtaSlots {
    Vector eta_c, eta_m, beta_c, beta_m;
    bool inhomogeneous = true;  // include f, q, rho1, rho2 terms
};

Vector eta_drift_display(const ProblemSpec& spec, const TildeCoeffs& tld, const Matrix& ups,
                         const Matrix& ups_tilde, double t, const EtaSlots& slots);

// Solves the offset BSDE by the affine ansatz.  The (a, b) system is
// integrated backward stacked with the Riccati pair so every stage sees
// stage-exact Upsilon values; `ric` supplies the node values used by the
// residual check.  Throws if the coefficient match exceeds 1e-8.
EtaBeta solve_eta(const ProblemSpec& spec, const RiccatiSolution& ric,
                  const TerminalData& zeta, const Grid& grid);

struct StateSolution {
    AffineProcess y;  // Y = p + r W
    MatrixPath z;     // Z = r (deterministic for affine data)
    double residual_mean = 0.0;
    double residual_w = 0.0;
};

// Solves the controlled state BSDE for an affine control and affine
// terminal datum: r' = A r + B u1 backward from zeta1, and
// p' = A~ p + B~ u0 + C~ r + f backward from zeta0.
StateSolution solve_state_affine(const ProblemSpec& spec, const AffineProcess& u,
                                 const TerminalData& zeta, const Grid& grid);

// ---------------------------------------------------------------------------
// Adjoint state ensemble
// ---------------------------------------------------------------------------

// Literal transcription of the adjoint SDE's drift and diffusion brackets
// (dX = -drift dt - diffusion dW) with explicit slots; used to pin the
// precomputed Euler tables against the display.
struct AdjointSlots {
    Vector x_c, x_m, eta_c, eta_m, beta_c, beta_m;
};

std::pair<Vector, Vector> adjoint_display(const ProblemSpec& spec, const TildeCoeffs& tld,
                                          const Matrix& ups, const Matrix& ups_tilde, double t,
                                          const AdjointSlots& slots);

// Monte Carlo ensemble of the adjoint state X.  The exact mean path solves
// the expectation ODE by RK4; fluctuations are Euler-Maruyama with
// per-node frozen coefficients.  Paths are regenerated on demand from
// (seed, path index) rather than stored, so ensembles of 1e5 x 2001 nodes
// stay cheap; summary statistics are accumulated in fixed chunk order.
class PathEnsemble {
public:
    static constexpr std::int64_t kChunk = 1024;

    const Grid& grid() const { return grid_; }
    std::uint64_t seed() const { return seed_; }
    std::int64_t path_count() const { return paths_; }
    int state_dim() const { return n_; }
    int workers() const { return workers_; }

    const std::vector<Vector>& mean_exact() const { return mean_exact_; }
    const std::vector<Vector>& mean_sample() const { return mean_sample_; }
    const std::vector<Vector>& var_sample() const { return var_sample_; }
    const std::vector<double>& w_mean() const { return w_mean_; }

    std::int64_t chunks() const { return (paths_ + kChunk - 1) / kChunk; }
    std::pair<std::int64_t, std::int64_t> chunk_range(std::int64_t c) const {
        return {c * kChunk, std::min(paths_, (c + 1) * kChunk)};
    }

    // Fills x (node-major, nodes*n) and w (Brownian levels, nodes) of path i.
    void regenerate(std::int64_t i, std::vector<double>& x, std::vector<double>& w) const;

    // Frozen per-node Euler tables (column-major n*n blocks / n vectors).
    const std::vector<double>& drift_state() const { return drift_state_; }
    const std::vector<double>& drift_w() const { return drift_w_; }
    const std::vector<double>& diff_state() const { return diff_state_; }
    const std::vector<double>& diff_w() const { return diff_w_; }
    const std::vector<double>& diff_const() const { return diff_const_; }

private:
    friend PathEnsemble simulate_adjoint(const ProblemSpec&, const RiccatiSolution&,
                                         const EtaBeta&, std::uint64_t, std::int64_t, int);
    Grid grid_;
    std::uint64_t seed_ = 0;
    std::int64_t paths_ = 0;
    int n_ = 0;
    int workers_ = 1;
    std::vector<double> drift_state_, drift_w_, diff_state_, diff_w_, diff_const_;
    std::vector<double> mean_flat_;  // m(t_k), node-major
    std::vector<Vector> mean_exact_, mean_sample_, var_sample_;
    std::vector<double> w_mean_;
};

// X(0) = -g with g taken from the problem's linear data.
PathEnsemble simulate_adjoint(const ProblemSpec& spec, const RiccatiSolution& ric,
                              const EtaBeta& eta_beta, std::uint64_t seed,
                              std::int64_t paths, int workers = 0);

// Per-node summary for CSV export.  Means and variances cover the whole
// ensemble; quantiles are exact over a deterministic subsample (the first
// min(paths, cap) paths).
struct EnsembleSummary {
    Grid grid;
    int n = 0;
    std::int64_t quantile_paths = 0;
    std::vector<Vector> mean, var;                 // per node
    std::vector<std::vector<Vector>> quantiles;    // per node, {p05, p25, p50, p75, p95}
};

EnsembleSummary summarize(const PathEnsemble& ens, std::int64_t quantile_cap = 4096);

// Discrete pathwise reconstruction check of the offset BSDE: integrates the
// display drift plus the stochastic term along simulated Brownian paths and
// returns the RMS (over paths) of the sup-node gap to the affine solution.
double eta_pathwise_residual(const ProblemSpec& spec, const RiccatiSolution& ric,
                             const EtaBeta& eta_beta, const Grid& grid, std::uint64_t seed,
                             int paths);

}  // namespace mflq
