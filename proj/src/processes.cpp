#include "mflq/processes.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace mflq {

int default_workers() {
    unsigned hc = std::thread::hardware_concurrency();
    if (hc == 0) hc = 1;
    return static_cast<int>(std::min(hc, 8u));
}

void run_chunks(std::int64_t count, int workers, const std::function<void(std::int64_t)>& fn) {
    if (workers <= 0) workers = default_workers();
    if (workers == 1 || count <= 1) {
        for (std::int64_t c = 0; c < count; ++c) fn(c);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::int64_t c = next.fetch_add(1);
                if (c >= count || failed.load()) return;
                try {
                    fn(c);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed.load()) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Offset BSDE
// ---------------------------------------------------------------------------

Vector eta_drift_display(const ProblemSpec& spec, const TildeCoeffs& tld, const Matrix& ups,
                         const Matrix& ups_tilde, double t, const EtaSlots& s) {
    const int n = spec.n;
    const Matrix eye = Matrix::Identity(n, n);
    Vector rho1 = s.inhomogeneous ? Vector(spec.rho1.eval(t)) : Vector(Vector::Zero(n));
    Vector rho2 = s.inhomogeneous ? Vector(spec.rho2.eval(t)) : Vector(Vector::Zero(spec.m));
    Vector q = s.inhomogeneous ? Vector(spec.q.eval(t)) : Vector(Vector::Zero(n));
    Vector f = s.inhomogeneous ? Vector(spec.f.eval(t)) : Vector(Vector::Zero(n));

    Matrix s1 = spec.S1.eval(t), s2 = spec.S2.eval(t);
    Matrix s1t = tld.S1.eval(t), s2t = tld.S2.eval(t);

    Vector drift = spec.A.eval(t) * s.eta_c + tld.A.eval(t) * s.eta_m + f + ups_tilde * q;
    // centered block: inverse weights applied to the centered slots
    Vector top_c = ups * (s1.transpose() * s.eta_c) - s.beta_c;  // rho1 centered part is zero
    Vector bot_c = s2.transpose() * s.eta_c;                     // rho2 centered part is zero
    drift -= (spec.C.eval(t) + ups * s1) * solve_linear(eye + ups * spec.R11.eval(t), top_c);
    drift -= (spec.B.eval(t) + ups * s2) * solve_linear(spec.R22.eval(t), bot_c);
    // mean block
    Vector top_m = ups * (s1t.transpose() * s.eta_m + rho1) - s.beta_m;
    Vector bot_m = s2t.transpose() * s.eta_m + rho2;
    drift -= (tld.C.eval(t) + ups_tilde * s1t) *
             solve_linear(eye + ups * tld.R11.eval(t), top_m);
    drift -= (tld.B.eval(t) + ups_tilde * s2t) * solve_linear(tld.R22.eval(t), bot_m);
    return drift;
}

namespace {

// Hand-matched coefficient ODEs of the affine ansatz eta = a + b W.
Vector eta_rhs_b(const ProblemSpec& spec, const Matrix& ups, double t, const Vector& b) {
    const int n = spec.n;
    const Matrix eye = Matrix::Identity(n, n);
    Matrix s1 = spec.S1.eval(t), s2 = spec.S2.eval(t);
    Vector out = spec.A.eval(t) * b;
    out -= (spec.C.eval(t) + ups * s1) *
           solve_linear(eye + ups * spec.R11.eval(t), Vector(ups * (s1.transpose() * b)));
    out -= (spec.B.eval(t) + ups * s2) *
           solve_linear(spec.R22.eval(t), Vector(s2.transpose() * b));
    return out;
}

Vector eta_rhs_a(const ProblemSpec& spec, const TildeCoeffs& tld, const Matrix& ups,
                 const Matrix& ups_tilde, double t, const Vector& a, const Vector& b) {
    const int n = spec.n;
    const Matrix eye = Matrix::Identity(n, n);
    Matrix s1t = tld.S1.eval(t), s2t = tld.S2.eval(t);
    Vector out = tld.A.eval(t) * a + spec.f.eval(t) + ups_tilde * spec.q.eval(t);
    out -= (tld.C.eval(t) + ups_tilde * s1t) *
           solve_linear(eye + ups * tld.R11.eval(t),
                        Vector(ups * (s1t.transpose() * a + spec.rho1.eval(t)) - b));
    out -= (tld.B.eval(t) + ups_tilde * s2t) *
           solve_linear(tld.R22.eval(t), Vector(s2t.transpose() * a + spec.rho2.eval(t)));
    return out;
}

}  // namespace

EtaBeta solve_eta(const ProblemSpec& spec, const RiccatiSolution& ric,
                  const TerminalData& zeta, const Grid& grid) {
    const int n = spec.n;
    const TildeCoeffs tld = tilde(spec);

    // stacked backward state [Upsilon | UpsilonTilde | b | a]
    Matrix init(n, 2 * n + 2);
    init.leftCols(2 * n).setZero();
    init.col(2 * n) = zeta.zeta1;
    init.col(2 * n + 1) = zeta.zeta0;
    auto rhs = [&](double t, const Matrix& s) {
        Matrix d(n, 2 * n + 2);
        d.leftCols(2 * n) = upsilon_pair_rhs(spec, tld, t, s.leftCols(2 * n));
        const Matrix ups = s.leftCols(n);
        const Matrix upt = s.middleCols(n, n);
        d.col(2 * n) = eta_rhs_b(spec, ups, t, s.col(2 * n));
        d.col(2 * n + 1) = eta_rhs_a(spec, tld, ups, upt, t, s.col(2 * n + 1), s.col(2 * n));
        return d;
    };
    OdeProject sym = [n](Matrix& s) {
        s.leftCols(n) = symmetrized(s.leftCols(n));
        s.middleCols(n, n) = symmetrized(s.middleCols(n, n));
    };
    MatrixPath stacked = integrate_ode(rhs, init, grid, Direction::Backward, 1, sym);

    std::vector<Matrix> mean(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> load(static_cast<size_t>(grid.nodes()));
    for (int k = 0; k < grid.nodes(); ++k) {
        load[static_cast<size_t>(k)] = stacked.at(k).col(2 * n);
        mean[static_cast<size_t>(k)] = stacked.at(k).col(2 * n + 1);
    }

    EtaBeta out;
    out.eta.mean = MatrixPath(grid, std::move(mean));
    out.eta.loading = MatrixPath(grid, std::move(load));
    out.beta = out.eta.loading;

    // Coefficient-matching check: the literal display against the hand ODEs.
    for (int k = 0; k < grid.nodes(); ++k) {
        const double t = grid.time(k);
        const Matrix& ups = ric.upsilon.at(k);
        const Matrix& upt = ric.upsilon_tilde.at(k);
        Vector a = out.eta.mean.at(k);
        Vector b = out.eta.loading.at(k);

        EtaSlots mean_slots{Vector::Zero(n), a, Vector::Zero(n), b, true};
        Vector disp_mean = eta_drift_display(spec, tld, ups, upt, t, mean_slots);
        Vector hand_mean = eta_rhs_a(spec, tld, ups, upt, t, a, b);
        out.residual_mean = std::max(out.residual_mean, (disp_mean - hand_mean).norm());

        EtaSlots w_slots{b, Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), false};
        Vector disp_w = eta_drift_display(spec, tld, ups, upt, t, w_slots);
        Vector hand_w = eta_rhs_b(spec, ups, t, b);
        out.residual_w = std::max(out.residual_w, (disp_w - hand_w).norm());
    }
    if (out.residual_mean > 1e-8 || out.residual_w > 1e-8)
        throw SolveError("solve_eta: drift coefficient match failed");
    return out;
}

StateSolution solve_state_affine(const ProblemSpec& spec, const AffineProcess& u,
                                 const TerminalData& zeta, const Grid& grid) {
    const int n = spec.n;
    const TildeCoeffs tld = tilde(spec);

    // stacked backward state [r | p]
    Matrix init(n, 2);
    init.col(0) = zeta.zeta1;
    init.col(1) = zeta.zeta0;
    auto rhs = [&](double t, const Matrix& s) {
        Matrix d(n, 2);
        d.col(0) = spec.A.eval(t) * s.col(0) + spec.B.eval(t) * u.loading.eval(t);
        d.col(1) = tld.A.eval(t) * s.col(1) + tld.B.eval(t) * u.mean.eval(t) +
                   tld.C.eval(t) * s.col(0) + spec.f.eval(t);
        return d;
    };
    MatrixPath stacked = integrate_ode(rhs, init, grid, Direction::Backward);

    std::vector<Matrix> p(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> r(static_cast<size_t>(grid.nodes()));
    for (int k = 0; k < grid.nodes(); ++k) {
        r[static_cast<size_t>(k)] = stacked.at(k).col(0);
        p[static_cast<size_t>(k)] = stacked.at(k).col(1);
    }

    StateSolution out;
    out.y.mean = MatrixPath(grid, std::move(p));
    out.y.loading = MatrixPath(grid, r);
    out.z = MatrixPath(grid, std::move(r));

    // display check: dY drift = A Y + Ah E[Y] + B u + Bh E[u] + C Z + Ch E[Z] + f
    for (int k = 0; k < grid.nodes(); ++k) {
        const double t = grid.time(k);
        Vector pk = out.y.mean.at(k), rk = out.y.loading.at(k);
        Vector disp_mean = tld.A.eval(t) * pk + tld.B.eval(t) * u.mean.at(k) +
                           tld.C.eval(t) * rk + spec.f.eval(t);
        Vector hand_mean = rhs(t, stacked.at(k)).col(1);
        out.residual_mean = std::max(out.residual_mean, (disp_mean - hand_mean).norm());
        Vector disp_w = spec.A.eval(t) * rk + spec.B.eval(t) * u.loading.at(k);
        Vector hand_w = rhs(t, stacked.at(k)).col(0);
        out.residual_w = std::max(out.residual_w, (disp_w - hand_w).norm());
    }
    if (out.residual_mean > 1e-8 || out.residual_w > 1e-8)
        throw SolveError("solve_state_affine: drift coefficient match failed");
    return out;
}

// ---------------------------------------------------------------------------
// Adjoint ensemble
// ---------------------------------------------------------------------------

std::pair<Vector, Vector> adjoint_display(const ProblemSpec& spec, const TildeCoeffs& tld,
                                          const Matrix& ups, const Matrix& ups_tilde, double t,
                                          const AdjointSlots& s) {
    const int n = spec.n;
    const Matrix eye = Matrix::Identity(n, n);
    Matrix s1 = spec.S1.eval(t), s2 = spec.S2.eval(t);
    Matrix s1t = tld.S1.eval(t), s2t = tld.S2.eval(t);
    Matrix r11 = spec.R11.eval(t), r11t = tld.R11.eval(t);
    Matrix cT = spec.C.eval(t).transpose() + s1.transpose() * ups;
    Matrix cTt = tld.C.eval(t).transpose() + s1t.transpose() * ups_tilde;
    Matrix bT = spec.B.eval(t).transpose() + s2.transpose() * ups;
    Matrix bTt = tld.B.eval(t).transpose() + s2t.transpose() * ups_tilde;
    Vector rho1 = spec.rho1.eval(t), rho2 = spec.rho2.eval(t), q = spec.q.eval(t);

    Vector drift = spec.A.eval(t).transpose() * s.x_c + tld.A.eval(t).transpose() * s.x_m + q;
    drift -= s1 * solve_linear(eye + ups * r11,
                               Vector(ups * (cT * s.x_c + s1.transpose() * s.eta_c) - s.beta_c));
    drift -= s2 * solve_linear(spec.R22.eval(t), Vector(bT * s.x_c + s2.transpose() * s.eta_c));
    drift -= s1t * solve_linear(eye + ups * r11t,
                                Vector(ups * (cTt * s.x_m + s1t.transpose() * s.eta_m + rho1) -
                                       s.beta_m));
    drift -=
        s2t * solve_linear(tld.R22.eval(t), Vector(bTt * s.x_m + s2t.transpose() * s.eta_m + rho2));

    Vector diff = solve_linear(
        eye + r11 * ups,
        Vector(cT * s.x_c + s1.transpose() * s.eta_c + r11 * s.beta_c));
    diff += solve_linear(
        eye + r11t * ups,
        Vector(cTt * s.x_m + s1t.transpose() * s.eta_m + rho1 + r11t * s.beta_m));
    return {drift, diff};
}

namespace {

// y += M x with column-major M (rows = cols = n)
inline void matvec_acc(int n, const double* m, const double* x, double* y) {
    for (int j = 0; j < n; ++j) {
        const double xj = x[j];
        const double* col = m + j * n;
        for (int i = 0; i < n; ++i) y[i] += col[i] * xj;
    }
}

}  // namespace

void PathEnsemble::regenerate(std::int64_t i, std::vector<double>& x,
                              std::vector<double>& w) const {
    const int n = n_;
    const int nodes = grid_.nodes();
    const double dt = grid_.dt();
    const double sqrt_dt = std::sqrt(dt);
    x.assign(static_cast<size_t>(nodes) * n, 0.0);
    w.assign(static_cast<size_t>(nodes), 0.0);

    NormalStream stream(seed_, static_cast<std::uint64_t>(i));
    std::vector<double> f(static_cast<size_t>(n), 0.0), drift(static_cast<size_t>(n)),
        diff(static_cast<size_t>(n));

    for (int c = 0; c < n; ++c) x[static_cast<size_t>(c)] = mean_flat_[static_cast<size_t>(c)];
    double wk = 0.0;
    for (int k = 0; k < nodes - 1; ++k) {
        const size_t off_m = static_cast<size_t>(k) * n * n;
        const size_t off_v = static_cast<size_t>(k) * n;
        const double dw = sqrt_dt * stream(static_cast<std::uint64_t>(k));

        for (int c = 0; c < n; ++c) {
            drift[static_cast<size_t>(c)] = drift_w_[off_v + static_cast<size_t>(c)] * wk;
            diff[static_cast<size_t>(c)] = diff_const_[off_v + static_cast<size_t>(c)] +
                                           diff_w_[off_v + static_cast<size_t>(c)] * wk;
        }
        matvec_acc(n, drift_state_.data() + off_m, f.data(), drift.data());
        matvec_acc(n, diff_state_.data() + off_m, f.data(), diff.data());
        for (int c = 0; c < n; ++c)
            f[static_cast<size_t>(c)] -=
                dt * drift[static_cast<size_t>(c)] + diff[static_cast<size_t>(c)] * dw;

        wk += dw;
        w[static_cast<size_t>(k + 1)] = wk;
        const size_t out = static_cast<size_t>(k + 1) * n;
        for (int c = 0; c < n; ++c)
            x[out + static_cast<size_t>(c)] =
                mean_flat_[out + static_cast<size_t>(c)] + f[static_cast<size_t>(c)];
    }
}

PathEnsemble simulate_adjoint(const ProblemSpec& spec, const RiccatiSolution& ric,
                              const EtaBeta& eta_beta, std::uint64_t seed,
                              std::int64_t paths, int workers) {
    if (paths < 1) throw ShapeError("simulate_adjoint: need at least one path");
    const int n = spec.n;
    const Grid grid = ric.upsilon.grid();
    const TildeCoeffs tld = tilde(spec);
    const Matrix eye = Matrix::Identity(n, n);

    // exact mean path: expectations drop the diffusion and centered terms
    auto mean_rhs = [&](double t, const Matrix& m) -> Matrix {
        Matrix ups = ric.upsilon.eval(t);
        Matrix upt = ric.upsilon_tilde.eval(t);
        Vector a = eta_beta.eta.mean.eval(t);
        Vector b = eta_beta.eta.loading.eval(t);
        Matrix s1t = tld.S1.eval(t), s2t = tld.S2.eval(t);
        Matrix cTt = tld.C.eval(t).transpose() + s1t.transpose() * upt;
        Matrix bTt = tld.B.eval(t).transpose() + s2t.transpose() * upt;
        Vector drift = tld.A.eval(t).transpose() * m + spec.q.eval(t);
        drift -= s1t * solve_linear(
                           eye + ups * tld.R11.eval(t),
                           Vector(ups * (cTt * m + s1t.transpose() * a + spec.rho1.eval(t)) - b));
        drift -= s2t * solve_linear(tld.R22.eval(t),
                                    Vector(bTt * m + s2t.transpose() * a + spec.rho2.eval(t)));
        return -drift;
    };
    Vector x0 = -spec.g;
    MatrixPath mean = integrate_ode(mean_rhs, x0, grid, Direction::Forward);

    PathEnsemble ens;
    ens.grid_ = grid;
    ens.seed_ = seed;
    ens.paths_ = paths;
    ens.n_ = n;
    ens.workers_ = workers <= 0 ? default_workers() : workers;

    const size_t nodes = static_cast<size_t>(grid.nodes());
    ens.drift_state_.assign(nodes * n * n, 0.0);
    ens.diff_state_.assign(nodes * n * n, 0.0);
    ens.drift_w_.assign(nodes * n, 0.0);
    ens.diff_w_.assign(nodes * n, 0.0);
    ens.diff_const_.assign(nodes * n, 0.0);
    ens.mean_flat_.assign(nodes * n, 0.0);
    ens.mean_exact_.resize(nodes);

    for (int k = 0; k < grid.nodes(); ++k) {
        const double t = grid.time(k);
        const Matrix& ups = ric.upsilon.at(k);
        const Matrix& upt = ric.upsilon_tilde.at(k);
        Vector a = eta_beta.eta.mean.at(k);
        Vector b = eta_beta.eta.loading.at(k);
        Matrix s1 = spec.S1.eval(t), s2 = spec.S2.eval(t);
        Matrix s1t = tld.S1.eval(t), s2t = tld.S2.eval(t);
        Matrix r11 = spec.R11.eval(t), r11t = tld.R11.eval(t);
        Matrix cT = spec.C.eval(t).transpose() + s1.transpose() * ups;
        Matrix cTt = tld.C.eval(t).transpose() + s1t.transpose() * upt;
        Matrix bT = spec.B.eval(t).transpose() + s2.transpose() * ups;

        Matrix ds = spec.A.eval(t).transpose() -
                    s1 * solve_linear(eye + ups * r11, Matrix(ups * cT)) -
                    s2 * solve_linear(spec.R22.eval(t), bT);
        Vector dw = -s1 * solve_linear(eye + ups * r11, Vector(ups * (s1.transpose() * b))) -
                    s2 * solve_linear(spec.R22.eval(t), Vector(s2.transpose() * b));
        Matrix xs = solve_linear(eye + r11 * ups, cT);
        Vector sw = solve_linear(eye + r11 * ups, Vector(s1.transpose() * b));
        Vector sc = solve_linear(
            eye + r11t * ups,
            Vector(cTt * mean.at(k) + s1t.transpose() * a + spec.rho1.eval(t) + r11t * b));

        const size_t off_m = static_cast<size_t>(k) * n * n;
        const size_t off_v = static_cast<size_t>(k) * n;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                ens.drift_state_[off_m + static_cast<size_t>(j) * n + i] = ds(i, j);
                ens.diff_state_[off_m + static_cast<size_t>(j) * n + i] = xs(i, j);
            }
        for (int i = 0; i < n; ++i) {
            ens.drift_w_[off_v + static_cast<size_t>(i)] = dw(i);
            ens.diff_w_[off_v + static_cast<size_t>(i)] = sw(i);
            ens.diff_const_[off_v + static_cast<size_t>(i)] = sc(i);
            ens.mean_flat_[off_v + static_cast<size_t>(i)] = mean.at(k)(i, 0);
        }
        ens.mean_exact_[static_cast<size_t>(k)] = mean.at(k);
    }

    // summary statistics, accumulated per chunk and merged in chunk order
    const std::int64_t chunks = ens.chunks();
    std::vector<std::vector<double>> sum_x(static_cast<size_t>(chunks)),
        sum_xx(static_cast<size_t>(chunks)), sum_w(static_cast<size_t>(chunks));
    run_chunks(chunks, ens.workers_, [&](std::int64_t c) {
        auto [begin, end] = ens.chunk_range(c);
        std::vector<double> x, w;
        auto& sx = sum_x[static_cast<size_t>(c)];
        auto& sxx = sum_xx[static_cast<size_t>(c)];
        auto& sw2 = sum_w[static_cast<size_t>(c)];
        sx.assign(nodes * n, 0.0);
        sxx.assign(nodes * n, 0.0);
        sw2.assign(nodes, 0.0);
        for (std::int64_t i = begin; i < end; ++i) {
            ens.regenerate(i, x, w);
            // accumulate centered on the exact mean: exact zeros survive
            for (size_t j = 0; j < nodes * static_cast<size_t>(n); ++j) {
                const double d = x[j] - ens.mean_flat_[j];
                sx[j] += d;
                sxx[j] += d * d;
            }
            for (size_t j = 0; j < nodes; ++j) sw2[j] += w[j];
        }
    });

    std::vector<double> tot_x(nodes * n, 0.0), tot_xx(nodes * n, 0.0), tot_w(nodes, 0.0);
    for (std::int64_t c = 0; c < chunks; ++c) {
        for (size_t j = 0; j < nodes * static_cast<size_t>(n); ++j) {
            tot_x[j] += sum_x[static_cast<size_t>(c)][j];
            tot_xx[j] += sum_xx[static_cast<size_t>(c)][j];
        }
        for (size_t j = 0; j < nodes; ++j) tot_w[j] += sum_w[static_cast<size_t>(c)][j];
    }

    const double p = static_cast<double>(paths);
    ens.mean_sample_.resize(nodes);
    ens.var_sample_.resize(nodes);
    ens.w_mean_.resize(nodes);
    for (size_t k = 0; k < nodes; ++k) {
        Vector mu(n), var(n);
        for (int i = 0; i < n; ++i) {
            double s = tot_x[k * n + static_cast<size_t>(i)];
            double ss = tot_xx[k * n + static_cast<size_t>(i)];
            mu(i) = ens.mean_flat_[k * static_cast<size_t>(n) + static_cast<size_t>(i)] + s / p;
            var(i) = paths > 1 ? std::max(0.0, (ss - s * s / p) / (p - 1.0)) : 0.0;
        }
        ens.mean_sample_[k] = mu;
        ens.var_sample_[k] = var;
        ens.w_mean_[k] = tot_w[k] / p;
    }
    return ens;
}

EnsembleSummary summarize(const PathEnsemble& ens, std::int64_t quantile_cap) {
    EnsembleSummary out;
    out.grid = ens.grid();
    out.n = ens.state_dim();
    out.mean = ens.mean_sample();
    out.var = ens.var_sample();
    out.quantile_paths = std::min<std::int64_t>(ens.path_count(), quantile_cap);

    const int n = out.n;
    const size_t nodes = static_cast<size_t>(out.grid.nodes());
    const size_t p = static_cast<size_t>(out.quantile_paths);
    std::vector<double> columns(nodes * static_cast<size_t>(n) * p);
    std::vector<double> x, w;
    for (std::int64_t i = 0; i < out.quantile_paths; ++i) {
        ens.regenerate(i, x, w);
        for (size_t k = 0; k < nodes; ++k)
            for (int d = 0; d < n; ++d)
                columns[(k * static_cast<size_t>(n) + static_cast<size_t>(d)) * p +
                        static_cast<size_t>(i)] = x[k * static_cast<size_t>(n) +
                                                    static_cast<size_t>(d)];
    }

    const double probs[5] = {0.05, 0.25, 0.5, 0.75, 0.95};
    out.quantiles.assign(nodes, std::vector<Vector>(5, Vector::Zero(n)));
    std::vector<double> buf(p);
    for (size_t k = 0; k < nodes; ++k)
        for (int d = 0; d < n; ++d) {
            double* col = columns.data() +
                          (k * static_cast<size_t>(n) + static_cast<size_t>(d)) * p;
            std::copy(col, col + p, buf.begin());
            std::sort(buf.begin(), buf.end());
            for (int qi = 0; qi < 5; ++qi) {
                double idx = probs[qi] * static_cast<double>(p - 1);
                size_t lo = static_cast<size_t>(idx);
                double frac = idx - static_cast<double>(lo);
                double v = buf[lo];
                if (lo + 1 < p) v += frac * (buf[lo + 1] - buf[lo]);
                out.quantiles[k][static_cast<size_t>(qi)](d) = v;
            }
        }
    return out;
}

double eta_pathwise_residual(const ProblemSpec& spec, const RiccatiSolution& ric,
                             const EtaBeta& eta_beta, const Grid& grid, std::uint64_t seed,
                             int paths) {
    const int n = spec.n;
    const TildeCoeffs tld = tilde(spec);
    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);

    double sum_sq = 0.0;
    for (int i = 0; i < paths; ++i) {
        NormalStream stream(seed, static_cast<std::uint64_t>(i));
        double wk = 0.0;
        Vector eta_hat = eta_beta.eta.mean.at(0);  // W(0) = 0
        double worst = 0.0;
        for (int k = 0; k < grid.steps; ++k) {
            const double t = grid.time(k);
            Vector a = eta_beta.eta.mean.at(k);
            Vector b = eta_beta.eta.loading.at(k);
            EtaSlots slots{Vector(b * wk), a, Vector::Zero(n), b, true};
            Vector drift =
                eta_drift_display(spec, tld, ric.upsilon.at(k), ric.upsilon_tilde.at(k), t, slots);
            const double dw = sqrt_dt * stream(static_cast<std::uint64_t>(k));
            eta_hat += dt * drift + b * dw;
            wk += dw;
            Vector exact =
                eta_beta.eta.mean.at(k + 1) + eta_beta.eta.loading.at(k + 1) * wk;
            worst = std::max(worst, (eta_hat - exact).norm());
        }
        sum_sq += worst * worst;
    }
    return std::sqrt(sum_sq / paths);
}

}  // namespace mflq
