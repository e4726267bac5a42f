#include "mflq/verify.hpp"

#include <algorithm>
#include <cmath>

namespace mflq {

namespace {

const Matrix& path_at(const MatrixPath& path, const Grid& grid, int k) {
    if (path.nodes() != grid.nodes())
        throw ShapeError("path does not live on the evaluation grid");
    return path.at(k);
}

// ---------------------------------------------------------------------------
// flattened node tables for the streaming kernels
// ---------------------------------------------------------------------------

void put(std::vector<double>& dst, size_t node, const Matrix& m) {
    const size_t sz = static_cast<size_t>(m.size());
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            dst[node * sz + static_cast<size_t>(j * m.rows() + i)] = m(i, j);
}

inline double dot(int k, const double* a, const double* b) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += a[i] * b[i];
    return s;
}

// y (+)= M x, column-major M of shape rows x cols
inline void matvec(int rows, int cols, const double* m, const double* x, double* y, bool acc) {
    if (!acc)
        for (int i = 0; i < rows; ++i) y[i] = 0.0;
    for (int j = 0; j < cols; ++j) {
        const double xj = x[j];
        const double* col = m + j * rows;
        for (int i = 0; i < rows; ++i) y[i] += col[i] * xj;
    }
}

// x' M y, column-major M of shape rx x ry
inline double quad(int rx, int ry, const double* x, const double* m, const double* y) {
    double s = 0.0;
    for (int j = 0; j < ry; ++j) {
        const double yj = y[j];
        const double* col = m + j * rx;
        double c = 0.0;
        for (int i = 0; i < rx; ++i) c += x[i] * col[i];
        s += c * yj;
    }
    return s;
}

struct FlatTables {
    int n = 0, m = 0, nodes = 0;
    double dt = 0.0;
    // cost weights
    std::vector<double> q, r1, r2;
    std::vector<double> Q, S1, R11, Qh, S1h, R11h;
    std::vector<double> S2, R12, S2h, R12h;
    std::vector<double> R22, R22h;
    Matrix G, Gh;
    Vector g;
    // reconstruction
    std::vector<double> yS, zS;
    std::vector<double> yW, yC, zW, zC;
    std::vector<double> uS;
    std::vector<double> uW, uC;
    // dynamics (state-equation channel)
    std::vector<double> dA, dAh, dC, dCh;
    std::vector<double> dB, dBh;
    std::vector<double> df;

    void init_cost(const ProblemSpec& spec, const Grid& grid) {
        n = spec.n;
        m = spec.m;
        nodes = grid.nodes();
        dt = grid.dt();
        const size_t nn = static_cast<size_t>(n) * n, nm = static_cast<size_t>(n) * m,
                     mm = static_cast<size_t>(m) * m, N = static_cast<size_t>(nodes);
        q.resize(N * n);
        r1.resize(N * n);
        r2.resize(N * m);
        Q.resize(N * nn);
        S1.resize(N * nn);
        R11.resize(N * nn);
        Qh.resize(N * nn);
        S1h.resize(N * nn);
        R11h.resize(N * nn);
        S2.resize(N * nm);
        R12.resize(N * nm);
        S2h.resize(N * nm);
        R12h.resize(N * nm);
        R22.resize(N * mm);
        R22h.resize(N * mm);
        for (int k = 0; k < nodes; ++k) {
            const double t = grid.time(k);
            const size_t j = static_cast<size_t>(k);
            put(q, j, spec.q.eval(t));
            put(r1, j, spec.rho1.eval(t));
            put(r2, j, spec.rho2.eval(t));
            put(Q, j, spec.Q.eval(t));
            put(S1, j, spec.S1.eval(t));
            put(R11, j, spec.R11.eval(t));
            put(Qh, j, spec.Q_hat.eval(t));
            put(S1h, j, spec.S1_hat.eval(t));
            put(R11h, j, spec.R11_hat.eval(t));
            put(S2, j, spec.S2.eval(t));
            put(R12, j, spec.R12.eval(t));
            put(S2h, j, spec.S2_hat.eval(t));
            put(R12h, j, spec.R12_hat.eval(t));
            put(R22, j, spec.R22.eval(t));
            put(R22h, j, spec.R22_hat.eval(t));
        }
        G = spec.G;
        Gh = spec.G_hat;
        g = spec.g;
    }

    void init_recon(const ReconstructionTables& tab) {
        const size_t nn = static_cast<size_t>(n) * n, mn = static_cast<size_t>(m) * n,
                     N = static_cast<size_t>(nodes);
        yS.resize(N * nn);
        zS.resize(N * nn);
        uS.resize(N * mn);
        yW.resize(N * n);
        yC.resize(N * n);
        zW.resize(N * n);
        zC.resize(N * n);
        uW.resize(N * m);
        uC.resize(N * m);
        for (int k = 0; k < nodes; ++k) {
            const size_t j = static_cast<size_t>(k);
            put(yS, j, tab.y_state[j]);
            put(zS, j, tab.z_state[j]);
            put(uS, j, tab.u_state[j]);
            put(yW, j, tab.y_w[j]);
            put(yC, j, tab.y_const[j]);
            put(zW, j, tab.z_w[j]);
            put(zC, j, tab.z_const[j]);
            put(uW, j, tab.u_w[j]);
            put(uC, j, tab.u_const[j]);
        }
    }

    void init_dynamics(const ProblemSpec& spec, const Grid& grid) {
        const size_t nn = static_cast<size_t>(n) * n, nm = static_cast<size_t>(n) * m,
                     N = static_cast<size_t>(nodes);
        dA.resize(N * nn);
        dAh.resize(N * nn);
        dC.resize(N * nn);
        dCh.resize(N * nn);
        dB.resize(N * nm);
        dBh.resize(N * nm);
        df.resize(N * n);
        for (int k = 0; k < nodes; ++k) {
            const double t = grid.time(k);
            const size_t j = static_cast<size_t>(k);
            put(dA, j, spec.A.eval(t));
            put(dAh, j, spec.A_hat.eval(t));
            put(dC, j, spec.C.eval(t));
            put(dCh, j, spec.C_hat.eval(t));
            put(dB, j, spec.B.eval(t));
            put(dBh, j, spec.B_hat.eval(t));
            put(df, j, spec.f.eval(t));
        }
    }

    // cost integrand at node k, pathwise values and mean slots
    double integrand(size_t k, const double* Y, const double* Z, const double* U,
                     const double* Ym, const double* Zm, const double* Um) const {
        const size_t nn = static_cast<size_t>(n) * n, nm = static_cast<size_t>(n) * m,
                     mm = static_cast<size_t>(m) * m;
        const size_t on = k * static_cast<size_t>(n), om = k * static_cast<size_t>(m);
        double v = 2.0 * (dot(n, q.data() + on, Y) + dot(n, r1.data() + on, Z) +
                          dot(m, r2.data() + om, U));
        v += quad(n, n, Y, Q.data() + k * nn, Y) + 2.0 * quad(n, n, Y, S1.data() + k * nn, Z) +
             2.0 * quad(n, m, Y, S2.data() + k * nm, U) +
             quad(n, n, Z, R11.data() + k * nn, Z) +
             2.0 * quad(n, m, Z, R12.data() + k * nm, U) +
             quad(m, m, U, R22.data() + k * mm, U);
        v += quad(n, n, Ym, Qh.data() + k * nn, Ym) +
             2.0 * quad(n, n, Ym, S1h.data() + k * nn, Zm) +
             2.0 * quad(n, m, Ym, S2h.data() + k * nm, Um) +
             quad(n, n, Zm, R11h.data() + k * nn, Zm) +
             2.0 * quad(n, m, Zm, R12h.data() + k * nm, Um) +
             quad(m, m, Um, R22h.data() + k * mm, Um);
        return v;
    }

    // reconstruct (Y, Z, U) at node k from the centered state F and level W
    void reconstruct(size_t k, const double* F, double W, double* Y, double* Z,
                     double* U) const {
        const size_t nn = static_cast<size_t>(n) * n, mn = static_cast<size_t>(m) * n;
        const size_t on = k * static_cast<size_t>(n), om = k * static_cast<size_t>(m);
        matvec(n, n, yS.data() + k * nn, F, Y, false);
        matvec(n, n, zS.data() + k * nn, F, Z, false);
        matvec(m, n, uS.data() + k * mn, F, U, false);
        for (int i = 0; i < n; ++i) {
            Y[i] += yW[on + static_cast<size_t>(i)] * W + yC[on + static_cast<size_t>(i)];
            Z[i] += zW[on + static_cast<size_t>(i)] * W + zC[on + static_cast<size_t>(i)];
        }
        for (int i = 0; i < m; ++i)
            U[i] += uW[om + static_cast<size_t>(i)] * W + uC[om + static_cast<size_t>(i)];
    }
};

// stationarity tables: expr = B'X + Bh'E[X] + S2'Y + S2h'E[Y] + R12'Z +
// R12h'E[Z] + R22 u + R22h E[u] + rho2
struct StationarityTables {
    int n = 0, m = 0, nodes = 0;
    std::vector<double> Bt, Bht, S2t, S2ht, R12t, R12ht;  // m x n
    std::vector<double> R22, R22h;                        // m x m
    std::vector<double> rho2;                             // m

    void init(const ProblemSpec& spec, const Grid& grid) {
        n = spec.n;
        m = spec.m;
        nodes = grid.nodes();
        const size_t mn = static_cast<size_t>(m) * n, mm = static_cast<size_t>(m) * m,
                     N = static_cast<size_t>(nodes);
        Bt.resize(N * mn);
        Bht.resize(N * mn);
        S2t.resize(N * mn);
        S2ht.resize(N * mn);
        R12t.resize(N * mn);
        R12ht.resize(N * mn);
        R22.resize(N * mm);
        R22h.resize(N * mm);
        rho2.resize(N * m);
        for (int k = 0; k < nodes; ++k) {
            const double t = grid.time(k);
            const size_t j = static_cast<size_t>(k);
            put(Bt, j, Matrix(spec.B.eval(t).transpose()));
            put(Bht, j, Matrix(spec.B_hat.eval(t).transpose()));
            put(S2t, j, Matrix(spec.S2.eval(t).transpose()));
            put(S2ht, j, Matrix(spec.S2_hat.eval(t).transpose()));
            put(R12t, j, Matrix(spec.R12.eval(t).transpose()));
            put(R12ht, j, Matrix(spec.R12_hat.eval(t).transpose()));
            put(R22, j, spec.R22.eval(t));
            put(R22h, j, spec.R22_hat.eval(t));
            put(rho2, j, spec.rho2.eval(t));
        }
    }

    void expr(size_t k, const double* X, const double* Y, const double* Z, const double* U,
              const double* Xm, const double* Ym, const double* Zm, const double* Um,
              double* e) const {
        const size_t mn = static_cast<size_t>(m) * n, mm = static_cast<size_t>(m) * m;
        const size_t om = k * static_cast<size_t>(m);
        for (int i = 0; i < m; ++i) e[i] = rho2[om + static_cast<size_t>(i)];
        matvec(m, n, Bt.data() + k * mn, X, e, true);
        matvec(m, n, Bht.data() + k * mn, Xm, e, true);
        matvec(m, n, S2t.data() + k * mn, Y, e, true);
        matvec(m, n, S2ht.data() + k * mn, Ym, e, true);
        matvec(m, n, R12t.data() + k * mn, Z, e, true);
        matvec(m, n, R12ht.data() + k * mn, Zm, e, true);
        matvec(m, m, R22.data() + k * mm, U, e, true);
        matvec(m, m, R22h.data() + k * mm, Um, e, true);
    }
};

double trapezoid_weight(const Grid& grid, int k) {
    return (k == 0 || k == grid.steps) ? 0.5 * grid.dt() : grid.dt();
}

struct MeanRecon {  // per-node mean slots (nodes * n / m)
    std::vector<double> Y, Z, U, X;
};

MeanRecon mean_reconstruction(const FlatTables& tab, const PathEnsemble& ens,
                              bool sample_means) {
    MeanRecon mr;
    const int n = tab.n, m = tab.m;
    const size_t N = static_cast<size_t>(tab.nodes);
    mr.Y.resize(N * n);
    mr.Z.resize(N * n);
    mr.U.resize(N * m);
    mr.X.resize(N * n);
    std::vector<double> F(static_cast<size_t>(n));
    for (int k = 0; k < tab.nodes; ++k) {
        const size_t j = static_cast<size_t>(k);
        double W = 0.0;
        for (int i = 0; i < n; ++i) {
            double exact = ens.mean_exact()[j](i);
            double x = sample_means ? ens.mean_sample()[j](i) : exact;
            F[static_cast<size_t>(i)] = x - exact;
            mr.X[j * static_cast<size_t>(n) + static_cast<size_t>(i)] = x;
        }
        if (sample_means) W = ens.w_mean()[j];
        tab.reconstruct(j, F.data(), W, mr.Y.data() + j * static_cast<size_t>(n),
                        mr.Z.data() + j * static_cast<size_t>(n),
                        mr.U.data() + j * static_cast<size_t>(m));
    }
    return mr;
}

}  // namespace

// ---------------------------------------------------------------------------
// exact affine cost
// ---------------------------------------------------------------------------

double evaluate_cost(const ProblemSpec& spec, const AffineProcess& u,
                     const TerminalData& zeta, const Grid& grid) {
    StateSolution st = solve_state_affine(spec, u, zeta, grid);
    const size_t N = static_cast<size_t>(grid.nodes());
    std::vector<double> val(N);
    for (int k = 0; k < grid.nodes(); ++k) {
        const double t = grid.time(k);
        Vector p = st.y.mean.at(k);
        Vector r = st.y.loading.at(k);
        Vector u0 = path_at(u.mean, grid, k);
        Vector u1 = path_at(u.loading, grid, k);
        Matrix Q = spec.Q.eval(t), S1 = spec.S1.eval(t), S2 = spec.S2.eval(t);
        Matrix R11 = spec.R11.eval(t), R12 = spec.R12.eval(t), R22 = spec.R22.eval(t);
        Matrix Qh = spec.Q_hat.eval(t), S1h = spec.S1_hat.eval(t), S2h = spec.S2_hat.eval(t);
        Matrix R11h = spec.R11_hat.eval(t), R12h = spec.R12_hat.eval(t),
               R22h = spec.R22_hat.eval(t);

        double v = 2.0 * (spec.q.eval(t).col(0).dot(p) + spec.rho1.eval(t).col(0).dot(r) +
                          spec.rho2.eval(t).col(0).dot(u0));
        v += p.dot(Q * p) + t * r.dot(Q * r);             // E[Y'QY]
        v += 2.0 * p.dot(S1 * r);                          // E[2 Y'S1 Z], Z deterministic
        v += 2.0 * (p.dot(S2 * u0) + t * r.dot(S2 * u1));  // E[2 Y'S2 u]
        v += r.dot(R11 * r);
        v += 2.0 * r.dot(R12 * u0);
        v += u0.dot(R22 * u0) + t * u1.dot(R22 * u1);
        // mean terms: E[Y] = p, E[Z] = r, E[u] = u0
        v += p.dot(Qh * p) + 2.0 * p.dot(S1h * r) + 2.0 * p.dot(S2h * u0) + r.dot(R11h * r) +
             2.0 * r.dot(R12h * u0) + u0.dot(R22h * u0);
        val[static_cast<size_t>(k)] = v;
    }
    Vector y0 = st.y.mean.at(0);
    double boundary = y0.dot(spec.G * y0) + y0.dot(spec.G_hat * y0) + 2.0 * spec.g.dot(y0);
    return 0.5 * (boundary + quad_trapezoid(grid, val));
}

// ---------------------------------------------------------------------------
// Monte Carlo cost of the synthesized law
// ---------------------------------------------------------------------------

McCost mc_cost(const ProblemSpec& spec, const ControlLaw& law, const PathEnsemble& ens,
               const RiccatiSolution& ric, const EtaBeta& eta_beta,
               const TerminalData& zeta) {
    (void)zeta;  // enters through eta and the simulated ensemble
    const Grid& grid = ens.grid();
    const int n = spec.n, m = spec.m;

    ReconstructionTables recon =
        build_reconstruction(spec, ric, eta_beta, law, ens.mean_exact());
    FlatTables tab;
    tab.init_cost(spec, grid);
    tab.init_recon(recon);

    MeanRecon mr = mean_reconstruction(tab, ens, true);

    const size_t n_nodes = static_cast<size_t>(grid.nodes());
    std::vector<double> mexact(n_nodes * static_cast<size_t>(n));
    for (size_t k = 0; k < n_nodes; ++k)
        for (int d = 0; d < n; ++d)
            mexact[k * static_cast<size_t>(n) + static_cast<size_t>(d)] =
                ens.mean_exact()[k](d);

    // path-independent part: mean-slot quadratics and the G_hat boundary
    double common = 0.0;
    for (int k = 0; k < grid.nodes(); ++k) {
        const size_t j = static_cast<size_t>(k);
        std::vector<double> zero_n(static_cast<size_t>(n), 0.0),
            zero_m(static_cast<size_t>(m), 0.0);
        double hat_only =
            tab.integrand(j, zero_n.data(), zero_n.data(), zero_m.data(),
                          mr.Y.data() + j * static_cast<size_t>(n),
                          mr.Z.data() + j * static_cast<size_t>(n),
                          mr.U.data() + j * static_cast<size_t>(m));
        common += trapezoid_weight(grid, k) * hat_only;
    }
    Eigen::Map<const Vector> ey0(mr.Y.data(), n);
    common += ey0.dot(tab.Gh * ey0);

    const std::int64_t chunks = ens.chunks();
    std::vector<double> sum_j(static_cast<size_t>(chunks), 0.0),
        sum_jj(static_cast<size_t>(chunks), 0.0);
    run_chunks(chunks, ens.workers(), [&](std::int64_t c) {
        auto [begin, end] = ens.chunk_range(c);
        std::vector<double> x, w, F(static_cast<size_t>(n)), Y(static_cast<size_t>(n)),
            Z(static_cast<size_t>(n)), U(static_cast<size_t>(m));
        double sj = 0.0, sjj = 0.0;
        for (std::int64_t i = begin; i < end; ++i) {
            ens.regenerate(i, x, w);
            double acc = 0.0;
            double y0_part = 0.0;
            for (int k = 0; k < grid.nodes(); ++k) {
                const size_t j = static_cast<size_t>(k);
                for (int d = 0; d < n; ++d)
                    F[static_cast<size_t>(d)] =
                        x[j * static_cast<size_t>(n) + static_cast<size_t>(d)] -
                        mexact[j * static_cast<size_t>(n) + static_cast<size_t>(d)];
                tab.reconstruct(j, F.data(), w[j], Y.data(), Z.data(), U.data());
                // plain (pathwise) part of the integrand only
                std::vector<double> zn(static_cast<size_t>(n), 0.0),
                    zm(static_cast<size_t>(m), 0.0);
                acc += trapezoid_weight(grid, k) *
                       tab.integrand(j, Y.data(), Z.data(), U.data(), zn.data(), zn.data(),
                                     zm.data());
                if (k == 0) {
                    Eigen::Map<const Vector> y0(Y.data(), n);
                    y0_part = y0.dot(tab.G * y0) + 2.0 * tab.g.dot(y0);
                }
            }
            double ji = 0.5 * (acc + y0_part + common);
            sj += ji;
            sjj += ji * ji;
        }
        sum_j[static_cast<size_t>(c)] = sj;
        sum_jj[static_cast<size_t>(c)] = sjj;
    });

    double tj = 0.0, tjj = 0.0;
    for (std::int64_t c = 0; c < chunks; ++c) {
        tj += sum_j[static_cast<size_t>(c)];
        tjj += sum_jj[static_cast<size_t>(c)];
    }
    const double p = static_cast<double>(ens.path_count());
    McCost out;
    out.mean = tj / p;
    double var = p > 1 ? std::max(0.0, (tjj - tj * tj / p) / (p - 1.0)) : 0.0;
    out.stderr_mean = std::sqrt(var / p);
    return out;
}

McCost mc_cost_affine(const ProblemSpec& spec, const AffineProcess& u,
                      const TerminalData& zeta, const Grid& grid, std::uint64_t seed,
                      std::int64_t paths, int workers) {
    StateSolution st = solve_state_affine(spec, u, zeta, grid);
    const int n = spec.n, m = spec.m;
    FlatTables tab;
    tab.init_cost(spec, grid);
    const size_t N = static_cast<size_t>(grid.nodes());
    const double sqrt_dt = std::sqrt(grid.dt());
    if (workers <= 0) workers = default_workers();

    // flatten the affine paths
    std::vector<double> pm(N * n), rl(N * n), u0(N * m), u1(N * m);
    for (int k = 0; k < grid.nodes(); ++k) {
        const size_t j = static_cast<size_t>(k);
        put(pm, j, st.y.mean.at(k));
        put(rl, j, st.y.loading.at(k));
        put(u0, j, path_at(u.mean, grid, k));
        put(u1, j, path_at(u.loading, grid, k));
    }

    const std::int64_t chunks = (paths + PathEnsemble::kChunk - 1) / PathEnsemble::kChunk;
    // pass 1: Brownian level means
    std::vector<std::vector<double>> wsum(static_cast<size_t>(chunks));
    run_chunks(chunks, workers, [&](std::int64_t c) {
        std::int64_t begin = c * PathEnsemble::kChunk,
                     end = std::min(paths, (c + 1) * PathEnsemble::kChunk);
        auto& acc = wsum[static_cast<size_t>(c)];
        acc.assign(N, 0.0);
        for (std::int64_t i = begin; i < end; ++i) {
            NormalStream stream(seed, static_cast<std::uint64_t>(i));
            double wk = 0.0;
            for (int k = 1; k < grid.nodes(); ++k) {
                wk += sqrt_dt * stream(static_cast<std::uint64_t>(k - 1));
                acc[static_cast<size_t>(k)] += wk;
            }
        }
    });
    std::vector<double> wbar(N, 0.0);
    for (std::int64_t c = 0; c < chunks; ++c)
        for (size_t k = 0; k < N; ++k) wbar[k] += wsum[static_cast<size_t>(c)][k];
    for (size_t k = 0; k < N; ++k) wbar[k] /= static_cast<double>(paths);

    // mean slots: E[Y] = p + r wbar, E[Z] = r, E[u] = u0 + u1 wbar
    std::vector<double> Ym(N * n), Zm(N * n), Um(N * m);
    for (size_t k = 0; k < N; ++k) {
        for (int i = 0; i < n; ++i) {
            Ym[k * static_cast<size_t>(n) + static_cast<size_t>(i)] =
                pm[k * static_cast<size_t>(n) + static_cast<size_t>(i)] +
                rl[k * static_cast<size_t>(n) + static_cast<size_t>(i)] * wbar[k];
            Zm[k * static_cast<size_t>(n) + static_cast<size_t>(i)] =
                rl[k * static_cast<size_t>(n) + static_cast<size_t>(i)];
        }
        for (int i = 0; i < m; ++i)
            Um[k * static_cast<size_t>(m) + static_cast<size_t>(i)] =
                u0[k * static_cast<size_t>(m) + static_cast<size_t>(i)] +
                u1[k * static_cast<size_t>(m) + static_cast<size_t>(i)] * wbar[k];
    }

    double common = 0.0;
    {
        std::vector<double> zn(static_cast<size_t>(n), 0.0), zm(static_cast<size_t>(m), 0.0);
        for (int k = 0; k < grid.nodes(); ++k) {
            const size_t j = static_cast<size_t>(k);
            common += trapezoid_weight(grid, k) *
                      tab.integrand(j, zn.data(), zn.data(), zm.data(),
                                    Ym.data() + j * static_cast<size_t>(n),
                                    Zm.data() + j * static_cast<size_t>(n),
                                    Um.data() + j * static_cast<size_t>(m));
        }
        Eigen::Map<const Vector> ey0(Ym.data(), n);
        common += ey0.dot(tab.Gh * ey0);
    }

    std::vector<double> sum_j(static_cast<size_t>(chunks), 0.0),
        sum_jj(static_cast<size_t>(chunks), 0.0);
    run_chunks(chunks, workers, [&](std::int64_t c) {
        std::int64_t begin = c * PathEnsemble::kChunk,
                     end = std::min(paths, (c + 1) * PathEnsemble::kChunk);
        std::vector<double> Y(static_cast<size_t>(n)), Z(static_cast<size_t>(n)),
            U(static_cast<size_t>(m)), zn(static_cast<size_t>(n), 0.0),
            zm(static_cast<size_t>(m), 0.0);
        double sj = 0.0, sjj = 0.0;
        for (std::int64_t i = begin; i < end; ++i) {
            NormalStream stream(seed, static_cast<std::uint64_t>(i));
            double wk = 0.0, acc = 0.0, y0_part = 0.0;
            for (int k = 0; k < grid.nodes(); ++k) {
                const size_t j = static_cast<size_t>(k);
                if (k > 0) wk += sqrt_dt * stream(static_cast<std::uint64_t>(k - 1));
                for (int d = 0; d < n; ++d) {
                    Y[static_cast<size_t>(d)] =
                        pm[j * static_cast<size_t>(n) + static_cast<size_t>(d)] +
                        rl[j * static_cast<size_t>(n) + static_cast<size_t>(d)] * wk;
                    Z[static_cast<size_t>(d)] =
                        rl[j * static_cast<size_t>(n) + static_cast<size_t>(d)];
                }
                for (int d = 0; d < m; ++d)
                    U[static_cast<size_t>(d)] =
                        u0[j * static_cast<size_t>(m) + static_cast<size_t>(d)] +
                        u1[j * static_cast<size_t>(m) + static_cast<size_t>(d)] * wk;
                acc += trapezoid_weight(grid, k) *
                       tab.integrand(j, Y.data(), Z.data(), U.data(), zn.data(), zn.data(),
                                     zm.data());
                if (k == 0) {
                    Eigen::Map<const Vector> y0(Y.data(), n);
                    y0_part = y0.dot(tab.G * y0) + 2.0 * tab.g.dot(y0);
                }
            }
            double ji = 0.5 * (acc + y0_part + common);
            sj += ji;
            sjj += ji * ji;
        }
        sum_j[static_cast<size_t>(c)] = sj;
        sum_jj[static_cast<size_t>(c)] = sjj;
    });

    double tj = 0.0, tjj = 0.0;
    for (std::int64_t c = 0; c < chunks; ++c) {
        tj += sum_j[static_cast<size_t>(c)];
        tjj += sum_jj[static_cast<size_t>(c)];
    }
    const double p = static_cast<double>(paths);
    McCost out;
    out.mean = tj / p;
    double var = paths > 1 ? std::max(0.0, (tjj - tj * tj / p) / (p - 1.0)) : 0.0;
    out.stderr_mean = std::sqrt(var / p);
    return out;
}

// ---------------------------------------------------------------------------
// stationarity residual
// ---------------------------------------------------------------------------

StationarityReport stationarity_residual(const ProblemSpec& spec, const ControlLaw& law,
                                         const PathEnsemble& ens, const RiccatiSolution& ric,
                                         const EtaBeta& eta_beta) {
    const Grid& grid = ens.grid();
    const int n = spec.n, m = spec.m;

    ReconstructionTables recon =
        build_reconstruction(spec, ric, eta_beta, law, ens.mean_exact());
    FlatTables tab;
    tab.init_cost(spec, grid);
    tab.init_recon(recon);
    tab.init_dynamics(spec, grid);
    StationarityTables st;
    st.init(spec, grid);

    MeanRecon sample = mean_reconstruction(tab, ens, true);
    MeanRecon exact = mean_reconstruction(tab, ens, false);

    const std::int64_t chunks = ens.chunks();
    const size_t N = static_cast<size_t>(grid.nodes());
    std::vector<double> mexact(N * static_cast<size_t>(n));
    for (size_t k = 0; k < N; ++k)
        for (int d = 0; d < n; ++d)
            mexact[k * static_cast<size_t>(n) + static_cast<size_t>(d)] =
                ens.mean_exact()[k](d);
    struct Partial {
        std::vector<double> node_sum, state_sum;
        double sup = 0.0, sup_exact = 0.0, state_sup = 0.0;
    };
    std::vector<Partial> partials(static_cast<size_t>(chunks));

    run_chunks(chunks, ens.workers(), [&](std::int64_t c) {
        auto [begin, end] = ens.chunk_range(c);
        Partial& pt = partials[static_cast<size_t>(c)];
        pt.node_sum.assign(N, 0.0);
        pt.state_sum.assign(N, 0.0);
        std::vector<double> x, w, F(static_cast<size_t>(n)), Y(static_cast<size_t>(n)),
            Z(static_cast<size_t>(n)), U(static_cast<size_t>(m)), e(static_cast<size_t>(m)),
            yhat(static_cast<size_t>(n)), drift(static_cast<size_t>(n));
        const double dt = grid.dt();
        for (std::int64_t i = begin; i < end; ++i) {
            ens.regenerate(i, x, w);
            for (int k = 0; k < grid.nodes(); ++k) {
                const size_t j = static_cast<size_t>(k);
                const double* xk = x.data() + j * static_cast<size_t>(n);
                for (int d = 0; d < n; ++d)
                    F[static_cast<size_t>(d)] =
                        xk[d] - mexact[j * static_cast<size_t>(n) + static_cast<size_t>(d)];
                tab.reconstruct(j, F.data(), w[j], Y.data(), Z.data(), U.data());

                // sample-mean slots
                st.expr(j, xk, Y.data(), Z.data(), U.data(),
                        sample.X.data() + j * static_cast<size_t>(n),
                        sample.Y.data() + j * static_cast<size_t>(n),
                        sample.Z.data() + j * static_cast<size_t>(n),
                        sample.U.data() + j * static_cast<size_t>(m), e.data());
                double nrm = std::sqrt(dot(m, e.data(), e.data()));
                pt.node_sum[j] += nrm;
                pt.sup = std::max(pt.sup, nrm);

                // exact-mean slots (diagnostic)
                st.expr(j, xk, Y.data(), Z.data(), U.data(),
                        exact.X.data() + j * static_cast<size_t>(n),
                        exact.Y.data() + j * static_cast<size_t>(n),
                        exact.Z.data() + j * static_cast<size_t>(n),
                        exact.U.data() + j * static_cast<size_t>(m), e.data());
                pt.sup_exact = std::max(pt.sup_exact, std::sqrt(dot(m, e.data(), e.data())));

                // state-equation channel: discrete forward integration of the
                // state dynamics driven by the reconstructed (u, Z)
                if (k == 0) {
                    for (int d = 0; d < n; ++d) yhat[static_cast<size_t>(d)] = Y[static_cast<size_t>(d)];
                } else {
                    double gap = 0.0;
                    for (int d = 0; d < n; ++d) {
                        double diff = yhat[static_cast<size_t>(d)] - Y[static_cast<size_t>(d)];
                        gap += diff * diff;
                    }
                    gap = std::sqrt(gap);
                    pt.state_sum[j] += gap;
                    pt.state_sup = std::max(pt.state_sup, gap);
                }
                if (k < grid.steps) {
                    const size_t nn = static_cast<size_t>(n) * n,
                                 nm = static_cast<size_t>(n) * m;
                    matvec(n, n, tab.dA.data() + j * nn, yhat.data(), drift.data(), false);
                    matvec(n, n, tab.dAh.data() + j * nn,
                           exact.Y.data() + j * static_cast<size_t>(n), drift.data(), true);
                    matvec(n, m, tab.dB.data() + j * nm, U.data(), drift.data(), true);
                    matvec(n, m, tab.dBh.data() + j * nm,
                           exact.U.data() + j * static_cast<size_t>(m), drift.data(), true);
                    matvec(n, n, tab.dC.data() + j * nn, Z.data(), drift.data(), true);
                    matvec(n, n, tab.dCh.data() + j * nn,
                           exact.Z.data() + j * static_cast<size_t>(n), drift.data(), true);
                    const double dw = w[j + 1] - w[j];
                    for (int d = 0; d < n; ++d)
                        yhat[static_cast<size_t>(d)] +=
                            dt * (drift[static_cast<size_t>(d)] +
                                  tab.df[j * static_cast<size_t>(n) + static_cast<size_t>(d)]) +
                            Z[static_cast<size_t>(d)] * dw;
                }
            }
        }
    });

    StationarityReport rep;
    rep.paths_used = ens.path_count();
    rep.node_profile.assign(N, 0.0);
    rep.state_node_profile.assign(N, 0.0);
    for (std::int64_t c = 0; c < chunks; ++c) {
        const Partial& pt = partials[static_cast<size_t>(c)];
        for (size_t k = 0; k < N; ++k) {
            rep.node_profile[k] += pt.node_sum[k];
            rep.state_node_profile[k] += pt.state_sum[k];
        }
        rep.sup_residual = std::max(rep.sup_residual, pt.sup);
        rep.sup_residual_exact = std::max(rep.sup_residual_exact, pt.sup_exact);
        rep.state_sup = std::max(rep.state_sup, pt.state_sup);
    }
    const double p = static_cast<double>(ens.path_count());
    for (size_t k = 0; k < N; ++k) {
        rep.node_profile[k] /= p;
        rep.state_node_profile[k] /= p;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// perturbation test
// ---------------------------------------------------------------------------

std::vector<QuadraticFitReport> perturbation_test_multi(
    const ProblemSpec& spec, const ControlLaw& law, const PathEnsemble& ens,
    const RiccatiSolution& ric, const EtaBeta& eta_beta, const TerminalData& zeta,
    const std::vector<AffineProcess>& directions, const std::vector<double>& epsilons) {
    (void)zeta;
    const Grid& grid = ens.grid();
    const int n = spec.n, m = spec.m;
    const int dirs = static_cast<int>(directions.size());
    if (dirs == 0) return {};

    ReconstructionTables recon =
        build_reconstruction(spec, ric, eta_beta, law, ens.mean_exact());
    FlatTables tab;
    tab.init_cost(spec, grid);
    tab.init_recon(recon);
    StationarityTables st;
    st.init(spec, grid);
    MeanRecon sample = mean_reconstruction(tab, ens, true);

    const size_t N = static_cast<size_t>(grid.nodes());
    std::vector<double> mexact(N * n);
    for (size_t k = 0; k < N; ++k)
        for (int d = 0; d < n; ++d)
            mexact[k * static_cast<size_t>(n) + static_cast<size_t>(d)] =
                ens.mean_exact()[k](d);

    // exact homogeneous quadratics and affine state perturbations per direction
    ProblemSpec hom = homogeneous(spec);
    std::vector<double> j0v(static_cast<size_t>(dirs));
    std::vector<std::vector<double>> dp(static_cast<size_t>(dirs)),
        dr(static_cast<size_t>(dirs)), v0(static_cast<size_t>(dirs)),
        v1(static_cast<size_t>(dirs)), dYm(static_cast<size_t>(dirs)),
        dUm(static_cast<size_t>(dirs));
    for (int d = 0; d < dirs; ++d) {
        const AffineProcess& v = directions[static_cast<size_t>(d)];
        j0v[static_cast<size_t>(d)] = evaluate_cost(hom, v, hom.terminal, grid);
        StateSolution delta = solve_state_affine(hom, v, hom.terminal, grid);
        auto& dpd = dp[static_cast<size_t>(d)];
        auto& drd = dr[static_cast<size_t>(d)];
        auto& v0d = v0[static_cast<size_t>(d)];
        auto& v1d = v1[static_cast<size_t>(d)];
        auto& dymd = dYm[static_cast<size_t>(d)];
        auto& dumd = dUm[static_cast<size_t>(d)];
        dpd.resize(N * n);
        drd.resize(N * n);
        v0d.resize(N * m);
        v1d.resize(N * m);
        dymd.resize(N * n);
        dumd.resize(N * m);
        for (int k = 0; k < grid.nodes(); ++k) {
            const size_t j = static_cast<size_t>(k);
            put(dpd, j, delta.y.mean.at(k));
            put(drd, j, delta.y.loading.at(k));
            put(v0d, j, path_at(v.mean, grid, k));
            put(v1d, j, path_at(v.loading, grid, k));
            const double wb = ens.w_mean()[j];
            for (int i = 0; i < n; ++i)
                dymd[j * static_cast<size_t>(n) + static_cast<size_t>(i)] =
                    dpd[j * static_cast<size_t>(n) + static_cast<size_t>(i)] +
                    drd[j * static_cast<size_t>(n) + static_cast<size_t>(i)] * wb;
            for (int i = 0; i < m; ++i)
                dumd[j * static_cast<size_t>(m) + static_cast<size_t>(i)] =
                    v0d[j * static_cast<size_t>(m) + static_cast<size_t>(i)] +
                    v1d[j * static_cast<size_t>(m) + static_cast<size_t>(i)] * wb;
        }
    }

    // common (path-independent) integrand parts per direction and probe;
    // probe 0 is direction-independent
    const double probes[3] = {0.0, 1.0, -1.0};
    std::vector<std::array<double, 3>> common(static_cast<size_t>(dirs), {0.0, 0.0, 0.0});
    {
        std::vector<double> zn(static_cast<size_t>(n), 0.0), zm(static_cast<size_t>(m), 0.0),
            Ym(static_cast<size_t>(n)), Zm(static_cast<size_t>(n)), Um(static_cast<size_t>(m));
        for (int d = 0; d < dirs; ++d) {
            for (int s = 0; s < 3; ++s) {
                double acc = 0.0;
                for (int k = 0; k < grid.nodes(); ++k) {
                    const size_t j = static_cast<size_t>(k);
                    for (int i = 0; i < n; ++i) {
                        const size_t ij = j * static_cast<size_t>(n) + static_cast<size_t>(i);
                        Ym[static_cast<size_t>(i)] =
                            sample.Y[ij] + probes[s] * dYm[static_cast<size_t>(d)][ij];
                        Zm[static_cast<size_t>(i)] =
                            sample.Z[ij] + probes[s] * dr[static_cast<size_t>(d)][ij];
                    }
                    for (int i = 0; i < m; ++i) {
                        const size_t ij = j * static_cast<size_t>(m) + static_cast<size_t>(i);
                        Um[static_cast<size_t>(i)] =
                            sample.U[ij] + probes[s] * dUm[static_cast<size_t>(d)][ij];
                    }
                    acc += trapezoid_weight(grid, k) *
                           tab.integrand(j, zn.data(), zn.data(), zm.data(), Ym.data(),
                                         Zm.data(), Um.data());
                }
                Eigen::Map<const Vector> ey0(sample.Y.data(), n);
                Eigen::Map<const Vector> dy0(dYm[static_cast<size_t>(d)].data(), n);
                Vector ey = ey0 + probes[s] * dy0;
                common[static_cast<size_t>(d)][static_cast<size_t>(s)] =
                    acc + ey.dot(tab.Gh * ey);
            }
        }
    }

    constexpr int kBatches = 16;
    const std::int64_t chunks = ens.chunks();
    struct Partial {
        std::vector<double> a, b, g2, pair;
        std::vector<std::int64_t> count;
    };
    std::vector<Partial> partials(static_cast<size_t>(chunks));
    const std::int64_t total_paths = ens.path_count();

    run_chunks(chunks, ens.workers(), [&](std::int64_t c) {
        auto [begin, end] = ens.chunk_range(c);
        Partial& pt = partials[static_cast<size_t>(c)];
        pt.a.assign(static_cast<size_t>(dirs) * kBatches, 0.0);
        pt.b.assign(static_cast<size_t>(dirs) * kBatches, 0.0);
        pt.g2.assign(static_cast<size_t>(dirs) * kBatches, 0.0);
        pt.pair.assign(static_cast<size_t>(dirs) * kBatches, 0.0);
        pt.count.assign(kBatches, 0);
        std::vector<double> x, w, F(static_cast<size_t>(n)), Y(static_cast<size_t>(n)),
            Z(static_cast<size_t>(n)), U(static_cast<size_t>(m)), Yp(static_cast<size_t>(n)),
            Zp(static_cast<size_t>(n)), Up(static_cast<size_t>(m)), e(static_cast<size_t>(m)),
            zn(static_cast<size_t>(n), 0.0), zm(static_cast<size_t>(m), 0.0);
        std::vector<double> plain0(1), plain_pm(static_cast<size_t>(dirs) * 2),
            y00(1), y0_pm(static_cast<size_t>(dirs) * 2),
            pairing(static_cast<size_t>(dirs));
        for (std::int64_t i = begin; i < end; ++i) {
            ens.regenerate(i, x, w);
            plain0[0] = 0.0;
            y00[0] = 0.0;
            std::fill(plain_pm.begin(), plain_pm.end(), 0.0);
            std::fill(y0_pm.begin(), y0_pm.end(), 0.0);
            std::fill(pairing.begin(), pairing.end(), 0.0);
            for (int k = 0; k < grid.nodes(); ++k) {
                const size_t j = static_cast<size_t>(k);
                const double* xk = x.data() + j * static_cast<size_t>(n);
                const double wt = trapezoid_weight(grid, k);
                for (int d2 = 0; d2 < n; ++d2)
                    F[static_cast<size_t>(d2)] =
                        xk[d2] - mexact[j * static_cast<size_t>(n) + static_cast<size_t>(d2)];
                tab.reconstruct(j, F.data(), w[j], Y.data(), Z.data(), U.data());

                st.expr(j, xk, Y.data(), Z.data(), U.data(),
                        sample.X.data() + j * static_cast<size_t>(n),
                        sample.Y.data() + j * static_cast<size_t>(n),
                        sample.Z.data() + j * static_cast<size_t>(n),
                        sample.U.data() + j * static_cast<size_t>(m), e.data());

                plain0[0] += wt * tab.integrand(j, Y.data(), Z.data(), U.data(), zn.data(),
                                                zn.data(), zm.data());
                if (k == 0) {
                    Eigen::Map<const Vector> y0(Y.data(), n);
                    y00[0] = y0.dot(tab.G * y0) + 2.0 * tab.g.dot(y0);
                }

                for (int d = 0; d < dirs; ++d) {
                    const auto& dpd = dp[static_cast<size_t>(d)];
                    const auto& drd = dr[static_cast<size_t>(d)];
                    const auto& v0d = v0[static_cast<size_t>(d)];
                    const auto& v1d = v1[static_cast<size_t>(d)];
                    for (int i2 = 0; i2 < m; ++i2) {
                        const size_t ij = j * static_cast<size_t>(m) + static_cast<size_t>(i2);
                        pairing[static_cast<size_t>(d)] +=
                            wt * e[static_cast<size_t>(i2)] * (v0d[ij] + v1d[ij] * w[j]);
                    }
                    for (int s = 0; s < 2; ++s) {  // probes +1 and -1
                        const double ps = s == 0 ? 1.0 : -1.0;
                        for (int i2 = 0; i2 < n; ++i2) {
                            const size_t ij =
                                j * static_cast<size_t>(n) + static_cast<size_t>(i2);
                            const double dy = dpd[ij] + drd[ij] * w[j];
                            Yp[static_cast<size_t>(i2)] = Y[static_cast<size_t>(i2)] + ps * dy;
                            Zp[static_cast<size_t>(i2)] =
                                Z[static_cast<size_t>(i2)] + ps * drd[ij];
                        }
                        for (int i2 = 0; i2 < m; ++i2) {
                            const size_t ij =
                                j * static_cast<size_t>(m) + static_cast<size_t>(i2);
                            Up[static_cast<size_t>(i2)] =
                                U[static_cast<size_t>(i2)] + ps * (v0d[ij] + v1d[ij] * w[j]);
                        }
                        plain_pm[static_cast<size_t>(d) * 2 + static_cast<size_t>(s)] +=
                            wt * tab.integrand(j, Yp.data(), Zp.data(), Up.data(), zn.data(),
                                               zn.data(), zm.data());
                        if (k == 0) {
                            Eigen::Map<const Vector> y0(Yp.data(), n);
                            y0_pm[static_cast<size_t>(d) * 2 + static_cast<size_t>(s)] =
                                y0.dot(tab.G * y0) + 2.0 * tab.g.dot(y0);
                        }
                    }
                }
            }
            const int batch = static_cast<int>((i * kBatches) / total_paths);
            pt.count[static_cast<size_t>(batch)] += 1;
            for (int d = 0; d < dirs; ++d) {
                const double j0 =
                    0.5 * (plain0[0] + y00[0] + common[static_cast<size_t>(d)][0]);
                const double jp =
                    0.5 * (plain_pm[static_cast<size_t>(d) * 2] +
                           y0_pm[static_cast<size_t>(d) * 2] +
                           common[static_cast<size_t>(d)][1]);
                const double jm =
                    0.5 * (plain_pm[static_cast<size_t>(d) * 2 + 1] +
                           y0_pm[static_cast<size_t>(d) * 2 + 1] +
                           common[static_cast<size_t>(d)][2]);
                const size_t slot =
                    static_cast<size_t>(d) * kBatches + static_cast<size_t>(batch);
                pt.a[slot] += j0;
                pt.b[slot] += 0.5 * (jp - jm);
                pt.g2[slot] += 0.5 * (jp + jm) - j0;
                pt.pair[slot] += pairing[static_cast<size_t>(d)];
            }
        }
    });

    std::vector<QuadraticFitReport> reports(static_cast<size_t>(dirs));
    std::vector<std::int64_t> n_b(kBatches, 0);
    for (std::int64_t c = 0; c < chunks; ++c)
        for (int b = 0; b < kBatches; ++b)
            n_b[static_cast<size_t>(b)] += partials[static_cast<size_t>(c)].count
                                               [static_cast<size_t>(b)];

    for (int d = 0; d < dirs; ++d) {
        std::vector<double> a_b(kBatches, 0.0), b_b(kBatches, 0.0), g_b(kBatches, 0.0),
            p_b(kBatches, 0.0);
        for (std::int64_t c = 0; c < chunks; ++c)
            for (int b = 0; b < kBatches; ++b) {
                const size_t slot =
                    static_cast<size_t>(d) * kBatches + static_cast<size_t>(b);
                a_b[static_cast<size_t>(b)] += partials[static_cast<size_t>(c)].a[slot];
                b_b[static_cast<size_t>(b)] += partials[static_cast<size_t>(c)].b[slot];
                g_b[static_cast<size_t>(b)] += partials[static_cast<size_t>(c)].g2[slot];
                p_b[static_cast<size_t>(b)] += partials[static_cast<size_t>(c)].pair[slot];
            }
        double alpha = 0.0, beta = 0.0, gamma = 0.0, pairing_sum = 0.0;
        for (int b = 0; b < kBatches; ++b) {
            alpha += a_b[static_cast<size_t>(b)];
            beta += b_b[static_cast<size_t>(b)];
            gamma += g_b[static_cast<size_t>(b)];
            pairing_sum += p_b[static_cast<size_t>(b)];
        }
        const double p = static_cast<double>(total_paths);
        alpha /= p;
        beta /= p;
        gamma /= p;
        pairing_sum /= p;

        auto batch_stderr = [&](const std::vector<double>& sums) {
            double mean = 0.0;
            int used = 0;
            double vals[kBatches];
            for (int b = 0; b < kBatches; ++b) {
                if (n_b[static_cast<size_t>(b)] == 0) continue;
                vals[used] = sums[static_cast<size_t>(b)] /
                             static_cast<double>(n_b[static_cast<size_t>(b)]);
                mean += vals[used];
                ++used;
            }
            if (used < 2) return 0.0;
            mean /= used;
            double var = 0.0;
            for (int b = 0; b < used; ++b) var += (vals[b] - mean) * (vals[b] - mean);
            var /= (used - 1);
            return std::sqrt(var / used);
        };

        QuadraticFitReport& rep = reports[static_cast<size_t>(d)];
        rep.j0_v = j0v[static_cast<size_t>(d)];
        rep.c1_pairing = pairing_sum;
        rep.epsilons = epsilons;
        rep.costs.reserve(epsilons.size());
        for (double eps : epsilons) rep.costs.push_back(alpha + beta * eps + gamma * eps * eps);

        const int rows = static_cast<int>(epsilons.size());
        Matrix vand(rows, 3);
        Vector ys(rows);
        for (int r = 0; r < rows; ++r) {
            vand(r, 0) = 1.0;
            vand(r, 1) = epsilons[static_cast<size_t>(r)];
            vand(r, 2) = epsilons[static_cast<size_t>(r)] * epsilons[static_cast<size_t>(r)];
            ys(r) = rep.costs[static_cast<size_t>(r)];
        }
        Vector coef = vand.colPivHouseholderQr().solve(ys);
        rep.c0 = coef(0);
        rep.c1 = coef(1);
        rep.c2 = coef(2);
        rep.fit_residual = (vand * coef - ys).cwiseAbs().maxCoeff();
        rep.c1_stderr = batch_stderr(b_b);
        rep.c2_stderr = batch_stderr(g_b);

        rep.passed_linear = std::abs(rep.c1) <= 3.0 * rep.c1_stderr + 1e-12;
        rep.passed_convex = rep.c2 >= -1e-10;
        // J(u* + eps v) - J(u*) = eps L + eps^2 J0(0; v): J0 carries its own
        // 1/2, so the eps^2 coefficient equals J0(0; v) itself.
        rep.passed_match =
            std::abs(rep.c2 - rep.j0_v) <= 0.10 * std::abs(rep.j0_v) + 1e-12;
    }
    return reports;
}

QuadraticFitReport perturbation_test(const ProblemSpec& spec, const ControlLaw& law,
                                     const PathEnsemble& ens, const RiccatiSolution& ric,
                                     const EtaBeta& eta_beta, const TerminalData& zeta,
                                     const AffineProcess& v,
                                     const std::vector<double>& epsilons) {
    return perturbation_test_multi(spec, law, ens, ric, eta_beta, zeta, {v}, epsilons)
        .front();
}

// ---------------------------------------------------------------------------
// convexity certificate
// ---------------------------------------------------------------------------

ConvexityCertificate convexity_certificate(const ProblemSpec& spec, const Grid& grid,
                                           const std::optional<HTransform>& h, int family) {
    ConvexityCertificate cert;
    cert.lambda_alpha_family = family;

    NormalFormProblem nf = reduce(spec, grid);
    ProblemSpec target = nf.problem;
    if (h.has_value()) {
        EquivCoeffs coeffs = equivalent_coeffs(target, *h, grid);
        ProblemSpec with_h = spec_with_equivalent_cost(target, *h, coeffs);
        target = reduce(with_h, grid).problem;
    }

    const TildeCoeffs tld = tilde(target);
    cert.min_eig_R22 = std::numeric_limits<double>::infinity();
    cert.min_eig_R22_tilde = std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid.nodes(); ++k) {
        const double t = grid.time(k);
        cert.min_eig_R22 = std::min(cert.min_eig_R22, sym_eig_min(target.R22.eval(t)));
        cert.min_eig_R22_tilde =
            std::min(cert.min_eig_R22_tilde, sym_eig_min(tld.R22.eval(t)));
    }

    bool ric_ok = false;
    try {
        RiccatiSolution ric = solve_upsilon(target, grid);
        cert.min_eig_upsilon = ric.cert.min_eig_upsilon;
        cert.min_eig_upsilon_tilde = ric.cert.min_eig_upsilon_tilde;
        cert.min_eig_weighted = ric.cert.min_eig_weighted;
        cert.min_eig_weighted_tilde = ric.cert.min_eig_weighted_tilde;
        cert.inv_margin_R11 = ric.cert.min_inv_margin_R11;
        cert.inv_margin_R11_tilde = ric.cert.min_inv_margin_R11_tilde;
        ric_ok = true;
    } catch (const SolveError& e) {
        cert.failure = e.what();
        if (e.time() >= 0.0) cert.failure += " at t=" + std::to_string(e.time());
    }

    cert.passed = ric_ok && cert.min_eig_R22 >= 1e-8 && cert.min_eig_R22_tilde >= 1e-8 &&
                  cert.min_eig_upsilon >= -1e-8 && cert.min_eig_upsilon_tilde >= -1e-8 &&
                  cert.min_eig_weighted >= -1e-8 && cert.min_eig_weighted_tilde >= -1e-8;

    // sampled convexity modulus on the original homogeneous problem
    ProblemSpec hom = homogeneous(spec);
    double alpha = std::numeric_limits<double>::infinity();
    for (int i = 0; i < family; ++i) {
        NormalStream stream(0xA1FA5EEDull, static_cast<std::uint64_t>(i));
        Vector v0(spec.m), v1(spec.m);
        for (int d = 0; d < spec.m; ++d) {
            v0(d) = stream(static_cast<std::uint64_t>(2 * d));
            v1(d) = stream(static_cast<std::uint64_t>(2 * d + 1));
        }
        AffineProcess v{MatrixPath::constant(grid, v0), MatrixPath::constant(grid, v1)};
        double j0 = evaluate_cost(hom, v, hom.terminal, grid);
        double energy = spec.T * v0.squaredNorm() + 0.5 * spec.T * spec.T * v1.squaredNorm();
        alpha = std::min(alpha, j0 / energy);
    }
    cert.alpha_empirical = alpha;
    return cert;
}

}  // namespace mflq
