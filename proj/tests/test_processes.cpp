#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mflq/processes.hpp"

#include "fixtures.hpp"

#include <cmath>

using namespace mflq;
using namespace mflq::testing;

TEST_CASE("solve_eta: example61 with deterministic terminal datum") {
    Grid grid(1.0, 2000);
    ProblemSpec s = example61(1.0, 0.0);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);

    CHECK(eb.residual_mean < 1e-8);
    CHECK(eb.residual_w < 1e-8);
    CHECK(eb.eta.mean.at(grid.steps)(0, 0) == 1.0);   // a(T) = zeta0
    CHECK(eb.eta.loading.at(grid.steps)(0, 0) == 0.0);  // b(T) = zeta1
    for (int k = 0; k < grid.nodes(); ++k) {
        double t = grid.time(k);
        CHECK(std::abs(eb.eta.mean.at(k)(0, 0) - 1.0 / (2.0 - t)) < 1e-8);
        CHECK(eb.eta.loading.at(k)(0, 0) == 0.0);
        CHECK(eb.beta.at(k)(0, 0) == 0.0);
    }
    CHECK(std::abs(eb.eta.mean.at(0)(0, 0) - 0.5) < 1e-8);
}

TEST_CASE("solve_eta: zero terminal datum and no inhomogeneity") {
    Grid grid(1.0, 200);
    ProblemSpec s = example61(0.0, 0.0);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    for (int k = 0; k < grid.nodes(); ++k) {
        CHECK(eb.eta.mean.at(k)(0, 0) == 0.0);
        CHECK(eb.eta.loading.at(k)(0, 0) == 0.0);
    }
}

TEST_CASE("solve_eta: example61 with Brownian terminal datum") {
    Grid grid(1.0, 2000);
    ProblemSpec s = example61(0.0, 1.0);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    // b' = 2b backward from 1, a stays zero (the mean equation is homogeneous
    // and its b-coupling enters through a vanishing coefficient)
    for (int k = 0; k < grid.nodes(); ++k) {
        double t = grid.time(k);
        CHECK(std::abs(eb.eta.loading.at(k)(0, 0) - std::exp(2.0 * (t - 1.0))) < 1e-10);
        CHECK(std::abs(eb.eta.mean.at(k)(0, 0)) < 1e-12);
    }
}

TEST_CASE("solve_eta: pathwise reconstruction error shrinks with the grid") {
    ProblemSpec s = example61(0.0, 1.0);
    auto residual_at = [&](int n) {
        Grid grid(1.0, n);
        RiccatiSolution ric = solve_upsilon(s, grid);
        EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
        return eta_pathwise_residual(s, ric, eb, grid, 7u, 64);
    };
    double coarse = residual_at(250);
    double fine = residual_at(1000);
    CHECK(coarse > 0.0);
    CHECK(coarse / fine > 1.5);
}

TEST_CASE("solve_state_affine: zero data gives the zero state") {
    Grid grid(1.0, 100);
    ProblemSpec s = example61(0.0, 0.0);
    AffineProcess u{MatrixPath::constant(grid, scalar(0.0)),
                    MatrixPath::constant(grid, scalar(0.0))};
    StateSolution st = solve_state_affine(s, u, s.terminal, grid);
    for (int k = 0; k < grid.nodes(); ++k) {
        CHECK(st.y.mean.at(k)(0, 0) == 0.0);
        CHECK(st.z.at(k)(0, 0) == 0.0);
    }
}

TEST_CASE("solve_state_affine: example61 under the zero control") {
    Grid grid(1.0, 2000);
    ProblemSpec s = example61(0.0, 1.0);
    AffineProcess u{MatrixPath::constant(grid, scalar(0.0)),
                    MatrixPath::constant(grid, scalar(0.0))};
    StateSolution st = solve_state_affine(s, u, s.terminal, grid);
    CHECK(st.residual_mean < 1e-8);
    CHECK(st.residual_w < 1e-8);
    for (int k = 0; k < grid.nodes(); ++k) {
        double t = grid.time(k);
        CHECK(std::abs(st.y.loading.at(k)(0, 0) - std::exp(2.0 * (t - 1.0))) < 1e-10);
        CHECK(std::abs(st.y.mean.at(k)(0, 0)) < 1e-12);
    }
    CHECK(std::abs(st.y.mean.at(0)(0, 0)) < 1e-12);                   // Y(0) mean
    CHECK(std::abs(st.z.at(0)(0, 0) - std::exp(-2.0)) < 1e-10);      // Z(0)
    CHECK(st.y.mean.at(grid.steps)(0, 0) == 0.0);                     // p(T) exact
    CHECK(st.y.loading.at(grid.steps)(0, 0) == 1.0);                  // r(T) exact
}

TEST_CASE("solve_state_affine: pure drift integration") {
    // n=m=1, B=1, everything else zero, u = (1, 0): p(t) = t - 1
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.B = CoeffFn::constant(scalar(1.0));
    Grid grid(1.0, 500);
    AffineProcess u{MatrixPath::constant(grid, scalar(1.0)),
                    MatrixPath::constant(grid, scalar(0.0))};
    StateSolution st = solve_state_affine(s, u, s.terminal, grid);
    for (int k = 0; k < grid.nodes(); ++k)
        CHECK(std::abs(st.y.mean.at(k)(0, 0) - (grid.time(k) - 1.0)) < 1e-12);
    CHECK(std::abs(st.y.mean.at(0)(0, 0) + 1.0) < 1e-12);
}

TEST_CASE("adjoint display matches the frozen Euler tables") {
    Grid grid(1.0, 400);
    ProblemSpec s = example62(0.0, 1.0);
    TildeCoeffs tld = tilde(s);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    PathEnsemble ens = simulate_adjoint(s, ric, eb, 3u, 8, 1);

    const int n = s.n;
    for (int k : {0, 133, 400}) {
        const double t = grid.time(k);
        Vector f = Vector::Constant(n, 0.83);
        const double w = -0.41;
        Vector b = eb.eta.loading.at(k);
        Vector a = eb.eta.mean.at(k);

        // centered slots only: must equal Ds f + dw w and Xs f + sw w
        AdjointSlots centered{f, Vector::Zero(n), Vector(b * w), Vector::Zero(n),
                              Vector::Zero(n), Vector::Zero(n)};
        auto [drift_c, diff_c] = adjoint_display(s, tld, ric.upsilon.at(k),
                                                 ric.upsilon_tilde.at(k), t, centered);
        const size_t off_m = static_cast<size_t>(k) * n * n;
        const size_t off_v = static_cast<size_t>(k) * n;
        for (int i = 0; i < n; ++i) {
            double table_drift = ens.drift_state()[off_m + static_cast<size_t>(i)] * f(0) +
                                 ens.drift_w()[off_v + static_cast<size_t>(i)] * w;
            double table_diff = ens.diff_state()[off_m + static_cast<size_t>(i)] * f(0) +
                                ens.diff_w()[off_v + static_cast<size_t>(i)] * w;
            CHECK(std::abs(drift_c(i) - table_drift) < 1e-12);
            CHECK(std::abs(diff_c(i) - table_diff) < 1e-12);
        }

        // mean slots only: the diffusion bracket must equal the constant table
        AdjointSlots means{Vector::Zero(n), ens.mean_exact()[static_cast<size_t>(k)],
                           Vector::Zero(n), a, Vector::Zero(n), b};
        auto [drift_m, diff_m] = adjoint_display(s, tld, ric.upsilon.at(k),
                                                 ric.upsilon_tilde.at(k), t, means);
        (void)drift_m;
        for (int i = 0; i < n; ++i)
            CHECK(std::abs(diff_m(i) - ens.diff_const()[off_v + static_cast<size_t>(i)]) <
                  1e-12);
    }
}

TEST_CASE("simulate_adjoint: zero problem stays at zero") {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.R22 = CoeffFn::constant(scalar(1.0));
    Grid grid(1.0, 100);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    PathEnsemble ens = simulate_adjoint(s, ric, eb, 42u, 64, 1);
    std::vector<double> x, w;
    ens.regenerate(17, x, w);
    for (double v : x) CHECK(v == 0.0);
    for (int k = 0; k < grid.nodes(); ++k) {
        CHECK(ens.mean_sample()[static_cast<size_t>(k)](0) == 0.0);
        CHECK(ens.var_sample()[static_cast<size_t>(k)](0) == 0.0);
    }
}

TEST_CASE("simulate_adjoint: diffusion-free instance is exactly deterministic") {
    // example61 with deterministic terminal datum kills every noise channel
    Grid grid(1.0, 300);
    ProblemSpec s = example61(1.0, 0.0);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    PathEnsemble ens = simulate_adjoint(s, ric, eb, 5u, 128, 2);
    std::vector<double> x, w;
    ens.regenerate(63, x, w);
    for (int k = 0; k < grid.nodes(); ++k) {
        CHECK(x[static_cast<size_t>(k)] == ens.mean_exact()[static_cast<size_t>(k)](0));
        CHECK(ens.var_sample()[static_cast<size_t>(k)](0) == 0.0);
    }
}

TEST_CASE("simulate_adjoint: ensemble mean tracks the exact mean ODE") {
    Grid grid(1.0, 500);
    ProblemSpec s = example61(1.0, 1.0);  // noisy variant with nonzero mean
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    const std::int64_t paths = 20000;
    PathEnsemble ens = simulate_adjoint(s, ric, eb, 11u, paths, 2);
    for (int k : {100, 250, 500}) {
        const size_t j = static_cast<size_t>(k);
        double se = std::sqrt(ens.var_sample()[j](0) / static_cast<double>(paths));
        CHECK(std::abs(ens.mean_sample()[j](0) - ens.mean_exact()[j](0)) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("simulate_adjoint: bitwise reproducibility across worker counts") {
    Grid grid(1.0, 200);
    ProblemSpec s = example61(0.0, 1.0);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    PathEnsemble a = simulate_adjoint(s, ric, eb, 42u, 3000, 1);
    PathEnsemble b = simulate_adjoint(s, ric, eb, 42u, 3000, 8);
    for (int k = 0; k < grid.nodes(); ++k) {
        CHECK(a.mean_sample()[static_cast<size_t>(k)](0) ==
              b.mean_sample()[static_cast<size_t>(k)](0));
        CHECK(a.var_sample()[static_cast<size_t>(k)](0) ==
              b.var_sample()[static_cast<size_t>(k)](0));
        CHECK(a.w_mean()[static_cast<size_t>(k)] == b.w_mean()[static_cast<size_t>(k)]);
    }
    std::vector<double> xa, wa, xb, wb;
    a.regenerate(2517, xa, wa);
    b.regenerate(2517, xb, wb);
    CHECK(xa == xb);
    CHECK(wa == wb);
}
