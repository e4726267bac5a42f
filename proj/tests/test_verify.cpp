#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mflq/verify.hpp"

#include "fixtures.hpp"

#include <cmath>

using namespace mflq;
using namespace mflq::testing;

namespace {

struct Solved {
    ProblemSpec spec;
    Grid grid;
    RiccatiSolution ric;
    EtaBeta eb;
    ControlLaw law;
    PathEnsemble ens;
};

Solved solve61(double zeta0, double zeta1, int n_steps, std::int64_t paths,
               std::uint64_t seed = 42u) {
    Solved s{example61(zeta0, zeta1), Grid(1.0, n_steps), {}, {}, {}, {}};
    s.ric = solve_upsilon(s.spec, s.grid);
    s.eb = solve_eta(s.spec, s.ric, s.spec.terminal, s.grid);
    s.law = build_control_law(s.spec, s.ric, s.eb, s.grid);
    s.ens = simulate_adjoint(s.spec, s.ric, s.eb, seed, paths, 2);
    return s;
}

AffineProcess zero_control(const Grid& grid, int m) {
    return {MatrixPath::constant(grid, Matrix::Zero(m, 1)),
            MatrixPath::constant(grid, Matrix::Zero(m, 1))};
}

}  // namespace

TEST_CASE("evaluate_cost: zero problem") {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    Grid grid(1.0, 100);
    AffineProcess u{MatrixPath::constant(grid, scalar(1.0)),
                    MatrixPath::constant(grid, scalar(0.0))};
    CHECK(evaluate_cost(s, u, s.terminal, grid) == 0.0);
}

TEST_CASE("evaluate_cost: hand-quadrature oracle") {
    // only R22 = 2, R22_hat = -1; u = (1, 1): J = 1/2 int (2(1+t) - 1) dt = 1
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.R22 = CoeffFn::constant(scalar(2.0));
    s.R22_hat = CoeffFn::constant(scalar(-1.0));
    Grid grid(1.0, 2000);
    AffineProcess u{MatrixPath::constant(grid, scalar(1.0)),
                    MatrixPath::constant(grid, scalar(1.0))};
    CHECK(std::abs(evaluate_cost(s, u, s.terminal, grid) - 1.0) < 1e-12);
}

TEST_CASE("evaluate_cost: example61 zero control against closed form and MC") {
    // Y = (0, e^{2(t-1)}), Z = e^{2(t-1)}: J = -int e^{4(t-1)} dt = -(1-e^-4)/4
    Grid grid(1.0, 2000);
    ProblemSpec s = example61(0.0, 1.0);
    AffineProcess u = zero_control(grid, 1);
    double j = evaluate_cost(s, u, s.terminal, grid);
    const double closed = -(1.0 - std::exp(-4.0)) / 4.0;
    CHECK(std::abs(j - closed) < 1e-6);  // quadrature-limited at N=2000

    McCost mc = mc_cost_affine(s, u, s.terminal, grid, 1234u, 40000, 2);
    CHECK(std::abs(mc.mean - j) <= 3.0 * mc.stderr_mean + 1e-6);
    CHECK(mc.stderr_mean > 0.0);
}

TEST_CASE("evaluate_cost: quadratic in the control direction") {
    Grid grid(1.0, 500);
    ProblemSpec s = example62(0.3, 0.7);
    AffineProcess u{MatrixPath::constant(grid, scalar(0.4)),
                    MatrixPath::constant(grid, scalar(-0.2))};
    AffineProcess v{MatrixPath::constant(grid, scalar(-0.9)),
                    MatrixPath::constant(grid, scalar(0.5))};
    auto j_at = [&](double eps) {
        AffineProcess w{MatrixPath::constant(grid, Matrix(u.mean.at(0) + eps * v.mean.at(0))),
                        MatrixPath::constant(grid,
                                             Matrix(u.loading.at(0) + eps * v.loading.at(0)))};
        return evaluate_cost(s, w, s.terminal, grid);
    };
    // three points pin the parabola; a fourth must land on it
    double j0 = j_at(0.0), j1 = j_at(1.0), jm = j_at(-1.0);
    double c2 = 0.5 * (j1 + jm) - j0;
    double c1 = 0.5 * (j1 - jm);
    double predicted = j0 + 0.5 * c1 + 0.25 * c2;
    CHECK(std::abs(j_at(0.5) - predicted) < 1e-9);
}

TEST_CASE("mc_cost: zero problem") {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.R22 = CoeffFn::constant(scalar(1.0));
    Grid grid(1.0, 100);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    ControlLaw law = build_control_law(s, ric, eb, grid);
    PathEnsemble ens = simulate_adjoint(s, ric, eb, 42u, 256, 1);
    McCost mc = mc_cost(s, law, ens, ric, eb, s.terminal);
    CHECK(mc.mean == 0.0);
    CHECK(mc.stderr_mean == 0.0);
}

TEST_CASE("mc_cost: example61 agrees with the closed-form value") {
    SUBCASE("deterministic terminal datum (degenerate ensemble)") {
        Solved s = solve61(1.0, 0.0, 2000, 4000);
        McCost mc = mc_cost(s.spec, s.law, s.ens, s.ric, s.eb, s.spec.terminal);
        ValueBreakdown v = optimal_value(s.spec, s.ric, s.eb, s.grid);
        CHECK(std::abs(mc.mean - v.total) <= 3.0 * mc.stderr_mean + 1e-6);
        CHECK(std::abs(v.total - (-0.25)) < 1e-6);
    }
    SUBCASE("Brownian terminal datum") {
        Solved s = solve61(0.0, 1.0, 1000, 20000);
        McCost mc = mc_cost(s.spec, s.law, s.ens, s.ric, s.eb, s.spec.terminal);
        ValueBreakdown v = optimal_value(s.spec, s.ric, s.eb, s.grid);
        CHECK(mc.stderr_mean > 0.0);
        CHECK(std::abs(mc.mean - v.total) <= 3.0 * mc.stderr_mean + 1e-6);
        // optimality: the sampled cost never undershoots the value
        CHECK(mc.mean >= v.total - 3.0 * mc.stderr_mean - 1e-6);
    }
}

TEST_CASE("stationarity_residual: zero problem gives exact zero") {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.R22 = CoeffFn::constant(scalar(1.0));
    Grid grid(1.0, 100);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    ControlLaw law = build_control_law(s, ric, eb, grid);
    PathEnsemble ens = simulate_adjoint(s, ric, eb, 42u, 128, 1);
    StationarityReport rep = stationarity_residual(s, law, ens, ric, eb);
    CHECK(rep.sup_residual == 0.0);
    CHECK(rep.state_sup == 0.0);
}

TEST_CASE("stationarity_residual: example61 synthesized law") {
    Solved s = solve61(0.0, 1.0, 2000, 10000);
    StationarityReport rep = stationarity_residual(s.spec, s.law, s.ens, s.ric, s.eb);
    double profile_sup = 0.0;
    for (double v : rep.node_profile) profile_sup = std::max(profile_sup, v);
    CHECK(profile_sup <= 5e-2);
    // exact-mean slots: the construction satisfies the expression identically
    CHECK(rep.sup_residual_exact < 1e-10);
    CHECK(rep.paths_used == 10000);

    // a tampered gain is detected
    ControlLaw bad = s.law;
    for (int k = 0; k < s.grid.nodes(); ++k) bad.K.at(k)(0, 0) += 0.1;
    StationarityReport worse = stationarity_residual(s.spec, bad, s.ens, s.ric, s.eb);
    double worse_sup = 0.0;
    for (double v : worse.node_profile) worse_sup = std::max(worse_sup, v);
    CHECK(worse_sup > 10.0 * profile_sup);
    CHECK(worse.sup_residual_exact > 1e-3);
}

TEST_CASE("stationarity_residual: state channel shrinks with the grid") {
    Solved coarse = solve61(0.0, 1.0, 500, 2000, 7u);
    Solved fine = solve61(0.0, 1.0, 2000, 2000, 7u);
    StationarityReport rc = stationarity_residual(coarse.spec, coarse.law, coarse.ens,
                                                  coarse.ric, coarse.eb);
    StationarityReport rf =
        stationarity_residual(fine.spec, fine.law, fine.ens, fine.ric, fine.eb);
    CHECK(rc.state_sup > 0.0);
    CHECK(rf.state_sup < rc.state_sup);
}

TEST_CASE("perturbation_test: zero direction") {
    Solved s = solve61(0.0, 1.0, 500, 2000);
    AffineProcess v = zero_control(s.grid, 1);
    QuadraticFitReport rep = perturbation_test(s.spec, s.law, s.ens, s.ric, s.eb,
                                               s.spec.terminal, v,
                                               {-0.2, -0.1, 0.0, 0.1, 0.2});
    CHECK(rep.c1 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.c2 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.j0_v == 0.0);
    CHECK(rep.passed_linear);
    CHECK(rep.passed_convex);
    CHECK(rep.passed_match);
}

TEST_CASE("perturbation_test: example61 constant direction") {
    Solved s = solve61(0.0, 1.0, 1000, 20000);
    AffineProcess v{MatrixPath::constant(s.grid, scalar(1.0)),
                    MatrixPath::constant(s.grid, scalar(0.0))};
    QuadraticFitReport rep = perturbation_test(s.spec, s.law, s.ens, s.ric, s.eb,
                                               s.spec.terminal, v,
                                               {-0.2, -0.1, 0.0, 0.1, 0.2});
    CHECK(rep.fit_residual < 1e-9);
    CHECK(rep.j0_v > 0.0);
    CHECK(rep.passed_linear);
    CHECK(rep.passed_convex);
    // the eps^2 coefficient recovers the homogeneous quadratic itself
    CHECK(std::abs(rep.c2 - rep.j0_v) <= 0.10 * std::abs(rep.j0_v));
    CHECK(rep.passed_match);
    // off-optimum controls cost strictly more than the synthesized law
    CHECK(rep.costs.front() > rep.c0 + 1e-3);
    CHECK(rep.costs.back() > rep.c0 + 1e-3);
}

TEST_CASE("perturbation_test_multi matches single-direction runs") {
    Solved s = solve61(0.0, 1.0, 500, 4000);
    std::vector<AffineProcess> family{
        {MatrixPath::constant(s.grid, scalar(1.0)), MatrixPath::constant(s.grid, scalar(0.0))},
        {MatrixPath::constant(s.grid, scalar(-0.3)),
         MatrixPath::constant(s.grid, scalar(0.8))}};
    auto multi = perturbation_test_multi(s.spec, s.law, s.ens, s.ric, s.eb, s.spec.terminal,
                                         family, {-0.2, 0.0, 0.2});
    for (size_t d = 0; d < family.size(); ++d) {
        QuadraticFitReport single = perturbation_test(
            s.spec, s.law, s.ens, s.ric, s.eb, s.spec.terminal, family[d], {-0.2, 0.0, 0.2});
        CHECK(multi[d].c0 == doctest::Approx(single.c0).epsilon(1e-12));
        CHECK(multi[d].c1 == doctest::Approx(single.c1).epsilon(1e-12));
        CHECK(multi[d].c2 == doctest::Approx(single.c2).epsilon(1e-12));
        CHECK(multi[d].j0_v == single.j0_v);
    }
}

TEST_CASE("perturbation_test: example62 Brownian direction has convex homogeneous cost") {
    Grid grid(1.0, 2000);
    ProblemSpec hom = homogeneous(example62());
    AffineProcess v{MatrixPath::constant(grid, scalar(0.0)),
                    MatrixPath::constant(grid, scalar(1.0))};
    CHECK(evaluate_cost(hom, v, hom.terminal, grid) > 0.0);
}

TEST_CASE("convexity_certificate: example61 passes directly") {
    Grid grid(1.0, 2000);
    ConvexityCertificate cert = convexity_certificate(example61(), grid);
    CHECK(cert.passed);
    CHECK(cert.failure.empty());
    CHECK(cert.min_eig_R22 == doctest::Approx(2.0));
    CHECK(cert.min_eig_R22_tilde == doctest::Approx(1.0));
    CHECK(cert.min_eig_upsilon >= -1e-8);
    CHECK(cert.min_eig_upsilon_tilde >= -1e-8);
    CHECK(cert.min_eig_weighted >= -1e-8);
    CHECK(cert.min_eig_weighted_tilde >= -1e-8);
    // 1 - Upsilon >= 1/2, 1 - 2 Upsilon >= e^-4
    CHECK(cert.inv_margin_R11 == doctest::Approx(0.5 + std::exp(-4.0) / 2.0).epsilon(1e-6));
    CHECK(cert.inv_margin_R11_tilde == doctest::Approx(std::exp(-4.0)).epsilon(1e-6));
    CHECK(cert.alpha_empirical > 0.0);
}

TEST_CASE("convexity_certificate: example62 with h0 = (3, 2)") {
    Grid grid(1.0, 2000);
    HTransform h = HTransform::constant(grid, scalar(3.0), scalar(2.0));
    ConvexityCertificate cert = convexity_certificate(example62(), grid, h);
    CHECK(cert.passed);
    CHECK(cert.min_eig_R22 == doctest::Approx(1.0));
    CHECK(cert.min_eig_R22_tilde == doctest::Approx(1.0));
    CHECK(cert.alpha_empirical > 0.0);
}

TEST_CASE("full pipeline on a matrix-valued problem with inhomogeneities") {
    // n = 2, m = 2, every channel populated: shape or transpose mistakes in
    // the flattened tables break the exact-mean stationarity identity.
    ProblemSpec s = zero_spec(2, 2, 1.0);
    Matrix a(2, 2), ah(2, 2), b(2, 2), bh(2, 2), c(2, 2), ch(2, 2);
    a << 0.3, -0.2, 0.1, 0.4;
    ah << -0.1, 0.2, 0.0, -0.3;
    b << 1.0, 0.2, -0.3, 0.8;
    bh << 0.1, 0.0, 0.2, -0.1;
    c << 0.2, 0.1, -0.1, 0.3;
    ch << 0.0, -0.2, 0.1, 0.0;
    s.A = CoeffFn::constant(a);
    s.A_hat = CoeffFn::constant(ah);
    s.B = CoeffFn::constant(b);
    s.B_hat = CoeffFn::constant(bh);
    s.C = CoeffFn::constant(c);
    s.C_hat = CoeffFn::constant(ch);
    Matrix s1(2, 2), s2(2, 2);
    s1 << 0.2, -0.1, 0.3, 0.1;
    s2 << -0.2, 0.1, 0.0, 0.3;
    s.S1 = CoeffFn::constant(s1);
    s.S2 = CoeffFn::constant(s2);
    Matrix r11(2, 2);
    r11 << 0.3, 0.1, 0.1, -0.2;  // indefinite block
    s.R11 = CoeffFn::constant(r11);
    s.R11_hat = CoeffFn::constant(Matrix(0.1 * Matrix::Identity(2, 2)));
    s.R22 = CoeffFn::constant(Matrix::Identity(2, 2));
    s.R22_hat = CoeffFn::constant(Matrix(0.2 * Matrix::Identity(2, 2)));
    s.f = CoeffFn::constant((Matrix(2, 1) << 0.3, -0.2).finished());
    s.g = (Vector(2) << 0.5, -0.4).finished();
    s.q = CoeffFn::constant((Matrix(2, 1) << -0.3, 0.2).finished());
    s.rho1 = CoeffFn::constant((Matrix(2, 1) << 0.2, 0.4).finished());
    s.rho2 = CoeffFn::constant((Matrix(2, 1) << -0.1, 0.3).finished());
    s.terminal.zeta0 = (Vector(2) << 0.8, -0.5).finished();
    s.terminal.zeta1 = (Vector(2) << 0.4, 0.7).finished();
    REQUIRE(validate(s).passed);
    REQUIRE(is_normal_form(s));

    Grid grid(1.0, 600);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);  // drift match enforced inside
    ControlLaw law = build_control_law(s, ric, eb, grid);
    PathEnsemble ens = simulate_adjoint(s, ric, eb, 99u, 6000, 2);

    // ensemble mean against the exact mean ODE, componentwise
    for (int k : {150, 600})
        for (int d = 0; d < 2; ++d) {
            double se = std::sqrt(ens.var_sample()[static_cast<size_t>(k)](d) / 6000.0);
            CHECK(std::abs(ens.mean_sample()[static_cast<size_t>(k)](d) -
                           ens.mean_exact()[static_cast<size_t>(k)](d)) <= 3.5 * se + 1e-12);
        }

    // the construction satisfies the stationarity expression identically
    StationarityReport st = stationarity_residual(s, law, ens, ric, eb);
    CHECK(st.sup_residual_exact < 1e-9);
    CHECK(st.sup_residual < 0.2);  // sampling-limited at P = 6000

    McCost mc = mc_cost(s, law, ens, ric, eb, s.terminal);
    ValueBreakdown v = optimal_value(s, ric, eb, grid);
    CHECK(std::abs(mc.mean - v.total) <= 3.0 * mc.stderr_mean + 1e-6);

    AffineProcess dir{MatrixPath::constant(grid, (Matrix(2, 1) << 1.0, -0.5).finished()),
                      MatrixPath::constant(grid, (Matrix(2, 1) << 0.3, 0.6).finished())};
    QuadraticFitReport fit =
        perturbation_test(s, law, ens, ric, eb, s.terminal, dir, {-0.2, -0.1, 0.0, 0.1, 0.2});
    CHECK(fit.fit_residual < 1e-9);
    CHECK(fit.passed_linear);
    CHECK(fit.passed_convex);
    CHECK(fit.passed_match);
}

TEST_CASE("full pipeline with rectangular control dimension") {
    // n = 2, m = 1 exercises every non-square block
    ProblemSpec s = zero_spec(2, 1, 1.0);
    Matrix a(2, 2);
    a << 0.2, -0.3, 0.1, 0.5;
    s.A = CoeffFn::constant(a);
    s.B = CoeffFn::constant((Matrix(2, 1) << 1.0, -0.4).finished());
    s.B_hat = CoeffFn::constant((Matrix(2, 1) << 0.2, 0.1).finished());
    s.C = CoeffFn::constant(Matrix(0.3 * Matrix::Identity(2, 2)));
    s.S2 = CoeffFn::constant((Matrix(2, 1) << 0.2, -0.1).finished());
    s.R11 = CoeffFn::constant(Matrix(0.4 * Matrix::Identity(2, 2)));
    s.R22 = CoeffFn::constant(scalar(1.0));
    s.rho2 = CoeffFn::constant(scalar(0.2));
    s.terminal.zeta0 = (Vector(2) << 0.5, 0.0).finished();
    s.terminal.zeta1 = (Vector(2) << 0.0, 0.6).finished();
    REQUIRE(validate(s).passed);

    Grid grid(1.0, 500);
    RiccatiSolution ric = solve_upsilon(s, grid);
    EtaBeta eb = solve_eta(s, ric, s.terminal, grid);
    ControlLaw law = build_control_law(s, ric, eb, grid);
    PathEnsemble ens = simulate_adjoint(s, ric, eb, 31u, 4000, 2);

    StationarityReport st = stationarity_residual(s, law, ens, ric, eb);
    CHECK(st.sup_residual_exact < 1e-9);

    McCost mc = mc_cost(s, law, ens, ric, eb, s.terminal);
    ValueBreakdown v = optimal_value(s, ric, eb, grid);
    CHECK(std::abs(mc.mean - v.total) <= 3.0 * mc.stderr_mean + 1e-6);
}

TEST_CASE("convexity_certificate: negative control weight fails") {
    ProblemSpec s = example61();
    s.R22 = CoeffFn::constant(scalar(-1.0));
    s.R22_hat = CoeffFn::constant(scalar(0.0));
    Grid grid(1.0, 500);
    ConvexityCertificate cert = convexity_certificate(s, grid);
    CHECK_FALSE(cert.passed);
    CHECK(cert.min_eig_R22 == doctest::Approx(-1.0));
}
