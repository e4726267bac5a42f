#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mflq/processes.hpp"
#include "mflq/reduction.hpp"
#include "mflq/verify.hpp"

#include "fixtures.hpp"
#include "random_specs.hpp"

#include <cmath>

using namespace mflq;
using namespace mflq::testing;

TEST_CASE("reduce: normal-form input is a fixed point") {
    Grid grid(1.0, 500);
    ProblemSpec s = example61();
    NormalFormProblem nf = reduce(s, grid);
    CHECK(nf.problem == s);
    CHECK(nf.offset(s.terminal) == 0.0);  // Phi stays identically zero
    for (int k = 0; k < grid.nodes(); ++k) CHECK(max_abs(nf.phi.at(k)) == 0.0);
}

TEST_CASE("reduce: scalar worked case A=0, Q=1, R22=1") {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.Q = CoeffFn::constant(scalar(1.0));
    s.R22 = CoeffFn::constant(scalar(1.0));
    s.terminal.zeta0 = Vector::Constant(1, 1.0);
    Grid grid(1.0, 400);
    NormalFormProblem nf = reduce(s, grid);

    for (int k = 0; k < grid.nodes(); ++k) {
        double t = grid.time(k);
        CHECK(std::abs(nf.phi.at(k)(0, 0) + t) < 1e-12);
        CHECK(std::abs(nf.problem.R11.eval(t)(0, 0) + t) < 1e-12);  // R11 - t with R11 = 0
        CHECK(max_abs(nf.problem.Q.eval(t)) == 0.0);
    }
    CHECK(std::abs(nf.offset(s.terminal) - (-0.5)) < 1e-12);
}

TEST_CASE("reduce: singular control weight is rejected") {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.Q = CoeffFn::constant(scalar(1.0));  // forces the non-trivial branch
    CHECK_THROWS_AS(reduce(s, Grid(1.0, 100)), SingularError);
}

TEST_CASE("map_control: identity without cross weights, round trip otherwise") {
    Grid grid(1.0, 100);
    NormalFormProblem nf = reduce(example61(), grid);
    AffineProcess u{MatrixPath::constant(grid, scalar(0.7)),
                    MatrixPath::constant(grid, scalar(-0.3))};
    AffineProcess y{MatrixPath::constant(grid, scalar(0.0)),
                    MatrixPath::constant(grid, scalar(0.0))};
    AffineProcess z{MatrixPath::constant(grid, scalar(0.4)),
                    MatrixPath::constant(grid, scalar(0.2))};
    AffineProcess u0 = map_control(nf, u, MapDirection::ToNormal, y, z);
    for (int k = 0; k < grid.nodes(); ++k) {
        CHECK(u0.mean.at(k) == u.mean.at(k));
        CHECK(u0.loading.at(k) == u.loading.at(k));
    }

    // scalar case with a cross weight: centered shift is R22^-1 R12' z_c
    ProblemSpec s = example61();
    s.R12 = CoeffFn::constant(scalar(1.0));
    NormalFormProblem nf2 = reduce(s, grid);
    AffineProcess u0b = map_control(nf2, u, MapDirection::ToNormal, y, z);
    for (int k = 0; k < grid.nodes(); ++k)
        CHECK(u0b.loading.at(k)(0, 0) ==
              doctest::Approx(u.loading.at(k)(0, 0) + 0.2 / 2.0).epsilon(1e-14));

    AffineProcess back = map_control(nf2, u0b, MapDirection::ToOriginal, y, z);
    for (int k = 0; k < grid.nodes(); ++k) {
        CHECK(std::abs(back.mean.at(k)(0, 0) - u.mean.at(k)(0, 0)) < 1e-12);
        CHECK(std::abs(back.loading.at(k)(0, 0) - u.loading.at(k)(0, 0)) < 1e-12);
    }
}

TEST_CASE("equivalent_coeffs: example62 with h0 = (3, 2)") {
    Grid grid(1.0, 200);
    ProblemSpec s = example62();
    HTransform h = HTransform::constant(grid, scalar(3.0), scalar(2.0));
    EquivCoeffs c = equivalent_coeffs(s, h, grid);
    for (double t : {0.0, 0.37, 1.0}) {
        CHECK(c.Q_h.eval(t)(0, 0) == doctest::Approx(6.0).epsilon(1e-14));
        CHECK(c.S1_h.eval(t)(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
        CHECK(c.S2_h.eval(t)(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(c.N1_h.eval(t)(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(c.Q_h_tilde.eval(t)(0, 0) == doctest::Approx(8.0).epsilon(1e-14));
        CHECK(c.S1_h_tilde.eval(t)(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(c.S2_h_tilde.eval(t)(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
        // display formula R11~ + H = -1 + 3
        CHECK(c.N1_h_tilde.eval(t)(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    }
}

TEST_CASE("equivalent_coeffs: zero h reproduces the cost data") {
    Grid grid(1.0, 100);
    ProblemSpec s = example62();
    HTransform h = HTransform::constant(grid, scalar(0.0), scalar(0.0));
    EquivCoeffs c = equivalent_coeffs(s, h, grid);
    for (double t : {0.0, 0.5, 1.0}) {
        CHECK(c.Q_h.eval(t)(0, 0) == 0.0);
        CHECK(c.S1_h.eval(t)(0, 0) == s.S1.eval(t)(0, 0));
        CHECK(c.N1_h.eval(t)(0, 0) == s.R11.eval(t)(0, 0));
        CHECK(c.q_h.eval(t)(0, 0) == s.q.eval(t)(0, 0));
    }
}

TEST_CASE("equivalent_cost_shift") {
    Grid grid(1.0, 100);
    ProblemSpec s61 = example61();
    HTransform h0 = HTransform::constant(grid, scalar(0.0), scalar(0.0));
    CHECK(equivalent_cost_shift(s61, h0, s61.terminal) == 0.0);

    HTransform hI = HTransform::constant(grid, scalar(1.0), scalar(1.0));
    TerminalData det{Vector::Constant(1, 1.0), Vector::Constant(1, 0.0)};
    CHECK(equivalent_cost_shift(s61, hI, det) == doctest::Approx(0.5).epsilon(1e-15));

    HTransform h32 = HTransform::constant(grid, scalar(3.0), scalar(2.0));
    TerminalData brownian{Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)};
    CHECK(equivalent_cost_shift(example62(), h32, brownian) ==
          doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("cost identities on seeded random specs") {
    // Reduction identity and the equivalent-cost identity,
    // both against the exact affine cost evaluator.
    Grid grid(1.0, 2000);
    TestRng rng(20260811ull);
    const int specs = 6, controls = 2;  // acceptance runs the full 20 x 5 sweep
    for (int is = 0; is < specs; ++is) {
        ProblemSpec s = random_spec(rng, is);
        REQUIRE(validate(s).passed);
        NormalFormProblem nf = reduce(s, grid);
        double offset = nf.offset(s.terminal);
        for (int ic = 0; ic < controls; ++ic) {
            AffineProcess u = random_affine_control(rng, s.m, grid);
            StateSolution st = solve_state_affine(s, u, s.terminal, grid);
            AffineProcess z{st.z, MatrixPath::constant(grid, Matrix::Zero(s.n, 1))};
            AffineProcess u0 = map_control(nf, u, MapDirection::ToNormal, st.y, z);

            double j = evaluate_cost(s, u, s.terminal, grid);
            double j_nf = evaluate_cost(nf.problem, u0, s.terminal, grid);
            CHECK(std::abs(j - (j_nf - offset)) < 1e-6);

            // equivalent-cost family on the reduced problem
            Matrix h_sym = rng.symmetric(s.n, 0.5);
            Matrix ht_sym = rng.symmetric(s.n, 0.5);
            HTransform h = HTransform::constant(grid, h_sym, ht_sym);
            EquivCoeffs coeffs = equivalent_coeffs(nf.problem, h, grid);
            ProblemSpec spec_h = spec_with_equivalent_cost(nf.problem, h, coeffs);
            double shift = equivalent_cost_shift(nf.problem, h, s.terminal);
            double j_h = evaluate_cost(spec_h, u0, s.terminal, grid);
            CHECK(std::abs(j_nf - (j_h - shift)) < 1e-6);
        }
    }
}

TEST_CASE("reduce is idempotent") {
    Grid grid(1.0, 300);
    TestRng rng(99ull);
    ProblemSpec s = random_spec(rng, 1);
    NormalFormProblem nf = reduce(s, grid);
    NormalFormProblem nf2 = reduce(nf.problem, grid);
    CHECK(nf2.problem == nf.problem);
}
