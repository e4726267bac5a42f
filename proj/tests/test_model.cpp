#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mflq/model.hpp"

#include "fixtures.hpp"

using namespace mflq;
using namespace mflq::testing;

TEST_CASE("validate: example fixtures pass") {
    CHECK(validate(example61()).passed);
    CHECK(validate(example62()).passed);
}

TEST_CASE("validate: asymmetric weight is reported") {
    ProblemSpec s = example61();
    Matrix bad(1, 1);
    bad << 1.0;
    s.R22 = CoeffFn::constant(bad);  // still symmetric in 1x1; use 2x2 problem
    ProblemSpec s2 = zero_spec(2, 2, 1.0);
    Matrix asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    s2.R22 = CoeffFn::constant(asym);
    ValidationReport rep = validate(s2);
    CHECK_FALSE(rep.passed);
    bool mentions_r22 = false;
    for (const auto& v : rep.violations) mentions_r22 |= v.find("R22") != std::string::npos;
    CHECK(mentions_r22);
}

TEST_CASE("validate: dimension mismatch is reported") {
    ProblemSpec s = zero_spec(2, 1, 1.0);
    s.B = CoeffFn::constant(Matrix::Zero(2, 2));  // n x (m+1)
    ValidationReport rep = validate(s);
    CHECK_FALSE(rep.passed);
    bool mentions_b = false;
    for (const auto& v : rep.violations) mentions_b |= v.find("B:") != std::string::npos;
    CHECK(mentions_b);
}

TEST_CASE("validate: nonpositive horizon") {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.T = -2.0;
    CHECK_FALSE(validate(s).passed);
}

TEST_CASE("tilde sums") {
    TildeCoeffs t61 = tilde(example61());
    CHECK(t61.A.eval(0.5)(0, 0) == 0.0);
    CHECK(t61.B.eval(0.5)(0, 0) == 1.0);
    CHECK(t61.R22.eval(0.5)(0, 0) == 1.0);

    TildeCoeffs t62 = tilde(example62());
    CHECK(t62.S1.eval(0.3)(0, 0) == -2.0);
    CHECK(t62.S2.eval(0.3)(0, 0) == -4.0);

    // all hats zero: tilde equals plain
    ProblemSpec plain = example61();
    plain.A_hat = CoeffFn::constant(scalar(0.0));
    plain.B_hat = CoeffFn::constant(scalar(0.0));
    plain.S2_hat = CoeffFn::constant(scalar(0.0));
    plain.R11_hat = CoeffFn::constant(scalar(0.0));
    plain.R22_hat = CoeffFn::constant(scalar(0.0));
    TildeCoeffs tp = tilde(plain);
    CHECK(tp.A.eval(0.2)(0, 0) == plain.A.eval(0.2)(0, 0));
    CHECK(tp.R22.eval(0.2)(0, 0) == plain.R22.eval(0.2)(0, 0));
}

TEST_CASE("coefficient sampling and interpolation") {
    std::vector<double> times{0.0, 0.5, 1.0};
    std::vector<Matrix> vals{scalar(1.0), scalar(3.0), scalar(2.0)};
    CoeffFn fn = CoeffFn::sampled(times, vals);
    CHECK(fn.eval(0.0)(0, 0) == 1.0);   // exact at samples
    CHECK(fn.eval(0.5)(0, 0) == 3.0);
    CHECK(fn.eval(1.0)(0, 0) == 2.0);
    CHECK(fn.eval(0.25)(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(fn.eval(0.75)(0, 0) == doctest::Approx(2.5).epsilon(1e-15));

    CHECK_THROWS_AS(CoeffFn::sampled({0.0, 0.0}, {scalar(1.0), scalar(2.0)}), ShapeError);

    // sum merges the sample grids exactly
    CoeffFn sum = fn + CoeffFn::constant(scalar(1.0));
    CHECK(sum.eval(0.25)(0, 0) == doctest::Approx(3.0).epsilon(1e-15));

    std::vector<double> other_times{0.0, 0.25, 1.0};
    CoeffFn other = CoeffFn::sampled(other_times, {scalar(0.0), scalar(1.0), scalar(0.0)});
    CoeffFn merged = fn + other;
    CHECK(merged.eval(0.25)(0, 0) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(merged.eval(0.5)(0, 0) == doctest::Approx(3.0 + 2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("validate: sampled coefficient must span [0, T]") {
    ProblemSpec s = zero_spec(1, 1, 1.0);
    s.Q = CoeffFn::sampled({0.0, 0.5}, {scalar(0.0), scalar(0.0)});
    ValidationReport rep = validate(s);
    CHECK_FALSE(rep.passed);
}

TEST_CASE("homogeneous strips every inhomogeneity") {
    ProblemSpec s = example61(1.0, 2.0);
    s.g = Vector::Constant(1, 3.0);
    s.q = CoeffFn::constant(scalar(1.0));
    ProblemSpec h = homogeneous(s);
    CHECK(h.g(0) == 0.0);
    CHECK(h.q.eval(0.5)(0, 0) == 0.0);
    CHECK(h.terminal.zeta0(0) == 0.0);
    CHECK(h.terminal.zeta1(0) == 0.0);
    CHECK(h.R22.eval(0.5)(0, 0) == 2.0);  // weights untouched
}
