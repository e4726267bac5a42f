#include "mflq/riccati.hpp"

#include <algorithm>
#include <cmath>

namespace mflq {

namespace {

double min_sym_eig(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(m), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

double min_singular_value(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues().minCoeff();
}

double max_norm_over_grid(const CoeffFn& fn, const Grid& grid) {
    double mx = 0.0;
    for (int k = 0; k < grid.nodes(); ++k) mx = std::max(mx, fn.eval(grid.time(k)).norm());
    return mx;
}

double max_inv_norm_over_grid(const CoeffFn& fn, const Grid& grid) {
    double mx = 0.0;
    for (int k = 0; k < grid.nodes(); ++k) {
        Matrix v = fn.eval(grid.time(k));
        Matrix inv = solve_linear(v, Matrix::Identity(v.rows(), v.cols()));
        mx = std::max(mx, inv.norm());
    }
    return mx;
}

}  // namespace

std::pair<MatrixPath, MatrixPath> solve_phi(const ProblemSpec& spec, const Grid& grid) {
    const TildeCoeffs tld = tilde(spec);
    auto rhs = [&spec](double t, const Matrix& phi) -> Matrix {
        Matrix a = spec.A.eval(t);
        return -(phi * a + a.transpose() * phi + spec.Q.eval(t));
    };
    auto rhs_tilde = [&tld](double t, const Matrix& phi) -> Matrix {
        Matrix a = tld.A.eval(t);
        return -(phi * a + a.transpose() * phi + tld.Q.eval(t));
    };
    OdeProject sym = [](Matrix& m) { m = symmetrized(m); };
    MatrixPath phi = integrate_ode(rhs, Matrix(-spec.G), grid, Direction::Forward, 1, sym);
    MatrixPath phi_tilde =
        integrate_ode(rhs_tilde, Matrix(-(spec.G + spec.G_hat)), grid, Direction::Forward, 1, sym);
    return {std::move(phi), std::move(phi_tilde)};
}

bool is_normal_form(const ProblemSpec& spec, double tol) {
    const Grid probe(spec.T, 64);
    const TildeCoeffs tld = tilde(spec);
    if (max_abs(spec.G) > tol || max_abs(tld.G) > tol) return false;
    for (int k = 0; k < probe.nodes(); ++k) {
        double t = probe.time(k);
        if (max_abs(spec.Q.eval(t)) > tol || max_abs(tld.Q.eval(t)) > tol) return false;
        if (max_abs(spec.R12.eval(t)) > tol || max_abs(tld.R12.eval(t)) > tol) return false;
    }
    return true;
}

Matrix upsilon_pair_rhs(const ProblemSpec& spec, const TildeCoeffs& tld, double t,
                        const Matrix& state) {
    const int n = spec.n;
    const Matrix ups = state.leftCols(n);
    const Matrix upt = state.rightCols(n);
    const Matrix eye = Matrix::Identity(n, n);

    Matrix a = spec.A.eval(t);
    Matrix x1 = spec.C.eval(t) + ups * spec.S1.eval(t);
    Matrix x2 = spec.B.eval(t) + ups * spec.S2.eval(t);
    Matrix at = tld.A.eval(t);
    Matrix x1t = tld.C.eval(t) + upt * tld.S1.eval(t);
    Matrix x2t = tld.B.eval(t) + upt * tld.S2.eval(t);

    Matrix d(n, 2 * n);
    try {
        Matrix w1 = solve_linear(eye + ups * spec.R11.eval(t), ups);
        Matrix w2 = solve_linear(spec.R22.eval(t), x2.transpose());
        d.leftCols(n) = a * ups + ups * a.transpose() - x1 * w1 * x1.transpose() - x2 * w2;

        Matrix w1t = solve_linear(eye + ups * tld.R11.eval(t), ups);
        Matrix w2t = solve_linear(tld.R22.eval(t), x2t.transpose());
        d.rightCols(n) =
            at * upt + upt * at.transpose() - x1t * w1t * x1t.transpose() - x2t * w2t;
    } catch (const SingularError& e) {
        throw SingularError(std::string("Upsilon equation: ") + e.what(), t);
    }
    return d;
}

namespace {

void fill_upsilon_cert(const ProblemSpec& spec, const Grid& grid, RiccatiSolution& sol) {
    const TildeCoeffs tld = tilde(spec);
    const Matrix eye = Matrix::Identity(spec.n, spec.n);
    RiccatiCert c;
    c.min_eig_upsilon = c.min_eig_upsilon_tilde = std::numeric_limits<double>::infinity();
    c.min_inv_margin_R11 = c.min_inv_margin_R11_tilde = std::numeric_limits<double>::infinity();
    c.min_eig_weighted = c.min_eig_weighted_tilde = std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid.nodes(); ++k) {
        double t = grid.time(k);
        const Matrix& ups = sol.upsilon.at(k);
        const Matrix& upt = sol.upsilon_tilde.at(k);
        Matrix weight = eye + ups * spec.R11.eval(t);
        Matrix weight_t = eye + ups * tld.R11.eval(t);
        c.min_eig_upsilon = std::min(c.min_eig_upsilon, min_sym_eig(ups));
        c.min_eig_upsilon_tilde = std::min(c.min_eig_upsilon_tilde, min_sym_eig(upt));
        c.min_inv_margin_R11 = std::min(c.min_inv_margin_R11, min_singular_value(weight));
        c.min_inv_margin_R11_tilde =
            std::min(c.min_inv_margin_R11_tilde, min_singular_value(weight_t));
        try {
            c.min_eig_weighted =
                std::min(c.min_eig_weighted, min_sym_eig(solve_linear(weight, ups)));
            c.min_eig_weighted_tilde =
                std::min(c.min_eig_weighted_tilde, min_sym_eig(solve_linear(weight_t, ups)));
        } catch (const SingularError& e) {
            throw SingularError(std::string("Upsilon certificate: ") + e.what(), t);
        }
    }
    sol.cert = c;
}

RiccatiSolution solve_upsilon_terminal(const ProblemSpec& spec, const Grid& grid,
                                       const Matrix& terminal) {
    if (!is_normal_form(spec))
        throw ShapeError("solve_upsilon requires a normal-form problem");
    const TildeCoeffs tld = tilde(spec);
    const int n = spec.n;
    Matrix init(n, 2 * n);
    init.leftCols(n) = terminal;
    init.rightCols(n) = terminal;
    OdeProject sym = [n](Matrix& s) {
        s.leftCols(n) = symmetrized(s.leftCols(n));
        s.rightCols(n) = symmetrized(s.rightCols(n));
    };
    MatrixPath stacked = integrate_ode(
        [&spec, &tld](double t, const Matrix& s) { return upsilon_pair_rhs(spec, tld, t, s); },
        init, grid, Direction::Backward, 1, sym);

    RiccatiSolution sol;
    std::vector<Matrix> ups(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> upt(static_cast<size_t>(grid.nodes()));
    for (int k = 0; k < grid.nodes(); ++k) {
        ups[static_cast<size_t>(k)] = stacked.at(k).leftCols(n);
        upt[static_cast<size_t>(k)] = stacked.at(k).rightCols(n);
    }
    sol.upsilon = MatrixPath(grid, std::move(ups));
    sol.upsilon_tilde = MatrixPath(grid, std::move(upt));
    fill_upsilon_cert(spec, grid, sol);
    return sol;
}

}  // namespace

RiccatiSolution solve_upsilon(const ProblemSpec& spec, const Grid& grid) {
    return solve_upsilon_terminal(spec, grid, Matrix::Zero(spec.n, spec.n));
}

RiccatiSolution solve_upsilon_shifted(const ProblemSpec& spec, const Grid& grid,
                                      double lambda) {
    if (!(lambda > 0.0)) throw ShapeError("lambda must be positive");
    return solve_upsilon_terminal(spec, grid,
                                  Matrix((1.0 / lambda) * Matrix::Identity(spec.n, spec.n)));
}

namespace {

// Stacked right-hand side for the forward-problem pair [Pi | PiTilde].
struct PiSystem {
    const ProblemSpec& spec;
    TildeCoeffs tld;
    int n;

    explicit PiSystem(const ProblemSpec& s) : spec(s), tld(tilde(s)), n(s.n) {}

    Matrix operator()(double t, const Matrix& state) const {
        const Matrix pi = state.leftCols(n);
        const Matrix pit = state.rightCols(n);

        Matrix w1 = spec.R11.eval(t) + pi;
        Matrix w2 = spec.R22.eval(t);
        Matrix w1t = tld.R11.eval(t) + pi;
        Matrix w2t = tld.R22.eval(t);
        if (min_sym_eig(w1) <= 0.0 || min_sym_eig(w2) <= 0.0)
            throw SingularError("Pi equation: weighting block lost positivity", t);
        if (min_sym_eig(w1t) <= 0.0 || min_sym_eig(w2t) <= 0.0)
            throw SingularError("Pi tilde equation: weighting block lost positivity", t);

        Matrix y1 = spec.C.eval(t).transpose() * pi + spec.S1.eval(t).transpose();
        Matrix y2 = spec.B.eval(t).transpose() * pi + spec.S2.eval(t).transpose();
        Matrix y1t = tld.C.eval(t).transpose() * pit + tld.S1.eval(t).transpose();
        Matrix y2t = tld.B.eval(t).transpose() * pit + tld.S2.eval(t).transpose();

        Matrix a = spec.A.eval(t);
        Matrix at = tld.A.eval(t);
        Matrix d(n, 2 * n);
        try {
            d.leftCols(n) = -(pi * a + a.transpose() * pi) +
                            y1.transpose() * solve_linear(w1, y1) +
                            y2.transpose() * solve_linear(w2, y2);
            d.rightCols(n) = -(pit * at + at.transpose() * pit) +
                             y1t.transpose() * solve_linear(w1t, y1t) +
                             y2t.transpose() * solve_linear(w2t, y2t);
        } catch (const SingularError& e) {
            throw SingularError(std::string("Pi equation: ") + e.what(), t);
        }
        return d;
    }
};

// Substep count keeping h * (local stiffness rate) below ~0.5; the terminal
// layer rate grows linearly in lambda through the control channel.
int pi_substeps(const ProblemSpec& spec, const Grid& grid, double lambda) {
    const TildeCoeffs tld = tilde(spec);
    double nrm_a = std::max(max_norm_over_grid(spec.A, grid), max_norm_over_grid(tld.A, grid));
    double nrm_b = std::max(max_norm_over_grid(spec.B, grid), max_norm_over_grid(tld.B, grid));
    double nrm_c = std::max(max_norm_over_grid(spec.C, grid), max_norm_over_grid(tld.C, grid));
    double nrm_s = std::max(max_norm_over_grid(spec.S1, grid), max_norm_over_grid(spec.S2, grid));
    nrm_s = std::max(nrm_s, std::max(max_norm_over_grid(tld.S1, grid),
                                     max_norm_over_grid(tld.S2, grid)));
    double inv_r22 =
        std::max(max_inv_norm_over_grid(spec.R22, grid), max_inv_norm_over_grid(tld.R22, grid));
    double rate = 2.0 * nrm_a + nrm_c * nrm_c +
                  2.0 * (lambda * nrm_b * nrm_b + nrm_b * nrm_s) * inv_r22;
    int sub = static_cast<int>(std::ceil(grid.dt() * rate / 0.5));
    return std::clamp(sub, 1, 4096);
}

}  // namespace

PiSolution solve_pi_lambda(const ProblemSpec& spec, const Grid& grid, double lambda) {
    if (!is_normal_form(spec))
        throw ShapeError("solve_pi_lambda requires a normal-form problem");
    if (!(lambda > 0.0)) throw ShapeError("lambda must be positive");

    PiSystem sys(spec);
    const int n = spec.n;
    Matrix init(n, 2 * n);
    init.leftCols(n) = lambda * Matrix::Identity(n, n);
    init.rightCols(n) = lambda * Matrix::Identity(n, n);
    OdeProject sym = [n](Matrix& s) {
        s.leftCols(n) = symmetrized(s.leftCols(n));
        s.rightCols(n) = symmetrized(s.rightCols(n));
    };
    const int substeps = pi_substeps(spec, grid, lambda);
    MatrixPath stacked = integrate_ode(
        [&sys](double t, const Matrix& s) { return sys(t, s); }, init, grid,
        Direction::Backward, substeps, sym);

    PiSolution sol;
    sol.lambda = lambda;
    std::vector<Matrix> pi(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> pit(static_cast<size_t>(grid.nodes()));
    for (int k = 0; k < grid.nodes(); ++k) {
        pi[static_cast<size_t>(k)] = stacked.at(k).leftCols(n);
        pit[static_cast<size_t>(k)] = stacked.at(k).rightCols(n);
    }
    sol.pi = MatrixPath(grid, std::move(pi));
    sol.pi_tilde = MatrixPath(grid, std::move(pit));

    // positivity certificate: assembled weighting blocks at the nodes
    const TildeCoeffs tld = tilde(spec);
    const int m = spec.m;
    sol.weight_cert = sol.weight_cert_tilde = std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid.nodes(); ++k) {
        double t = grid.time(k);
        Matrix block(n + m, n + m);
        block.setZero();
        block.topLeftCorner(n, n) = spec.R11.eval(t) + sol.pi.at(k);
        block.topRightCorner(n, m) = spec.R12.eval(t);
        block.bottomLeftCorner(m, n) = spec.R12.eval(t).transpose();
        block.bottomRightCorner(m, m) = spec.R22.eval(t);
        sol.weight_cert = std::min(sol.weight_cert, min_sym_eig(block));
        block.topLeftCorner(n, n) = tld.R11.eval(t) + sol.pi.at(k);
        block.topRightCorner(n, m) = tld.R12.eval(t);
        block.bottomLeftCorner(m, n) = tld.R12.eval(t).transpose();
        block.bottomRightCorner(m, m) = tld.R22.eval(t);
        sol.weight_cert_tilde = std::min(sol.weight_cert_tilde, min_sym_eig(block));
    }
    return sol;
}

LimitReport upsilon_via_limit(const ProblemSpec& spec, const Grid& grid,
                              const std::vector<double>& ladder) {
    for (size_t i = 1; i < ladder.size(); ++i)
        if (!(ladder[i] > ladder[i - 1]))
            throw ShapeError("lambda ladder must be strictly increasing");

    const RiccatiSolution ric = solve_upsilon(spec, grid);
    const Matrix eye = Matrix::Identity(spec.n, spec.n);

    LimitReport rep;
    rep.gaps_strictly_decreasing = true;
    rep.pinv_monotone_decreasing = true;
    rep.pi_monotone_increasing = true;
    rep.pinv_above_upsilon = true;

    std::vector<Matrix> prev_inv, prev_pi, prev_pi_tilde;
    for (double lambda : ladder) {
        PiSolution pi;
        try {
            pi = solve_pi_lambda(spec, grid, lambda);
        } catch (const SolveError&) {
            rep.unsolvable.push_back(lambda);
            continue;
        }
        if (rep.lambdas.empty()) rep.lambda0_estimate = lambda;

        double gap = 0.0, gap_tilde = 0.0;
        std::vector<Matrix> inv(static_cast<size_t>(grid.nodes()));
        for (int k = 0; k < grid.nodes(); ++k) {
            Matrix pinv = solve_linear(pi.pi.at(k), eye);
            Matrix pinv_t = solve_linear(pi.pi_tilde.at(k), eye);
            gap = std::max(gap, max_abs(pinv - ric.upsilon.at(k)));
            gap_tilde = std::max(gap_tilde, max_abs(pinv_t - ric.upsilon_tilde.at(k)));
            if (min_sym_eig(pinv - ric.upsilon.at(k)) < -1e-10) rep.pinv_above_upsilon = false;
            inv[static_cast<size_t>(k)] = std::move(pinv);
        }
        if (!rep.gap_upsilon.empty()) {
            if (!(gap < rep.gap_upsilon.back()) || !(gap_tilde < rep.gap_upsilon_tilde.back()))
                rep.gaps_strictly_decreasing = false;
            rep.gap_ratios.push_back(gap / rep.gap_upsilon.back());
            for (int k = 0; k < grid.nodes(); ++k) {
                if (min_sym_eig(prev_inv[static_cast<size_t>(k)] - inv[static_cast<size_t>(k)]) <
                    -1e-10)
                    rep.pinv_monotone_decreasing = false;
                if (min_sym_eig(pi.pi.at(k) - prev_pi[static_cast<size_t>(k)]) <= 0.0 ||
                    min_sym_eig(pi.pi_tilde.at(k) - prev_pi_tilde[static_cast<size_t>(k)]) <= 0.0)
                    rep.pi_monotone_increasing = false;
            }
        }
        rep.lambdas.push_back(lambda);
        rep.gap_upsilon.push_back(gap);
        rep.gap_upsilon_tilde.push_back(gap_tilde);
        prev_inv = std::move(inv);
        prev_pi = pi.pi.values();
        prev_pi_tilde = pi.pi_tilde.values();
    }
    if (rep.lambdas.empty())
        throw SingularError("upsilon_via_limit: no ladder entry was solvable");
    return rep;
}

}  // namespace mflq
