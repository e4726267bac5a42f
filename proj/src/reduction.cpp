#include "mflq/reduction.hpp"

#include <cmath>
#include <utility>

namespace mflq {

namespace {

CoeffFn sampled_on_grid(const Grid& grid, std::vector<Matrix> values) {
    std::vector<double> times(static_cast<size_t>(grid.nodes()));
    for (int k = 0; k < grid.nodes(); ++k) times[static_cast<size_t>(k)] = grid.time(k);
    return CoeffFn::sampled(std::move(times), std::move(values));
}

}  // namespace

double NormalFormProblem::offset(const TerminalData& zeta) const {
    const Matrix& phi_T = phi.at(grid.steps);
    const Matrix& phi_tilde_T = phi_tilde.at(grid.steps);
    // E[(zeta - E[zeta])(zeta - E[zeta])'] = T * zeta1 zeta1'
    double centered = grid.horizon * zeta.zeta1.dot(phi_T * zeta.zeta1);
    double mean = zeta.zeta0.dot(phi_tilde_T * zeta.zeta0);
    return 0.5 * (centered + mean);
}

NormalFormProblem reduce(const ProblemSpec& spec, const Grid& grid) {
    ValidationReport rep = validate(spec);
    if (!rep.passed)
        throw ShapeError("reduce: invalid problem: " + rep.violations.front());

    const TildeCoeffs tld = tilde(spec);
    NormalFormProblem out;
    out.grid = grid;
    out.orig_R12 = spec.R12;
    out.orig_R22 = spec.R22;
    out.orig_R12_tilde = tld.R12;
    out.orig_R22_tilde = tld.R22;
    out.orig_n = spec.n;
    out.orig_m = spec.m;

    auto [phi, phi_tilde] = solve_phi(spec, grid);
    out.phi = phi;
    out.phi_tilde = phi_tilde;

    if (is_normal_form(spec)) {
        out.problem = spec;  // fixed point: coefficients pass through untouched
        return out;
    }

    const int n = spec.n, m = spec.m;
    std::vector<Matrix> c_new(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> c_hat_new(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> s1_new(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> s1_hat_new(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> s2_new(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> s2_hat_new(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> r11_new(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> r11_hat_new(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> q_new(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> rho1_new(static_cast<size_t>(grid.nodes()));

    for (int k = 0; k < grid.nodes(); ++k) {
        const double t = grid.time(k);
        const Matrix& phi_k = phi.at(k);
        const Matrix& phi_tilde_k = phi_tilde.at(k);
        Matrix r22 = spec.R22.eval(t);
        Matrix r22_t = tld.R22.eval(t);
        Matrix r12 = spec.R12.eval(t);
        Matrix r12_t = tld.R12.eval(t);

        Matrix inv_r22_r12t, inv_r22t_r12t;  // R22^-1 R12', R22~^-1 R12~'
        try {
            inv_r22_r12t = solve_linear(r22, Matrix(r12.transpose()));
            inv_r22t_r12t = solve_linear(r22_t, Matrix(r12_t.transpose()));
        } catch (const SingularError& e) {
            throw SingularError(std::string("reduce: control weight not invertible: ") +
                                    e.what(),
                                t);
        }

        Matrix b = spec.B.eval(t), b_t = tld.B.eval(t);
        Matrix cal_c = spec.C.eval(t) - b * inv_r22_r12t;
        Matrix cal_c_tilde = tld.C.eval(t) - b_t * inv_r22t_r12t;
        Matrix s2 = spec.S2.eval(t), s2_t = tld.S2.eval(t);
        Matrix cal_s1 = spec.S1.eval(t) - s2 * inv_r22_r12t + phi_k * cal_c;
        Matrix cal_s1_tilde = tld.S1.eval(t) - s2_t * inv_r22t_r12t + phi_tilde_k * cal_c_tilde;
        Matrix cal_s2 = s2 + phi_k * b;
        Matrix cal_s2_tilde = s2_t + phi_tilde_k * b_t;
        Matrix cal_r11 =
            spec.R11.eval(t) - r12 * inv_r22_r12t + phi_k;  // note: plain Phi in both
        Matrix cal_r11_tilde = tld.R11.eval(t) - r12_t * inv_r22t_r12t + phi_k;

        Matrix f_k = spec.f.eval(t);  // deterministic: E[f] = f
        Matrix q_k = spec.q.eval(t) + phi_k * f_k + (phi_tilde_k - phi_k) * f_k;
        Matrix rho2_k = spec.rho2.eval(t);  // deterministic: E[rho2] = rho2
        Matrix rho1_k = spec.rho1.eval(t) - r12 * solve_linear(r22, rho2_k) -
                        (r12_t * solve_linear(r22_t, rho2_k) - r12 * solve_linear(r22, rho2_k));

        c_new[static_cast<size_t>(k)] = cal_c;
        c_hat_new[static_cast<size_t>(k)] = cal_c_tilde - cal_c;
        s1_new[static_cast<size_t>(k)] = cal_s1;
        s1_hat_new[static_cast<size_t>(k)] = cal_s1_tilde - cal_s1;
        s2_new[static_cast<size_t>(k)] = cal_s2;
        s2_hat_new[static_cast<size_t>(k)] = cal_s2_tilde - cal_s2;
        r11_new[static_cast<size_t>(k)] = symmetrized(cal_r11);
        r11_hat_new[static_cast<size_t>(k)] = symmetrized(cal_r11_tilde - cal_r11);
        q_new[static_cast<size_t>(k)] = q_k;
        rho1_new[static_cast<size_t>(k)] = rho1_k;
    }

    ProblemSpec nf = spec;
    nf.G = Matrix::Zero(n, n);
    nf.G_hat = Matrix::Zero(n, n);
    nf.Q = CoeffFn::constant(Matrix::Zero(n, n));
    nf.Q_hat = CoeffFn::constant(Matrix::Zero(n, n));
    nf.R12 = CoeffFn::constant(Matrix::Zero(n, m));
    nf.R12_hat = CoeffFn::constant(Matrix::Zero(n, m));
    nf.C = sampled_on_grid(grid, std::move(c_new));
    nf.C_hat = sampled_on_grid(grid, std::move(c_hat_new));
    nf.S1 = sampled_on_grid(grid, std::move(s1_new));
    nf.S1_hat = sampled_on_grid(grid, std::move(s1_hat_new));
    nf.S2 = sampled_on_grid(grid, std::move(s2_new));
    nf.S2_hat = sampled_on_grid(grid, std::move(s2_hat_new));
    nf.R11 = sampled_on_grid(grid, std::move(r11_new));
    nf.R11_hat = sampled_on_grid(grid, std::move(r11_hat_new));
    nf.q = sampled_on_grid(grid, std::move(q_new));
    nf.rho1 = sampled_on_grid(grid, std::move(rho1_new));
    out.problem = std::move(nf);
    return out;
}

AffineProcess map_control(const NormalFormProblem& normal, const AffineProcess& u,
                          MapDirection direction, const AffineProcess& y,
                          const AffineProcess& z) {
    (void)y;  // Y passes through the transform untouched
    const Grid& grid = normal.grid;
    if (u.mean.nodes() != grid.nodes() || z.mean.nodes() != grid.nodes())
        throw ShapeError("map_control: paths must live on the reduction grid");

    const double sign = direction == MapDirection::ToNormal ? 1.0 : -1.0;
    std::vector<Matrix> mean(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> loading(static_cast<size_t>(grid.nodes()));
    for (int k = 0; k < grid.nodes(); ++k) {
        const double t = grid.time(k);
        Matrix r12t_z, r12t_z_mean;
        try {
            r12t_z = solve_linear(normal.orig_R22.eval(t),
                                  Matrix(normal.orig_R12.eval(t).transpose() * z.loading.at(k)));
            r12t_z_mean =
                solve_linear(normal.orig_R22_tilde.eval(t),
                             Matrix(normal.orig_R12_tilde.eval(t).transpose() * z.mean.at(k)));
        } catch (const SingularError& e) {
            throw SingularError(std::string("map_control: ") + e.what(), t);
        }
        loading[static_cast<size_t>(k)] = u.loading.at(k) + sign * r12t_z;
        mean[static_cast<size_t>(k)] = u.mean.at(k) + sign * r12t_z_mean;
    }
    return {MatrixPath(grid, std::move(mean)), MatrixPath(grid, std::move(loading))};
}

HTransform HTransform::constant(const Grid& grid, const Matrix& H0, const Matrix& H0_tilde) {
    Matrix zero = Matrix::Zero(H0.rows(), H0.cols());
    return {MatrixPath::constant(grid, H0), MatrixPath::constant(grid, H0_tilde),
            MatrixPath::constant(grid, zero), MatrixPath::constant(grid, zero)};
}

EquivCoeffs equivalent_coeffs(const ProblemSpec& spec, const HTransform& h, const Grid& grid) {
    if (h.H.rows() != spec.n || h.H.cols() != spec.n)
        throw ShapeError("equivalent_coeffs: H must be n x n");
    const TildeCoeffs tld = tilde(spec);

    std::vector<Matrix> q_h(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> s1_h(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> s2_h(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> n1_h(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> q_ht(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> s1_ht(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> s2_ht(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> n1_ht(static_cast<size_t>(grid.nodes()));
    std::vector<Matrix> lin(static_cast<size_t>(grid.nodes()));

    for (int k = 0; k < grid.nodes(); ++k) {
        const double t = grid.time(k);
        const Matrix& H = h.H.at(k);
        const Matrix& Ht = h.H_tilde.at(k);
        Matrix a = spec.A.eval(t), a_t = tld.A.eval(t);
        q_h[static_cast<size_t>(k)] = h.dH.at(k) + H * a + a.transpose() * H;
        s1_h[static_cast<size_t>(k)] = spec.S1.eval(t) + H * spec.C.eval(t);
        s2_h[static_cast<size_t>(k)] = spec.S2.eval(t) + H * spec.B.eval(t);
        n1_h[static_cast<size_t>(k)] = spec.R11.eval(t) + H;
        q_ht[static_cast<size_t>(k)] = h.dH_tilde.at(k) + Ht * a_t + a_t.transpose() * Ht;
        s1_ht[static_cast<size_t>(k)] = tld.S1.eval(t) + Ht * tld.C.eval(t);
        s2_ht[static_cast<size_t>(k)] = tld.S2.eval(t) + Ht * tld.B.eval(t);
        n1_ht[static_cast<size_t>(k)] = tld.R11.eval(t) + H;  // plain H by the display
        Matrix f_k = spec.f.eval(t);
        lin[static_cast<size_t>(k)] = spec.q.eval(t) + H * f_k + (Ht - H) * f_k;
    }

    EquivCoeffs out;
    out.Q_h = sampled_on_grid(grid, std::move(q_h));
    out.S1_h = sampled_on_grid(grid, std::move(s1_h));
    out.S2_h = sampled_on_grid(grid, std::move(s2_h));
    out.N1_h = sampled_on_grid(grid, std::move(n1_h));
    out.Q_h_tilde = sampled_on_grid(grid, std::move(q_ht));
    out.S1_h_tilde = sampled_on_grid(grid, std::move(s1_ht));
    out.S2_h_tilde = sampled_on_grid(grid, std::move(s2_ht));
    out.N1_h_tilde = sampled_on_grid(grid, std::move(n1_ht));
    out.q_h = sampled_on_grid(grid, std::move(lin));
    return out;
}

double equivalent_cost_shift(const ProblemSpec& spec, const HTransform& h,
                             const TerminalData& zeta) {
    const Grid& grid = h.H.grid();
    const Matrix& H_T = h.H.at(grid.steps);
    const Matrix& Ht_T = h.H_tilde.at(grid.steps);
    double centered = spec.T * zeta.zeta1.dot(H_T * zeta.zeta1);
    double mean = zeta.zeta0.dot(Ht_T * zeta.zeta0);
    return 0.5 * (centered + mean);
}

ProblemSpec spec_with_equivalent_cost(const ProblemSpec& spec, const HTransform& h,
                                      const EquivCoeffs& coeffs) {
    if (!is_normal_form(spec))
        throw ShapeError("equivalent cost family is defined for normal-form problems");
    ProblemSpec out = spec;
    out.G = h.H.at(0);
    out.G_hat = h.H_tilde.at(0) - h.H.at(0);
    out.Q = coeffs.Q_h;
    out.Q_hat = coeffs.Q_h_tilde + coeffs.Q_h.scaled(-1.0);
    out.S1 = coeffs.S1_h;
    out.S1_hat = coeffs.S1_h_tilde + coeffs.S1_h.scaled(-1.0);
    out.S2 = coeffs.S2_h;
    out.S2_hat = coeffs.S2_h_tilde + coeffs.S2_h.scaled(-1.0);
    out.R11 = coeffs.N1_h;
    out.R11_hat = coeffs.N1_h_tilde + coeffs.N1_h.scaled(-1.0);
    out.q = coeffs.q_h;
    return out;
}

}  // namespace mflq
