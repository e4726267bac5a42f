#include "mflq/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace mflq {

CoeffFn CoeffFn::constant(Matrix value) {
    CoeffFn fn;
    fn.kind_ = Kind::Constant;
    fn.samples_.push_back(std::move(value));
    return fn;
}

CoeffFn CoeffFn::sampled(std::vector<double> times, std::vector<Matrix> samples) {
    if (times.size() != samples.size() || times.empty())
        throw ShapeError("sampled coefficient needs matching, nonempty times and samples");
    for (size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw ShapeError("sampled coefficient times must be strictly increasing");
    for (const Matrix& s : samples)
        if (s.rows() != samples[0].rows() || s.cols() != samples[0].cols())
            throw ShapeError("sampled coefficient matrices must share one shape");
    CoeffFn fn;
    fn.kind_ = Kind::Sampled;
    fn.times_ = std::move(times);
    fn.samples_ = std::move(samples);
    return fn;
}

Matrix CoeffFn::eval(double t) const {
    if (samples_.empty()) throw ShapeError("evaluating empty coefficient");
    if (kind_ == Kind::Constant) return samples_[0];
    if (t <= times_.front()) return samples_.front();
    if (t >= times_.back()) return samples_.back();
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    size_t hi = static_cast<size_t>(it - times_.begin());
    size_t lo = hi - 1;
    double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
    if (w == 0.0) return samples_[lo];
    return (1.0 - w) * samples_[lo] + w * samples_[hi];
}

CoeffFn operator+(const CoeffFn& a, const CoeffFn& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("coefficient sum: shape mismatch");
    if (a.is_constant() && b.is_constant())
        return CoeffFn::constant(a.samples_[0] + b.samples_[0]);
    std::set<double> merged;
    if (!a.is_constant()) merged.insert(a.times_.begin(), a.times_.end());
    if (!b.is_constant()) merged.insert(b.times_.begin(), b.times_.end());
    std::vector<double> times(merged.begin(), merged.end());
    std::vector<Matrix> samples;
    samples.reserve(times.size());
    for (double t : times) samples.push_back(a.eval(t) + b.eval(t));
    return CoeffFn::sampled(std::move(times), std::move(samples));
}

CoeffFn CoeffFn::transposed() const {
    CoeffFn fn = *this;
    for (Matrix& s : fn.samples_) s = s.transpose().eval();
    return fn;
}

CoeffFn CoeffFn::scaled(double s) const {
    CoeffFn fn = *this;
    for (Matrix& v : fn.samples_) v *= s;
    return fn;
}

bool CoeffFn::operator==(const CoeffFn& other) const {
    if (kind_ != other.kind_ || times_ != other.times_ ||
        samples_.size() != other.samples_.size())
        return false;
    for (size_t i = 0; i < samples_.size(); ++i)
        if (samples_[i].rows() != other.samples_[i].rows() ||
            samples_[i].cols() != other.samples_[i].cols() ||
            samples_[i] != other.samples_[i])
            return false;
    return true;
}

bool ProblemSpec::operator==(const ProblemSpec& other) const {
    return n == other.n && m == other.m && T == other.T && A == other.A &&
           A_hat == other.A_hat && C == other.C && C_hat == other.C_hat &&
           B == other.B && B_hat == other.B_hat && f == other.f && G == other.G &&
           G_hat == other.G_hat && Q == other.Q && Q_hat == other.Q_hat &&
           S1 == other.S1 && S1_hat == other.S1_hat && S2 == other.S2 &&
           S2_hat == other.S2_hat && R11 == other.R11 && R11_hat == other.R11_hat &&
           R12 == other.R12 && R12_hat == other.R12_hat && R22 == other.R22 &&
           R22_hat == other.R22_hat && g == other.g && q == other.q &&
           rho1 == other.rho1 && rho2 == other.rho2 &&
           terminal.zeta0 == other.terminal.zeta0 && terminal.zeta1 == other.terminal.zeta1;
}

ProblemSpec zero_spec(int n, int m, double T) {
    ProblemSpec s;
    s.n = n;
    s.m = m;
    s.T = T;
    const Matrix znn = Matrix::Zero(n, n);
    const Matrix znm = Matrix::Zero(n, m);
    const Matrix zmm = Matrix::Zero(m, m);
    s.A = s.A_hat = s.C = s.C_hat = CoeffFn::constant(znn);
    s.B = s.B_hat = CoeffFn::constant(znm);
    s.f = CoeffFn::constant(Matrix::Zero(n, 1));
    s.G = s.G_hat = znn;
    s.Q = s.Q_hat = s.S1 = s.S1_hat = s.R11 = s.R11_hat = CoeffFn::constant(znn);
    s.S2 = s.S2_hat = s.R12 = s.R12_hat = CoeffFn::constant(znm);
    s.R22 = s.R22_hat = CoeffFn::constant(zmm);
    s.g = Vector::Zero(n);
    s.q = s.rho1 = CoeffFn::constant(Matrix::Zero(n, 1));
    s.rho2 = CoeffFn::constant(Matrix::Zero(m, 1));
    s.terminal.zeta0 = Vector::Zero(n);
    s.terminal.zeta1 = Vector::Zero(n);
    return s;
}

namespace {

void check_shape(ValidationReport& rep, const char* name, const CoeffFn& fn,
                 Eigen::Index rows, Eigen::Index cols) {
    if (fn.rows() != rows || fn.cols() != cols) {
        std::ostringstream os;
        os << name << ": expected " << rows << "x" << cols << ", got " << fn.rows()
           << "x" << fn.cols();
        rep.passed = false;
        rep.violations.push_back(os.str());
    }
}

void check_symmetric_fn(ValidationReport& rep, const char* name, const CoeffFn& fn,
                        const Grid& grid) {
    if (fn.rows() != fn.cols()) return;  // shape violation already reported
    for (int k = 0; k < grid.nodes(); ++k) {
        Matrix v = fn.eval(grid.time(k));
        double scale = std::max(1.0, max_abs(v));
        if (max_abs(v - v.transpose()) > 1e-12 * scale) {
            std::ostringstream os;
            os << name << ": not symmetric at t=" << grid.time(k);
            rep.passed = false;
            rep.violations.push_back(os.str());
            return;
        }
    }
}

void check_symmetric_mat(ValidationReport& rep, const char* name, const Matrix& m) {
    double scale = std::max(1.0, max_abs(m));
    if (max_abs(m - m.transpose()) > 1e-12 * scale) {
        rep.passed = false;
        rep.violations.push_back(std::string(name) + ": not symmetric");
    }
}

void check_sample_times(ValidationReport& rep, const char* name, const CoeffFn& fn,
                        double T) {
    if (fn.is_constant()) return;
    const auto& times = fn.times();
    if (times.front() != 0.0 || times.back() != T) {
        std::ostringstream os;
        os << name << ": sample times must start at 0 and end at T=" << T;
        rep.passed = false;
        rep.violations.push_back(os.str());
    }
}

}  // namespace

ValidationReport validate(const ProblemSpec& spec) {
    ValidationReport rep;
    if (spec.n <= 0 || spec.m <= 0) {
        rep.passed = false;
        rep.violations.push_back("dimensions must be positive");
        return rep;
    }
    if (!(spec.T > 0.0)) {
        rep.passed = false;
        rep.violations.push_back("horizon T must be positive");
    }

    const Eigen::Index n = spec.n, m = spec.m;
    check_shape(rep, "A", spec.A, n, n);
    check_shape(rep, "A_hat", spec.A_hat, n, n);
    check_shape(rep, "C", spec.C, n, n);
    check_shape(rep, "C_hat", spec.C_hat, n, n);
    check_shape(rep, "B", spec.B, n, m);
    check_shape(rep, "B_hat", spec.B_hat, n, m);
    check_shape(rep, "f", spec.f, n, 1);
    check_shape(rep, "Q", spec.Q, n, n);
    check_shape(rep, "Q_hat", spec.Q_hat, n, n);
    check_shape(rep, "S1", spec.S1, n, n);
    check_shape(rep, "S1_hat", spec.S1_hat, n, n);
    check_shape(rep, "S2", spec.S2, n, m);
    check_shape(rep, "S2_hat", spec.S2_hat, n, m);
    check_shape(rep, "R11", spec.R11, n, n);
    check_shape(rep, "R11_hat", spec.R11_hat, n, n);
    check_shape(rep, "R12", spec.R12, n, m);
    check_shape(rep, "R12_hat", spec.R12_hat, n, m);
    check_shape(rep, "R22", spec.R22, m, m);
    check_shape(rep, "R22_hat", spec.R22_hat, m, m);
    check_shape(rep, "q", spec.q, n, 1);
    check_shape(rep, "rho1", spec.rho1, n, 1);
    check_shape(rep, "rho2", spec.rho2, m, 1);
    if (spec.G.rows() != n || spec.G.cols() != n) {
        rep.passed = false;
        rep.violations.push_back("G: wrong shape");
    }
    if (spec.G_hat.rows() != n || spec.G_hat.cols() != n) {
        rep.passed = false;
        rep.violations.push_back("G_hat: wrong shape");
    }
    if (spec.g.size() != n) {
        rep.passed = false;
        rep.violations.push_back("g: wrong length");
    }
    if (spec.terminal.zeta0.size() != n || spec.terminal.zeta1.size() != n) {
        rep.passed = false;
        rep.violations.push_back("terminal data: wrong length");
    }
    if (!(spec.T > 0.0)) return rep;

    const Grid grid(spec.T, 64);  // symmetry spot-check lattice
    check_symmetric_mat(rep, "G", spec.G);
    check_symmetric_mat(rep, "G_hat", spec.G_hat);
    check_symmetric_fn(rep, "Q", spec.Q, grid);
    check_symmetric_fn(rep, "Q_hat", spec.Q_hat, grid);
    check_symmetric_fn(rep, "R11", spec.R11, grid);
    check_symmetric_fn(rep, "R11_hat", spec.R11_hat, grid);
    check_symmetric_fn(rep, "R22", spec.R22, grid);
    check_symmetric_fn(rep, "R22_hat", spec.R22_hat, grid);

    const CoeffFn* fns[] = {&spec.A,   &spec.A_hat,   &spec.C,   &spec.C_hat,
                            &spec.B,   &spec.B_hat,   &spec.f,   &spec.Q,
                            &spec.Q_hat, &spec.S1,    &spec.S1_hat, &spec.S2,
                            &spec.S2_hat, &spec.R11,  &spec.R11_hat, &spec.R12,
                            &spec.R12_hat, &spec.R22, &spec.R22_hat, &spec.q,
                            &spec.rho1, &spec.rho2};
    const char* names[] = {"A",   "A_hat",   "C",   "C_hat",   "B",   "B_hat",
                           "f",   "Q",       "Q_hat", "S1",    "S1_hat", "S2",
                           "S2_hat", "R11",  "R11_hat", "R12", "R12_hat", "R22",
                           "R22_hat", "q",   "rho1", "rho2"};
    for (size_t i = 0; i < std::size(fns); ++i)
        check_sample_times(rep, names[i], *fns[i], spec.T);
    return rep;
}

TildeCoeffs tilde(const ProblemSpec& spec) {
    TildeCoeffs t;
    t.A = spec.A + spec.A_hat;
    t.B = spec.B + spec.B_hat;
    t.C = spec.C + spec.C_hat;
    t.G = spec.G + spec.G_hat;
    t.Q = spec.Q + spec.Q_hat;
    t.S1 = spec.S1 + spec.S1_hat;
    t.S2 = spec.S2 + spec.S2_hat;
    t.R11 = spec.R11 + spec.R11_hat;
    t.R12 = spec.R12 + spec.R12_hat;
    t.R22 = spec.R22 + spec.R22_hat;
    return t;
}

ProblemSpec homogeneous(const ProblemSpec& spec) {
    ProblemSpec h = spec;
    h.f = CoeffFn::constant(Matrix::Zero(spec.n, 1));
    h.g = Vector::Zero(spec.n);
    h.q = h.rho1 = CoeffFn::constant(Matrix::Zero(spec.n, 1));
    h.rho2 = CoeffFn::constant(Matrix::Zero(spec.m, 1));
    h.terminal.zeta0 = Vector::Zero(spec.n);
    h.terminal.zeta1 = Vector::Zero(spec.n);
    return h;
}

}  // namespace mflq
