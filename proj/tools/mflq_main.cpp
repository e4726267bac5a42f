// Command-line driver: solve a mean-field backward LQ problem file, emit
// the Riccati/gain/offset artifacts, and run the verification reports.

#include <CLI11.hpp>
#include <json.hpp>

#include "mflq/problem_io.hpp"
#include "mflq/processes.hpp"
#include "mflq/reduction.hpp"
#include "mflq/riccati.hpp"
#include "mflq/synthesis.hpp"
#include "mflq/verify.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace mflq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitSolve = 2;
constexpr int kExitVerify = 3;

struct Options {
    std::string problem_file;
    std::string out_dir = "out";
    int grid_n = 2000;
    double lambda = 0.0;
    std::vector<double> ladder{10.0, 100.0, 1000.0, 10000.0};
    std::int64_t paths = 100000;
    std::uint64_t seed = 42;
    std::vector<double> eps{-0.2, -0.1, 0.0, 0.1, 0.2};
    std::vector<double> h_values;  // 2 n^2 entries: H then H~, row-major
    int threads = 0;
    int directions = 8;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

std::optional<HTransform> parse_h(const Options& opt, int n, const Grid& grid) {
    if (opt.h_values.empty()) return std::nullopt;
    const size_t need = 2 * static_cast<size_t>(n) * n;
    if (opt.h_values.size() != need)
        throw ParseError("--h needs " + std::to_string(need) +
                         " entries (H then H_tilde, row-major)");
    Matrix H(n, n), Ht(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            H(i, j) = opt.h_values[static_cast<size_t>(i * n + j)];
            Ht(i, j) = opt.h_values[need / 2 + static_cast<size_t>(i * n + j)];
        }
    return HTransform::constant(grid, symmetrized(H), symmetrized(Ht));
}

struct SolvedProblem {
    ProblemSpec original;
    Grid grid;
    NormalFormProblem normal;
    RiccatiSolution ric;
    EtaBeta eb;
    ControlLaw law;
    ValueBreakdown value;
    double offset = 0.0;
};

SolvedProblem solve_pipeline(const Options& opt) {
    SolvedProblem sp{load_problem(opt.problem_file), Grid(1.0, 2), {}, {}, {}, {}, {}, 0.0};
    ValidationReport rep = validate(sp.original);
    if (!rep.passed) {
        std::string msg = "invalid problem:";
        for (const auto& v : rep.violations) msg += "\n  " + v;
        throw ParseError(msg);
    }
    sp.grid = Grid(sp.original.T, opt.grid_n);
    sp.normal = reduce(sp.original, sp.grid);
    sp.ric = solve_upsilon(sp.normal.problem, sp.grid);
    sp.eb = solve_eta(sp.normal.problem, sp.ric, sp.normal.problem.terminal, sp.grid);
    sp.law = build_control_law(sp.normal.problem, sp.ric, sp.eb, sp.grid);
    sp.value = optimal_value(sp.normal.problem, sp.ric, sp.eb, sp.grid);
    sp.offset = sp.normal.offset(sp.original.terminal);
    return sp;
}

void write_gains_csv(const fs::path& path, const ControlLaw& law) {
    std::ofstream os(path, std::ios::binary);
    const Grid& grid = law.K.grid();
    os << "t";
    for (Eigen::Index i = 0; i < law.K.rows(); ++i)
        for (Eigen::Index j = 0; j < law.K.cols(); ++j) os << ",K" << i << j;
    for (Eigen::Index i = 0; i < law.K_tilde.rows(); ++i)
        for (Eigen::Index j = 0; j < law.K_tilde.cols(); ++j) os << ",Kt" << i << j;
    for (Eigen::Index i = 0; i < law.c_w.rows(); ++i) os << ",cw" << i;
    for (Eigen::Index i = 0; i < law.c_det.rows(); ++i) os << ",cd" << i;
    os << "\n";
    for (int k = 0; k < grid.nodes(); ++k) {
        os << format_double(grid.time(k));
        for (Eigen::Index i = 0; i < law.K.rows(); ++i)
            for (Eigen::Index j = 0; j < law.K.cols(); ++j)
                os << "," << format_double(law.K.at(k)(i, j));
        for (Eigen::Index i = 0; i < law.K_tilde.rows(); ++i)
            for (Eigen::Index j = 0; j < law.K_tilde.cols(); ++j)
                os << "," << format_double(law.K_tilde.at(k)(i, j));
        for (Eigen::Index i = 0; i < law.c_w.rows(); ++i)
            os << "," << format_double(law.c_w.at(k)(i, 0));
        for (Eigen::Index i = 0; i < law.c_det.rows(); ++i)
            os << "," << format_double(law.c_det.at(k)(i, 0));
        os << "\n";
    }
}

void write_eta_csv(const fs::path& path, const EtaBeta& eb) {
    std::ofstream os(path, std::ios::binary);
    const Grid& grid = eb.eta.mean.grid();
    os << "t";
    for (Eigen::Index i = 0; i < eb.eta.mean.rows(); ++i) os << ",a" << i;
    for (Eigen::Index i = 0; i < eb.eta.loading.rows(); ++i) os << ",b" << i;
    os << "\n";
    for (int k = 0; k < grid.nodes(); ++k) {
        os << format_double(grid.time(k));
        for (Eigen::Index i = 0; i < eb.eta.mean.rows(); ++i)
            os << "," << format_double(eb.eta.mean.at(k)(i, 0));
        for (Eigen::Index i = 0; i < eb.eta.loading.rows(); ++i)
            os << "," << format_double(eb.eta.loading.at(k)(i, 0));
        os << "\n";
    }
}

void write_path_csv(const fs::path& path, const MatrixPath& mp, const std::string& prefix) {
    std::ofstream os(path, std::ios::binary);
    write_matrix_path_csv(os, mp, prefix);
}

json cert_to_json(const ConvexityCertificate& cert) {
    json j;
    j["passed"] = cert.passed;
    j["min_eig_R22"] = cert.min_eig_R22;
    j["min_eig_R22_tilde"] = cert.min_eig_R22_tilde;
    j["min_eig_upsilon"] = cert.min_eig_upsilon;
    j["min_eig_upsilon_tilde"] = cert.min_eig_upsilon_tilde;
    j["min_eig_weighted"] = cert.min_eig_weighted;
    j["min_eig_weighted_tilde"] = cert.min_eig_weighted_tilde;
    j["inv_margin_R11"] = cert.inv_margin_R11;
    j["inv_margin_R11_tilde"] = cert.inv_margin_R11_tilde;
    j["alpha_empirical"] = cert.alpha_empirical;
    if (!cert.failure.empty()) j["failure"] = cert.failure;
    return j;
}

int cmd_solve(const Options& opt) {
    SolvedProblem sp = solve_pipeline(opt);
    fs::create_directories(opt.out_dir);
    const fs::path out(opt.out_dir);

    write_path_csv(out / "upsilon.csv", sp.ric.upsilon, "u");
    write_path_csv(out / "upsilon_tilde.csv", sp.ric.upsilon_tilde, "u");
    write_gains_csv(out / "gains.csv", sp.law);
    write_eta_csv(out / "eta.csv", sp.eb);

    json value;
    value["total"] = sp.value.total - sp.offset;  // value of the original problem
    value["normal_form_total"] = sp.value.total;
    value["offset"] = sp.offset;
    json terms;
    for (const auto& [name, v] : sp.value.terms) terms[name] = v;
    value["terms"] = terms;
    write_json(out / "value.json", value);

    std::optional<HTransform> h = parse_h(opt, sp.original.n, sp.grid);
    ConvexityCertificate cert = convexity_certificate(sp.original, sp.grid, h);
    write_json(out / "certificate.json", cert_to_json(cert));

    std::cout << "value " << format_double(sp.value.total - sp.offset) << " (offset "
              << format_double(sp.offset) << "), certificate "
              << (cert.passed ? "passed" : "failed") << "\n";
    return kExitOk;
}

int cmd_verify(const Options& opt) {
    SolvedProblem sp = solve_pipeline(opt);
    fs::create_directories(opt.out_dir);
    const fs::path out(opt.out_dir);
    bool all_ok = true;

    PathEnsemble ens = simulate_adjoint(sp.normal.problem, sp.ric, sp.eb, opt.seed,
                                        opt.paths, opt.threads);

    // ensemble summary
    {
        EnsembleSummary sum = summarize(ens);
        std::ofstream os(out / "ensemble.csv", std::ios::binary);
        os << "t";
        for (int d = 0; d < sum.n; ++d)
            os << ",mean" << d << ",var" << d << ",p05_" << d << ",p25_" << d << ",p50_" << d
               << ",p75_" << d << ",p95_" << d;
        os << "\n";
        for (int k = 0; k < sum.grid.nodes(); ++k) {
            os << format_double(sum.grid.time(k));
            for (int d = 0; d < sum.n; ++d) {
                os << "," << format_double(sum.mean[static_cast<size_t>(k)](d)) << ","
                   << format_double(sum.var[static_cast<size_t>(k)](d));
                for (int qi = 0; qi < 5; ++qi)
                    os << ","
                       << format_double(sum.quantiles[static_cast<size_t>(k)]
                                                     [static_cast<size_t>(qi)](d));
            }
            os << "\n";
        }
    }

    // Monte Carlo cost against the closed-form value
    McCost mc = mc_cost(sp.normal.problem, sp.law, ens, sp.ric, sp.eb,
                        sp.normal.problem.terminal);
    {
        json j;
        j["mean"] = mc.mean;
        j["stderr"] = mc.stderr_mean;
        j["value_total"] = sp.value.total;
        double tol = 3.0 * mc.stderr_mean + 1e-6;
        bool ok = std::abs(mc.mean - sp.value.total) <= tol;
        j["agrees_with_value"] = ok;
        all_ok = all_ok && ok;
        write_json(out / "mc_cost.json", j);
    }

    // stationarity residual
    StationarityReport st = stationarity_residual(sp.normal.problem, sp.law, ens, sp.ric,
                                                  sp.eb);
    {
        double profile_sup = 0.0;
        for (double v : st.node_profile) profile_sup = std::max(profile_sup, v);
        json j;
        j["sup_residual"] = st.sup_residual;
        j["sup_mean_residual"] = profile_sup;
        j["sup_residual_exact_means"] = st.sup_residual_exact;
        j["state_reconstruction_sup"] = st.state_sup;
        j["paths"] = st.paths_used;
        bool ok = profile_sup <= 5e-2;
        j["within_tolerance"] = ok;
        all_ok = all_ok && ok;
        write_json(out / "stationarity.json", j);

        std::ofstream os(out / "stationarity_profile.csv", std::ios::binary);
        os << "t,mean_residual,state_reconstruction\n";
        for (int k = 0; k < sp.grid.nodes(); ++k)
            os << format_double(sp.grid.time(k)) << ","
               << format_double(st.node_profile[static_cast<size_t>(k)]) << ","
               << format_double(st.state_node_profile[static_cast<size_t>(k)]) << "\n";
    }

    // perturbation fits along seeded affine directions (one ensemble sweep)
    {
        json dirs = json::array();
        const int m = sp.normal.problem.m;
        std::vector<AffineProcess> family;
        for (int d = 0; d < opt.directions; ++d) {
            NormalStream stream(splitmix64(opt.seed ^ 0x7E57D17Dull),
                                static_cast<std::uint64_t>(d));
            Vector v0(m), v1(m);
            for (int i = 0; i < m; ++i) {
                v0(i) = stream(static_cast<std::uint64_t>(2 * i));
                v1(i) = stream(static_cast<std::uint64_t>(2 * i + 1));
            }
            family.push_back(
                {MatrixPath::constant(sp.grid, v0), MatrixPath::constant(sp.grid, v1)});
        }
        std::vector<QuadraticFitReport> fits =
            perturbation_test_multi(sp.normal.problem, sp.law, ens, sp.ric, sp.eb,
                                    sp.normal.problem.terminal, family, opt.eps);
        for (int d = 0; d < opt.directions; ++d) {
            const QuadraticFitReport& fit = fits[static_cast<size_t>(d)];
            json j;
            j["direction"] = d;
            j["c0"] = fit.c0;
            j["c1"] = fit.c1;
            j["c2"] = fit.c2;
            j["c1_stderr"] = fit.c1_stderr;
            j["c2_stderr"] = fit.c2_stderr;
            j["c1_pairing"] = fit.c1_pairing;
            j["j0_v"] = fit.j0_v;
            j["fit_residual"] = fit.fit_residual;
            j["epsilons"] = fit.epsilons;
            j["costs"] = fit.costs;
            j["passed_linear"] = fit.passed_linear;
            j["passed_convex"] = fit.passed_convex;
            j["passed_match"] = fit.passed_match;
            all_ok = all_ok && fit.passed_linear && fit.passed_convex && fit.passed_match;
            dirs.push_back(j);
        }
        write_json(out / "perturbation.json", dirs);
    }

    // lambda ladder
    {
        LimitReport lim = upsilon_via_limit(sp.normal.problem, sp.grid, opt.ladder);
        json j;
        j["lambdas"] = lim.lambdas;
        j["gap_upsilon"] = lim.gap_upsilon;
        j["gap_upsilon_tilde"] = lim.gap_upsilon_tilde;
        j["gap_ratios"] = lim.gap_ratios;
        j["gaps_strictly_decreasing"] = lim.gaps_strictly_decreasing;
        j["pinv_monotone_decreasing"] = lim.pinv_monotone_decreasing;
        j["pi_monotone_increasing"] = lim.pi_monotone_increasing;
        j["pinv_above_upsilon"] = lim.pinv_above_upsilon;
        j["lambda0_estimate"] = lim.lambda0_estimate;
        j["unsolvable"] = lim.unsolvable;
        bool ok = lim.gaps_strictly_decreasing && lim.pi_monotone_increasing &&
                  lim.pinv_monotone_decreasing;
        all_ok = all_ok && ok;
        write_json(out / "limit_report.json", j);
    }

    std::cout << (all_ok ? "verification passed" : "verification FAILED") << "\n";
    return all_ok ? kExitOk : kExitVerify;
}

int cmd_riccati(const Options& opt) {
    SolvedProblem sp = solve_pipeline(opt);
    fs::create_directories(opt.out_dir);
    const fs::path out(opt.out_dir);
    write_path_csv(out / "upsilon.csv", sp.ric.upsilon, "u");
    write_path_csv(out / "upsilon_tilde.csv", sp.ric.upsilon_tilde, "u");
    if (opt.lambda > 0.0) {
        PiSolution pi = solve_pi_lambda(sp.normal.problem, sp.grid, opt.lambda);
        write_path_csv(out / "pi_lambda.csv", pi.pi, "p");
        write_path_csv(out / "pi_lambda_tilde.csv", pi.pi_tilde, "p");
        json j;
        j["lambda"] = pi.lambda;
        j["weight_cert"] = pi.weight_cert;
        j["weight_cert_tilde"] = pi.weight_cert_tilde;
        write_json(out / "pi_lambda.json", j);
    }
    std::cout << "riccati paths written to " << opt.out_dir << "\n";
    return kExitOk;
}

int cmd_reduce(const Options& opt) {
    SolvedProblem sp = solve_pipeline(opt);
    fs::create_directories(opt.out_dir);
    const fs::path out(opt.out_dir);
    write_file(out / "normal_form.toml", emit_problem(sp.normal.problem));
    write_path_csv(out / "phi.csv", sp.normal.phi, "phi");
    write_path_csv(out / "phi_tilde.csv", sp.normal.phi_tilde, "phi");
    json j;
    j["offset"] = sp.offset;
    write_json(out / "reduce.json", j);
    std::cout << "normal form written to " << opt.out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Solver and verifier for mean-field backward LQ control problems"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* cmd) {
        cmd->set_help_flag("--help", "print help");  // frees -h for the --h pair
        cmd->add_option("problem", opt.problem_file, "problem file")->required();
        cmd->add_option("--grid-n", opt.grid_n, "time steps")->check(CLI::Range(2, 10000000));
        cmd->add_option("--out", opt.out_dir, "output directory");
        cmd->add_option("--seed", opt.seed, "Monte Carlo seed");
        cmd->add_option("--paths", opt.paths, "Monte Carlo paths")
            ->check(CLI::Range(std::int64_t{1}, std::int64_t{100000000}));
        cmd->add_option("--threads", opt.threads, "worker threads (0 = auto)");
        cmd->add_option("--h", opt.h_values,
                        "equivalent-cost pair: H then H_tilde entries, row-major");
        cmd->add_option("--lambda", opt.lambda, "single lambda for the forward pair");
        cmd->add_option("--ladder", opt.ladder, "lambda ladder");
        cmd->add_option("--eps", opt.eps, "perturbation epsilons");
        cmd->add_option("--directions", opt.directions, "perturbation directions");
    };

    CLI::App* solve = app.add_subcommand("solve", "solve and write artifacts");
    CLI::App* verify = app.add_subcommand("verify", "run the verification reports");
    CLI::App* riccati = app.add_subcommand("riccati", "backward/forward Riccati paths only");
    CLI::App* reduce_cmd = app.add_subcommand("reduce", "emit the normal form");
    for (CLI::App* cmd : {solve, verify, riccati, reduce_cmd}) add_common(cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        for (size_t i = 1; i < opt.ladder.size(); ++i)
            if (!(opt.ladder[i] > opt.ladder[i - 1]))
                throw ParseError("--ladder must be strictly increasing");
        if (solve->parsed()) return cmd_solve(opt);
        if (verify->parsed()) return cmd_verify(opt);
        if (riccati->parsed()) return cmd_riccati(opt);
        if (reduce_cmd->parsed()) return cmd_reduce(opt);
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const SolveError& e) {
        std::cerr << "solve error: " << e.what();
        if (e.time() >= 0.0) std::cerr << " (t = " << e.time() << ")";
        std::cerr << "\n";
        return kExitSolve;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolve;
    }
    return kExitOk;
}
