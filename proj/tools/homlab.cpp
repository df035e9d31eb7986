// homlab command-line driver: sampling, correctors, diagnostics, ensemble
// experiments, partition checks and sensitivity checks.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fftw3.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "homlab/config.hpp"
#include "homlab/corrector.hpp"
#include "homlab/diagnostics.hpp"
#include "homlab/ensemble.hpp"
#include "homlab/partition.hpp"
#include "homlab/random_field.hpp"
#include "homlab/sensitivity.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace homlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

struct Context {
    RunConfig cfg;
    fs::path out;
    unsigned threads = 1;
};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json fnum(double v) { return std::isfinite(v) ? json(v) : json(num(v)); }

class CsvWriter {
public:
    CsvWriter(const fs::path& path, const std::vector<std::string>& header) : os_(path, std::ios::binary)
    {
        if (!os_) {
            throw std::runtime_error("cannot write " + path.string());
        }
        row(header);
    }

    void row(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            os_ << (i ? "," : "") << cells[i];
        }
        os_ << '\n';
    }

private:
    std::ofstream os_;
};

void write_json(const fs::path& path, const json& j)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
    os << j.dump(2) << '\n';
}

json fit_json(const FitResult& f)
{
    return json{{"kind", to_string(f.kind)},
                {"slope", fnum(f.slope)},
                {"intercept", fnum(f.intercept)},
                {"stderr", f.stderr_defined ? fnum(f.stderr_slope) : json(nullptr)},
                {"stderr_defined", f.stderr_defined},
                {"r2", fnum(f.r2)},
                {"points", f.points},
                {"degenerate", f.degenerate},
                {"ci_low", std::isnan(f.ci_low) ? json(nullptr) : json(f.ci_low)},
                {"ci_high", std::isnan(f.ci_high) ? json(nullptr) : json(f.ci_high)}};
}

json matrix_json(const DynMatrix& m)
{
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Index j = 0; j < m.cols(); ++j) {
            r.push_back(m(i, j));
        }
        rows.push_back(r);
    }
    return rows;
}

json report_json(const SolveReport& r)
{
    return json{{"iterations", r.iterations}, {"residual", r.residual}, {"converged", r.converged}};
}

void require_converged(const std::vector<SolveReport>& reports)
{
    for (const SolveReport& r : reports) {
        if (!r.converged) {
            throw SolverError("solver did not converge (residual " + num(r.residual) + ")");
        }
    }
}

// ---------------------------------------------------------------- commands

json cmd_sample(const Context& ctx)
{
    const RunConfig& c = ctx.cfg;
    const GridSpec g = c.grid();
    io::save((ctx.out / "coefficients.bin").string(), c.coefficients(0));
    json j{{"grid_size", g.n()}, {"dimension", g.d()}, {"model", c.model}};
    if (c.model == "gaussian") {
        const GaussianSampler sampler(CovarianceSpec{c.gamma, c.effective_beta()}, g);
        std::vector<ScalarField> samples(static_cast<std::size_t>(std::max(2, c.realizations)));
        parallel_for(samples.size(), ctx.threads,
                     [&](std::size_t m) { samples[m] = sampler.sample(SeedSpec{c.seed, m, 0}); });
        const CovarianceProfile prof = empirical_covariance(samples);
        CsvWriter csv(ctx.out / "covariance.csv", {"r", "covariance", "stderr", "model"});
        std::vector<double> rs, cs;
        for (std::size_t k = 0; k < prof.r.size(); ++k) {
            csv.row({num(prof.r[k]), num(prof.c[k]), num(prof.stderr_[k]), num(std::pow(1.0 + prof.r[k], -c.gamma))});
            if (prof.r[k] >= 4.0 && prof.r[k] <= static_cast<double>(g.n()) / 8.0 && prof.c[k] > 0.0) {
                rs.push_back(prof.r[k]);
                cs.push_back(prof.c[k]);
            }
        }
        j["samples"] = samples.size();
        j["beta_effective"] = c.effective_beta();
        if (rs.size() >= 2) {
            j["covariance_fit"] = fit_json(fit_power_law(rs, cs));
        }
        const AdmissibilityReport adm = admissibility(c.coefficients(0));
        j["min_symmetric_eigenvalue"] = adm.min_symmetric_eigenvalue;
        j["max_operator_norm"] = adm.max_operator_norm;
    }
    return j;
}

json cmd_corrector(const Context& ctx)
{
    const RunConfig& c = ctx.cfg;
    const CoefficientField a = c.coefficients(0);
    const CorrectorSet set = build_corrector_set(a, c.solve_options());
    const fs::path dir = ctx.out / "corrector";
    fs::create_directories(dir);
    io::save((dir / "a.bin").string(), a);
    for (int i = 0; i < set.d(); ++i) {
        io::save((dir / ("phi_" + std::to_string(i) + ".bin")).string(), set.phi[static_cast<std::size_t>(i)]);
        io::save((dir / ("q_" + std::to_string(i) + ".bin")).string(), set.q[static_cast<std::size_t>(i)]);
    }
    io::save((dir / "sigma.bin").string(), set.sigma);
    json reports = json::array();
    for (const SolveReport& r : set.reports) {
        reports.push_back(report_json(r));
    }
    json flux = json::array();
    json energy = json::array();
    for (int i = 0; i < set.d(); ++i) {
        flux.push_back(flux_corrector_residual(set.sigma, set.q, i));
        energy.push_back(corrector_energy(set.phi[static_cast<std::size_t>(i)]));
    }
    require_converged(set.reports);
    return json{{"a_hom", matrix_json(set.a_hom.matrix)},
                {"a_hom_min_symmetric_eigenvalue", set.a_hom.min_symmetric_eigenvalue},
                {"a_hom_operator_norm", set.a_hom.operator_norm},
                {"solves", reports},
                {"tol", c.tol},
                {"flux_corrector_residual", flux},
                {"corrector_energy", energy}};
}

json cmd_diagnose(const Context& ctx)
{
    const RunConfig& c = ctx.cfg;
    const CoefficientField a = c.coefficients(0);
    const CorrectorSet set = build_corrector_set(a, c.solve_options());
    require_converged(set.reports);
    const GridSpec& g = set.grid;
    const MinimalRadiusReport mr = minimal_radius(set, c.delta);
    const std::vector<double> radii = c.radii.empty() ? dyadic_radii(g) : c.radii;
    const GrowthProfile gp = growth_profile(set, radii, c.effective_beta());
    const HoleFillingProfile hf = hole_filling_profile(set, 0, radii);
    CsvWriter csv(ctx.out / "diagnose.csv", {"radius", "scale_value", "growth_V", "growth_reference", "energy"});
    for (std::size_t k = 0; k < radii.size(); ++k) {
        double sv = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t q = 0; q < mr.radii.size(); ++q) {
            if (mr.radii[q] == radii[k]) {
                sv = mr.scale_values[q];
            }
        }
        csv.row({num(radii[k]), num(sv), num(gp.V[k]), num(gp.reference[k]), num(hf.energy[k])});
    }
    const auto avg = gradient_average_torus(set, std::vector<double>(static_cast<std::size_t>(g.d()), 1.0));
    return json{{"r_star", fnum(mr.r_star)},
                {"delta", c.delta},
                {"a_hom", matrix_json(set.a_hom.matrix)},
                {"hole_filling_epsilon", hf.epsilon_hat},
                {"max_doubling_ratio", hf.max_doubling_ratio},
                {"torus_gradient_average", avg},
                {"regime", growth_regime(g.d(), c.effective_beta()) == GrowthRegime::Bounded    ? "bounded"
                           : growth_regime(g.d(), c.effective_beta()) == GrowthRegime::Critical ? "critical"
                                                                                                : "growing"}};
}

void write_records(const fs::path& path, const std::vector<ExperimentRecord>& recs)
{
    CsvWriter csv(path, {"realization", "seed", "status", "quantity", "param", "value"});
    for (const ExperimentRecord& r : recs) {
        if (!r.ok) {
            csv.row({std::to_string(r.realization), std::to_string(r.seed), "failed", "", "", ""});
            continue;
        }
        for (const Measurement& m : r.values) {
            csv.row({std::to_string(r.realization), std::to_string(r.seed), "ok", m.quantity, format_param(m.param),
                     num(m.value)});
        }
    }
}

json cmd_experiment(const Context& ctx, ExperimentKind kind)
{
    ExperimentPlan plan = ctx.cfg.plan(kind);
    plan.threads = ctx.threads;
    json j{{"kind", to_string(kind)}, {"realizations", plan.M}, {"beta_effective", plan.beta()}};
    if (kind == ExperimentKind::TwoScale) {
        const TwoScaleTable t = twoscale_experiment(plan);
        write_records(ctx.out / "records.csv", t.records);
        CsvWriter csv(ctx.out / "twoscale.csv", {"N", "rms_error", "rate", "compensated"});
        for (std::size_t k = 0; k < t.N.size(); ++k) {
            csv.row({std::to_string(t.N[k]), num(t.mean_error[k]), num(t.rate[k]), num(t.compensated[k])});
        }
        j["fits"] = json{{"error_vs_eps", fit_json(t.fit)}};
        j["compensated_spread"] = t.compensated_spread;
        return j;
    }
    plan.validate();
    const auto recs = run_ensemble(plan);
    write_records(ctx.out / "records.csv", recs);
    const ExperimentSummary s = summarize(plan, recs);
    CsvWriter csv(ctx.out / "summary.csv", {"x", "y"});
    for (std::size_t k = 0; k < s.x.size(); ++k) {
        csv.row({num(s.x[k]), num(s.y[k])});
    }
    json fits = json::object();
    for (const auto& [name, f] : s.fits) {
        fits[name] = fit_json(f);
    }
    json scalars = json::object();
    for (const auto& [name, v] : s.scalars) {
        scalars[name] = fnum(v);
    }
    std::size_t failed = 0;
    for (const ExperimentRecord& r : recs) {
        failed += r.ok ? 0 : 1;
    }
    j["fits"] = fits;
    j["scalars"] = scalars;
    j["failed_realizations"] = failed;
    return j;
}

json cmd_partition_check(const Context& ctx)
{
    const RunConfig& c = ctx.cfg;
    const int d = c.dimension;
    CsvWriter csv(ctx.out / "partition.csv",
                  {"beta", "half_width", "cells", "tiling_exact", "C_meas", "gamma", "interaction_sum"});
    json rows = json::array();
    for (double beta : c.partition_beta) {
        const double gamma = d * (1.0 - beta) + 0.5;
        json per = json::array();
        for (double W : c.partition_half_width) {
            const Partition part = build_partition(W, beta, d);
            const TilingReport tr = check_tiling(part);
            const double C = check_refinement(part);
            const InteractionSumReport is = interaction_sum(part, gamma);
            csv.row({format_param(beta), format_param(W), std::to_string(part.cells.size()), tr.exact() ? "1" : "0",
                     num(C), format_param(gamma), num(is.value)});
            per.push_back(json{{"half_width", W},
                               {"cells", part.cells.size()},
                               {"tiling_exact", tr.exact()},
                               {"C_meas", C},
                               {"interaction_sum", is.value},
                               {"exact_evaluations", is.exact_evaluations}});
        }
        rows.push_back(json{{"beta", beta}, {"gamma", gamma}, {"ladder", per}});
    }
    if (!c.partition_half_width.empty() && !c.partition_beta.empty()) {
        std::ofstream os(ctx.out / "cells.csv", std::ios::binary);
        write_partition_csv(os, build_partition(c.partition_half_width.front(), c.partition_beta.front(), d));
    }
    return json{{"dimension", d}, {"results", rows}};
}

json cmd_sensitivity_check(const Context& ctx)
{
    const RunConfig& c = ctx.cfg;
    const CoefficientField a = c.coefficients(0);
    const SolveOptions opts = c.solve_options();
    const CorrectorSet corr = build_corrector_set(a, opts);
    require_converged(corr.reports);
    const GridSpec& g = corr.grid;
    const FunctionalKind kind = c.functional == "sigma" ? FunctionalKind::Sigma : FunctionalKind::Phi;
    FunctionalSpec spec{kind, 0, 0, 1, FunctionalSpec::ball_weight(g, 0, c.support_radius), c.support_radius};
    const DerivativeField deriv = malliavin_derivative(a, corr, spec, opts);
    io::save((ctx.out / "derivative.bin").string(), deriv.dF_da);
    Matrix diag{};
    diag[0][0] = 1.0;
    Matrix skew{};
    skew[0][1] = 1.0;
    skew[1][0] = -1.0;
    CsvWriter csv(ctx.out / "sensitivity.csv",
                  {"direction", "cell", "t", "adjoint", "fd", "fd_half", "rel_error", "rel_error_half", "richardson"});
    json checks = json::array();
    const double t = c.fd_amplitude();
    for (const auto& [name, dir] : {std::pair<std::string, Matrix>{"diagonal", diag}, {"skew", skew}}) {
        const Index d0 = most_sensitive_cell(deriv, dir);
        const FdCheckReport r = fd_check(a, corr, deriv, spec, d0, dir, t, opts);
        csv.row({name, std::to_string(d0), num(t), num(r.adjoint), num(r.fd), num(r.fd_half), num(r.rel_error),
                 num(r.rel_error_half), num(r.rel_error_richardson)});
        checks.push_back(json{{"direction", name},
                              {"cell", d0},
                              {"rel_error", r.rel_error},
                              {"halving_ratio", r.halving_ratio()},
                              {"richardson_rel_error", r.rel_error_richardson}});
    }
    json carre = json::object();
    for (Index side = 1; side <= g.n() / 4; side *= 2) {
        if (g.n() % side == 0) {
            carre["blocks_" + std::to_string(side)] = carre_du_champ(deriv, CellPartition::blocks(g, side));
        }
    }
    return json{{"functional", c.functional},
                {"F", evaluate_functional(corr, spec)},
                {"t", t},
                {"checks", checks},
                {"carre_du_champ", carre}};
}

std::string fftw_version_string() { return fftw_version; }

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"homlab: quantitative stochastic homogenization lab"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    unsigned threads = default_threads();
    app.add_option("--config", config_path, "key=value configuration file");
    app.add_option("--out", out_dir, "output directory (overrides output_dir)");
    app.add_option("--seed", seed, "master seed (overrides seed)");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    std::string command;
    std::optional<ExperimentKind> kind;
    for (const char* name : {"sample", "corrector", "diagnose", "partition-check", "sensitivity-check"}) {
        app.add_subcommand(name)->callback([&command, name] { command = name; });
    }
    CLI::App* exp = app.add_subcommand("experiment", "ensemble experiments");
    exp->require_subcommand(1);
    for (ExperimentKind k : {ExperimentKind::Scaling, ExperimentKind::Growth, ExperimentKind::Tail,
                             ExperimentKind::TwoScale, ExperimentKind::Excess, ExperimentKind::FBlock}) {
        exp->add_subcommand(to_string(k))->callback([&command, &kind, k] {
            command = "experiment";
            kind = k;
        });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    const auto start = std::chrono::steady_clock::now();
    json manifest{{"schema", 1},
                  {"command", kind ? "experiment " + to_string(*kind) : command},
                  {"versions", json{{"homlab", "1.0.0"},
                                    {"fftw", fftw_version_string()},
                                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                  std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                  std::to_string(EIGEN_MINOR_VERSION)}}},
                  {"threads", threads}};
    fs::path out = out_dir.empty() ? fs::path("out") : fs::path(out_dir);
    int rc = kExitOk;
    auto finish = [&](const std::string& status, const std::string& cause) {
        manifest["status"] = status;
        manifest["error"] = cause.empty() ? json(nullptr) : json(cause);
        manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        try {
            fs::create_directories(out);
            write_json(out / "manifest.json", manifest);
        } catch (const std::exception& e) {
            std::cerr << "homlab: cannot write manifest: " << e.what() << '\n';
        }
    };
    try {
        Context ctx;
        ctx.cfg = config_path.empty() ? RunConfig::parse("") : RunConfig::from_file(config_path);
        if (seed) {
            ctx.cfg.seed = *seed;
        }
        if (out_dir.empty()) {
            out = ctx.cfg.output_dir;
        }
        ctx.out = out;
        ctx.threads = threads;
        manifest["config"] = ctx.cfg.entries;
        manifest["seed"] = ctx.cfg.seed;
        fs::create_directories(out);
        json result;
        if (command == "sample") {
            result = cmd_sample(ctx);
        } else if (command == "corrector") {
            result = cmd_corrector(ctx);
        } else if (command == "diagnose") {
            result = cmd_diagnose(ctx);
        } else if (command == "partition-check") {
            result = cmd_partition_check(ctx);
        } else if (command == "sensitivity-check") {
            result = cmd_sensitivity_check(ctx);
        } else {
            result = cmd_experiment(ctx, *kind);
        }
        result["schema"] = 1;
        write_json(out / "summary.json", result);
        finish("ok", "");
    } catch (const ConfigError& e) {
        rc = kExitConfig;
        std::cerr << "homlab: config error: " << e.what() << '\n';
        finish("config_error", e.what());
    } catch (const InvalidArgument& e) {
        rc = kExitConfig;
        std::cerr << "homlab: invalid input: " << e.what() << '\n';
        finish("config_error", e.what());
    } catch (const SolverError& e) {
        rc = kExitSolver;
        std::cerr << "homlab: solver failure: " << e.what() << '\n';
        finish("solver_failure", e.what());
    } catch (const DegenerateCorrector& e) {
        rc = kExitSolver;
        std::cerr << "homlab: solver failure: " << e.what() << '\n';
        finish("solver_failure", e.what());
    }
    return rc;
}
