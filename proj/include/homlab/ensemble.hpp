#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "homlab/corrector.hpp"
#include "homlab/diagnostics.hpp"
#include "homlab/parallel.hpp"
#include "homlab/random_field.hpp"

namespace homlab {

// ---------------------------------------------------------------- fits

enum class FitKind { PowerLaw, StretchedExponential, LogLinear };

inline std::string to_string(FitKind k)
{
    switch (k) {
    case FitKind::PowerLaw:
        return "power_law";
    case FitKind::StretchedExponential:
        return "stretched_exponential";
    case FitKind::LogLinear:
        return "log_linear";
    }
    return "unknown";
}

struct FitResult {
    FitKind kind = FitKind::PowerLaw;
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = std::numeric_limits<double>::quiet_NaN();
    double r2 = 0.0;
    std::size_t points = 0;
    bool stderr_defined = false;
    bool degenerate = false;
    double ci_low = std::numeric_limits<double>::quiet_NaN();   // bootstrap 95% interval
    double ci_high = std::numeric_limits<double>::quiet_NaN();
};

/// Ordinary least squares y = intercept + slope x.
inline FitResult linear_fit(const std::vector<double>& x, const std::vector<double>& y, FitKind kind)
{
    require(x.size() == y.size(), "linear_fit: size mismatch");
    require(x.size() >= 2, "linear_fit: need at least two points");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    require(sxx > 0.0, "linear_fit: abscissae are all equal");
    FitResult f;
    f.kind = kind;
    f.points = x.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        ssr += r * r;
    }
    f.r2 = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
    if (x.size() >= 3) {
        f.stderr_slope = std::sqrt(ssr / (n - 2.0) / sxx);
        f.stderr_defined = true;
    }
    return f;
}

/// Least squares on (log r, log y). Two points interpolate exactly with the
/// standard error flagged undefined.
inline FitResult fit_power_law(const std::vector<double>& r, const std::vector<double>& y)
{
    require(r.size() == y.size() && r.size() >= 2, "fit_power_law: need at least two pairs");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!(y[i] > 0.0) || !(r[i] > 0.0)) {
            throw InvalidArgument("fit_power_law: nonpositive value");
        }
        lx.push_back(std::log(r[i]));
        ly.push_back(std::log(y[i]));
    }
    return linear_fit(lx, ly, FitKind::PowerLaw);
}

/// Least squares of V against log R.
inline FitResult fit_log_linear(const std::vector<double>& R, const std::vector<double>& V)
{
    require(R.size() == V.size() && R.size() >= 2, "fit_log_linear: need at least two pairs");
    std::vector<double> lx;
    for (double r : R) {
        require(r > 0.0, "fit_log_linear: nonpositive radius");
        lx.push_back(std::log(r));
    }
    return linear_fit(lx, V, FitKind::LogLinear);
}

struct TailTable {
    std::vector<double> t;         // dyadic thresholds
    std::vector<double> survival;  // P(r_* >= t)
    std::vector<std::size_t> count;
};

/// Empirical survival at dyadic thresholds holding at least min_count samples.
/// Infinite samples count as exceeding every threshold.
inline TailTable dyadic_survival(const std::vector<double>& samples, std::size_t min_count = 5)
{
    TailTable tab;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double s : samples) {
        require(s > 0.0, "dyadic_survival: samples must be positive");
        lo = std::min(lo, s);
        if (std::isfinite(s)) {
            hi = std::max(hi, s);
        }
    }
    if (!std::isfinite(lo)) {
        return tab;
    }
    const double n = static_cast<double>(samples.size());
    for (double t = std::exp2(std::floor(std::log2(lo))); t <= hi * (1.0 + 1e-12); t *= 2.0) {
        std::size_t c = 0;
        for (double s : samples) {
            c += s >= t * (1.0 - 1e-12) ? 1 : 0;
        }
        if (c < min_count) {
            break;
        }
        tab.t.push_back(t);
        tab.survival.push_back(static_cast<double>(c) / n);
        tab.count.push_back(c);
    }
    return tab;
}

/// Regression of log P(r_* >= t) against t^a on the populated dyadic range.
inline FitResult fit_tail(const std::vector<double>& samples, double a, std::size_t min_count = 5)
{
    require(samples.size() >= 32, "fit_tail: need at least 32 samples");
    require(a > 0.0, "fit_tail: exponent must be positive");
    FitResult f;
    f.kind = FitKind::StretchedExponential;
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    if (*mn == *mx) {
        f.degenerate = true;
        return f;
    }
    const TailTable tab = dyadic_survival(samples, min_count);
    if (tab.t.size() < 3) {
        f.degenerate = true;
        f.points = tab.t.size();
        return f;
    }
    std::vector<double> x, y;
    for (std::size_t i = 0; i < tab.t.size(); ++i) {
        x.push_back(std::pow(tab.t[i], a));
        y.push_back(std::log(tab.survival[i]));
    }
    return linear_fit(x, y, FitKind::StretchedExponential);
}

/// Percentile 95% interval of stat over B resamples of n units with replacement.
template <class Stat>
std::pair<double, double> bootstrap_interval(std::size_t n, Stat&& stat, std::uint64_t seed, int resamples = 1000)
{
    require(n >= 2, "bootstrap_interval: need at least two units");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> values;
    std::vector<std::size_t> idx(n);
    for (int b = 0; b < resamples; ++b) {
        for (std::size_t& i : idx) {
            i = pick(rng);
        }
        try {
            const double v = stat(idx);
            if (std::isfinite(v)) {
                values.push_back(v);
            }
        } catch (const InvalidArgument&) {
            // a resample without spread has no fit
        }
    }
    if (values.size() < 2) {
        return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    }
    std::sort(values.begin(), values.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(values.size() - 1);
        const auto k = static_cast<std::size_t>(std::floor(pos));
        const double w = pos - static_cast<double>(k);
        return k + 1 < values.size() ? (1.0 - w) * values[k] + w * values[k + 1] : values[k];
    };
    return {q(0.025), q(0.975)};
}

inline double median(std::vector<double> v)
{
    require(!v.empty(), "median: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- plans

enum class ExperimentKind { Scaling, Growth, Tail, TwoScale, Excess, FBlock };

inline std::string to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::Scaling:
        return "scaling";
    case ExperimentKind::Growth:
        return "growth";
    case ExperimentKind::Tail:
        return "tail";
    case ExperimentKind::TwoScale:
        return "twoscale";
    case ExperimentKind::Excess:
        return "excess";
    case ExperimentKind::FBlock:
        return "fblock";
    }
    return "unknown";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s)
{
    for (ExperimentKind k : {ExperimentKind::Scaling, ExperimentKind::Growth, ExperimentKind::Tail,
                             ExperimentKind::TwoScale, ExperimentKind::Excess, ExperimentKind::FBlock}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw InvalidArgument("unknown experiment kind '" + s + "'");
}

struct ExperimentPlan {
    ExperimentKind kind = ExperimentKind::Scaling;
    int d = 2;
    Index N = 64;
    CovarianceSpec covariance{2.5, 0.0};
    CoefficientModel model{0.25, 0.0};
    bool constant_coefficients = false;   // a = Id, the deterministic control
    int M = 8;
    std::uint64_t master_seed = 0;
    std::vector<double> radii;            // radius ladder (scaling, growth, excess)
    std::vector<Index> N_ladder;          // twoscale
    std::vector<double> T_ladder;         // fblock
    double delta = 1.0 / 16.0;            // minimal radius threshold
    std::vector<double> delta_ladder;     // tail: thresholds sharing one corrector (default {delta})
    Index center_stride = 0;              // tail: sublattice of centers for r_*(x); 0 = origin only
    double outer_fraction = 0.25;         // excess: outer ball radius / L
    SolveOptions solve;
    unsigned threads = 1;

    GridSpec grid() const { return GridSpec(d, N); }
    std::vector<double> deltas() const { return delta_ladder.empty() ? std::vector<double>{delta} : delta_ladder; }
    double beta() const { return covariance.beta_target; }

    void validate(int min_realizations = 8) const
    {
        require(d == 2 || d == 3, "plan: dimension must be 2 or 3");
        require(M >= min_realizations, "plan: need M >= " + std::to_string(min_realizations));
        solve.validate();
        model.validate();
        if (!constant_coefficients) {
            covariance.validate(d);
        }
        const double cap = static_cast<double>(N) / 8.0 + 1e-12;
        for (double r : radii) {
            require(r > 0.0 && r <= cap, "plan: radius ladder exceeds L/8");
        }
        for (double T : T_ladder) {
            require(T >= 1.0 && std::sqrt(T) <= cap, "plan: T ladder needs 1 <= T and sqrt(T) <= L/8");
        }
        for (Index n : N_ladder) {
            require(n >= 4 && n % 2 == 0, "plan: N ladder entries must be even and >= 4");
        }
        require(outer_fraction > 0.0 && outer_fraction <= 0.5, "plan: outer fraction must lie in (0, 1/2]");
        require(delta > 0.0, "plan: delta must be positive");
        for (double dl : delta_ladder) {
            require(dl > 0.0, "plan: delta ladder entries must be positive");
        }
        require(center_stride == 0 || (center_stride >= 1 && N % center_stride == 0),
                "plan: center stride must divide N");
        if (kind == ExperimentKind::Scaling) {
            require(radii.size() >= 2, "plan: scaling needs at least two radii");
        }
        if (kind == ExperimentKind::Growth || kind == ExperimentKind::Excess) {
            require(!radii.empty(), "plan: growth and excess need a radius ladder");
        }
        if (kind == ExperimentKind::FBlock) {
            require(T_ladder.size() >= 2, "plan: fblock needs at least two T values");
        }
        if (kind == ExperimentKind::TwoScale) {
            require(N_ladder.size() >= 2, "plan: two-scale needs at least two grid sizes");
        }
    }
};

struct Measurement {
    std::string quantity;
    double param = 0.0;
    double value = 0.0;
};

struct ExperimentRecord {
    std::size_t realization = 0;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    std::vector<Measurement> values;

    /// Values of one quantity in insertion order.
    std::vector<double> get(const std::string& quantity) const
    {
        std::vector<double> out;
        for (const Measurement& m : values) {
            if (m.quantity == quantity) {
                out.push_back(m.value);
            }
        }
        return out;
    }

    bool operator==(const ExperimentRecord& o) const
    {
        if (realization != o.realization || seed != o.seed || ok != o.ok || error != o.error ||
            values.size() != o.values.size()) {
            return false;
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i].quantity != o.values[i].quantity || values[i].param != o.values[i].param ||
                values[i].value != o.values[i].value) {
                return false;
            }
        }
        return true;
    }
};

class EnsembleFailure : public SolverError {
public:
    using SolverError::SolverError;
};

/// Coefficient field of one realization; identity for the constant control.
inline CoefficientField realization_coefficients(const ExperimentPlan& plan, const GridSpec& g, std::size_t m)
{
    if (plan.constant_coefficients) {
        return CoefficientField::constant(g, identity_matrix(g.d()));
    }
    const GaussianSampler sampler(plan.covariance, g);
    return sample_coefficients(sampler, plan.model, SeedSpec{plan.master_seed, m, 0});
}

/// One record per realization. measure(m, record) fills the values; solver
/// failures are recorded and the run fails when more than 10% fail. The
/// optional order permutes the execution order only.
template <class Measure>
std::vector<ExperimentRecord> run_realizations(const ExperimentPlan& plan, Measure&& measure,
                                               std::vector<std::size_t> order = {})
{
    const auto M = static_cast<std::size_t>(plan.M);
    if (order.empty()) {
        order.resize(M);
        for (std::size_t m = 0; m < M; ++m) {
            order[m] = m;
        }
    }
    require(order.size() == M, "run_realizations: order must permute the realizations");
    std::vector<ExperimentRecord> records(M);
    parallel_for(M, plan.threads, [&](std::size_t k) {
        const std::size_t m = order[k];
        ExperimentRecord& rec = records[m];
        rec.realization = m;
        rec.seed = SeedSpec{plan.master_seed, m, 0}.derived();
        try {
            measure(m, rec);
        } catch (const SolverError& e) {
            rec.ok = false;
            rec.error = e.what();
            rec.values.clear();
        } catch (const DegenerateCorrector& e) {
            rec.ok = false;
            rec.error = e.what();
            rec.values.clear();
        }
    });
    std::size_t failed = 0;
    for (const ExperimentRecord& r : records) {
        failed += r.ok ? 0 : 1;
    }
    if (10 * failed > M) {
        throw EnsembleFailure("ensemble: " + std::to_string(failed) + " of " + std::to_string(M) +
                              " realizations failed");
    }
    return records;
}

namespace detail {

inline CorrectorSet converged_corrector(const CoefficientField& a, const SolveOptions& opts, bool with_sigma)
{
    CorrectorSet set = build_corrector_set(a, opts, with_sigma);
    for (const SolveReport& r : set.reports) {
        if (!r.converged) {
            throw SolverError("corrector solve did not converge (residual " + std::to_string(r.residual) + ")");
        }
    }
    return set;
}

inline std::vector<ScalarField> converged_directions(const CoefficientField& a, const SolveOptions& opts,
                                                     std::vector<int> dirs)
{
    auto [phi, reports] = compute_corrector(a, opts, std::move(dirs));
    for (const SolveReport& r : reports) {
        if (!r.converged) {
            throw SolverError("corrector solve did not converge (residual " + std::to_string(r.residual) + ")");
        }
    }
    return std::move(phi);
}

}  // namespace detail

/// Per-realization functionals for every kind except twoscale.
inline void measure_realization(const ExperimentPlan& plan, std::size_t m, ExperimentRecord& rec)
{
    const GridSpec g = plan.grid();
    const CoefficientField a = realization_coefficients(plan, g, m);
    switch (plan.kind) {
    case ExperimentKind::Scaling: {
        // pooled over all centers: mean_x (mean_{box_r(x)} D+_1 phi_1)^2
        const auto phi = detail::converged_directions(a, plan.solve, {0});
        for (double r : plan.radii) {
            rec.values.push_back({"grad_avg_var", r, pooled_gradient_average_variance(phi.front(), 0, r)});
        }
        break;
    }
    case ExperimentKind::Growth: {
        const CorrectorSet corr = detail::converged_corrector(a, plan.solve, true);
        const GrowthProfile prof = growth_profile(corr, plan.radii, plan.beta());
        for (std::size_t k = 0; k < prof.radii.size(); ++k) {
            rec.values.push_back({"V", prof.radii[k], prof.V[k]});
        }
        break;
    }
    case ExperimentKind::Tail: {
        const CorrectorSet corr = detail::converged_corrector(a, plan.solve, true);
        for (double dl : plan.deltas()) {
            const std::vector<double> rs = plan.center_stride > 0
                                               ? minimal_radius_samples(corr, dl, plan.center_stride)
                                               : std::vector<double>{minimal_radius(corr, dl).r_star};
            for (double r : rs) {
                rec.values.push_back({"r_star", dl, r});
            }
        }
        break;
    }
    case ExperimentKind::Excess: {
        const CorrectorSet corr = detail::converged_corrector(a, plan.solve, true);
        const MinimalRadiusReport rs = minimal_radius(corr, plan.delta);
        const double R = plan.outer_fraction * static_cast<double>(plan.N);
        const double cap = static_cast<double>(plan.N) / 8.0;
        std::vector<double> rl;
        for (double r : plan.radii) {
            if (r >= 2.0 * rs.r_star && r <= cap) {
                rl.push_back(r);
            }
        }
        rec.values.push_back({"r_star", plan.delta, rs.r_star});
        if (rl.size() < 2) {
            rec.values.push_back({"exponent", 0.0, std::numeric_limits<double>::quiet_NaN()});
            break;
        }
        SolveReport rep;
        const ExcessDecayTable tab =
            excess_decay_experiment(a, corr, Ball{{0, 0, 0}, R}, rl, SeedSpec{plan.master_seed, m, 7}.derived(),
                                    plan.solve, &rep);
        for (std::size_t k = 0; k < tab.radii.size(); ++k) {
            rec.values.push_back({"excess", tab.radii[k], tab.excess[k]});
        }
        rec.values.push_back({"exponent", 0.0, tab.exponent});
        break;
    }
    case ExperimentKind::FBlock: {
        for (double T : plan.T_ladder) {
            const ModifiedCorrectorSet mod = compute_modified(a, T, plan.solve);
            for (const SolveReport& r : mod.reports) {
                if (!r.converged) {
                    throw SolverError("modified corrector solve did not converge");
                }
            }
            rec.values.push_back({"F_RT", T, compute_F_RT(mod, std::sqrt(T))});
        }
        break;
    }
    case ExperimentKind::TwoScale:
        throw InvalidArgument("measure_realization: twoscale runs through twoscale_experiment");
    }
}

/// Deterministic ensemble: identical plans give bit-identical records.
inline std::vector<ExperimentRecord> run_ensemble(const ExperimentPlan& plan, std::vector<std::size_t> order = {})
{
    plan.validate(1);
    return run_realizations(
        plan, [&](std::size_t m, ExperimentRecord& rec) { measure_realization(plan, m, rec); }, std::move(order));
}

// ---------------------------------------------------------------- two-scale

/// f(x) = amplitude * prod_a sin(2 pi x_a / N) + offset.
inline ScalarField sine_product(const GridSpec& g, double amplitude = 1.0, double offset = 0.0)
{
    ScalarField f(g);
    const double w = 2.0 * std::numbers::pi / static_cast<double>(g.n());
    for (Index c = 0; c < g.cells(); ++c) {
        const Coord x = g.coord(c);
        double v = amplitude;
        for (int a = 0; a < g.d(); ++a) {
            v *= std::sin(w * static_cast<double>(x[static_cast<std::size_t>(a)]));
        }
        f[c] = v + offset;
    }
    return f;
}

struct TwoScaleError {
    double error = 0.0;          // ||grad u - grad u_hom - D_i u_hom grad phi_i||
    double hessian_norm = 0.0;   // ||G grad grad u_hom||
    double normalized = 0.0;     // error / (N * hessian_norm), the macroscopic ratio
};

/// Two-scale error on one realization with macroscopic scale N = grid size.
inline TwoScaleError twoscale_error(const CoefficientField& a, const CorrectorSet& corr, const ScalarField& f,
                                    double beta, const SolveOptions& opts)
{
    const GridSpec& g = a.grid();
    const int d = g.d();
    const HomogenizedTensor& ah = corr.a_hom;
    if (ah.min_symmetric_eigenvalue <= 1e-8 * ah.operator_norm) {
        throw DegenerateCorrector("twoscale: a_hom is ill-conditioned");
    }
    Matrix Ah{};
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            Ah[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = ah.matrix(i, j);
        }
    }
    auto [u, ru] = solve_operator(a, f, 0.0, opts);
    auto [uh, rh] = solve_operator(CoefficientField::constant(g, Ah), f, 0.0, opts);
    if (!ru.converged || !rh.converged) {
        throw SolverError("twoscale: solve did not converge");
    }
    const VectorField gu = grad(u);
    const VectorField guh = grad(uh);
    std::vector<VectorField> gphi;
    for (const ScalarField& p : corr.phi) {
        gphi.push_back(grad(p));
    }
    ScalarField G(g);
    const double n = static_cast<double>(g.n());
    for (Index c = 0; c < g.cells(); ++c) {
        const Coord x = g.coord(c);
        double r2 = 0.0;
        for (int k = 0; k < d; ++k) {
            const double y = static_cast<double>(g.displacement(0, x[static_cast<std::size_t>(k)])) / n;
            r2 += y * y;
        }
        G[c] = twoscale_weight(d, beta, std::sqrt(r2));
    }
    TwoScaleError out;
    double e2 = 0.0;
    for (int k = 0; k < d; ++k) {
        for (Index c = 0; c < g.cells(); ++c) {
            double e = gu[k][c] - guh[k][c];
            for (int i = 0; i < d; ++i) {
                e -= guh[i][c] * gphi[static_cast<std::size_t>(i)][k][c];
            }
            e2 += e * e;
        }
    }
    double h2 = 0.0;
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < d; ++k) {
            const ScalarField hik = forward_difference(guh[i], k);
            for (Index c = 0; c < g.cells(); ++c) {
                h2 += G[c] * G[c] * hik[c] * hik[c];
            }
        }
    }
    out.error = std::sqrt(e2);
    out.hessian_norm = std::sqrt(h2);
    out.normalized = out.hessian_norm > 0.0 ? out.error / (n * out.hessian_norm) : 0.0;
    return out;
}

/// Predicted rate in eps = 1/N: eps, eps |log eps|^{1/2} at criticality, eps^{d(1-beta)/2} above.
inline double twoscale_rate(int d, double beta, double eps)
{
    switch (growth_regime(d, beta)) {
    case GrowthRegime::Bounded:
        return eps;
    case GrowthRegime::Critical:
        return eps * std::sqrt(std::abs(std::log(eps)));
    case GrowthRegime::Growing:
        break;
    }
    return std::pow(eps, 0.5 * d * (1.0 - beta));
}

struct TwoScaleTable {
    std::vector<Index> N;
    std::vector<double> mean_error;          // root mean square over realizations
    std::vector<double> rate;                // predicted rate at eps = 1/N
    std::vector<double> compensated;         // mean_error / rate
    std::vector<ExperimentRecord> records;   // quantity "twoscale", param N
    FitResult fit;                           // power law of mean_error against eps
    double compensated_spread = 0.0;         // max / min of compensated
};

inline TwoScaleTable twoscale_experiment(const ExperimentPlan& plan, const ScalarField* f_override = nullptr)
{
    plan.validate(1);
    require(plan.N_ladder.size() >= 2, "twoscale: need at least two grid sizes");
    TwoScaleTable tab;
    tab.records = run_realizations(plan, [&](std::size_t m, ExperimentRecord& rec) {
        for (Index N : plan.N_ladder) {
            const GridSpec g(plan.d, N);
            const CoefficientField a = realization_coefficients(plan, g, m);
            const CorrectorSet corr = detail::converged_corrector(a, plan.solve, false);
            const ScalarField f = f_override && f_override->grid() == g ? *f_override : sine_product(g);
            rec.values.push_back({"twoscale", static_cast<double>(N),
                                  twoscale_error(a, corr, f, plan.beta(), plan.solve).normalized});
        }
    });
    std::vector<double> eps;
    for (std::size_t k = 0; k < plan.N_ladder.size(); ++k) {
        const Index N = plan.N_ladder[k];
        double s = 0.0;
        std::size_t cnt = 0;
        for (const ExperimentRecord& r : tab.records) {
            if (r.ok) {
                const double v = r.values[k].value;
                s += v * v;
                ++cnt;
            }
        }
        const double e = std::sqrt(s / static_cast<double>(std::max<std::size_t>(cnt, 1)));
        const double ep = 1.0 / static_cast<double>(N);
        tab.N.push_back(N);
        tab.mean_error.push_back(e);
        tab.rate.push_back(twoscale_rate(plan.d, plan.beta(), ep));
        tab.compensated.push_back(e / tab.rate.back());
        eps.push_back(ep);
    }
    const bool all_positive = std::all_of(tab.mean_error.begin(), tab.mean_error.end(), [](double v) { return v > 0.0; });
    if (all_positive) {
        tab.fit = fit_power_law(eps, tab.mean_error);
        const auto [lo, hi] = std::minmax_element(tab.compensated.begin(), tab.compensated.end());
        tab.compensated_spread = *hi / *lo;
    } else {
        tab.fit.degenerate = true;
    }
    return tab;
}

// ---------------------------------------------------------------- summaries

/// Shortest decimal form that round-trips, for parameters in keys and CSV.
inline std::string format_param(double v)
{
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) {
            break;
        }
    }
    return buf;
}

struct ExperimentSummary {
    std::vector<double> x;                  // ladder
    std::vector<double> y;                  // aggregated quantity
    std::map<std::string, FitResult> fits;
    std::map<std::string, double> scalars;
};

/// Mean over ok records of quantity values at each ladder position.
inline std::vector<double> ladder_mean(const std::vector<ExperimentRecord>& recs, const std::string& q,
                                       const std::vector<std::size_t>& units = {})
{
    std::vector<double> acc;
    std::size_t cnt = 0;
    auto add = [&](const ExperimentRecord& r) {
        if (!r.ok) {
            return;
        }
        const auto v = r.get(q);
        if (acc.empty()) {
            acc.assign(v.size(), 0.0);
        }
        for (std::size_t k = 0; k < v.size() && k < acc.size(); ++k) {
            acc[k] += v[k];
        }
        ++cnt;
    };
    if (units.empty()) {
        for (const ExperimentRecord& r : recs) {
            add(r);
        }
    } else {
        for (std::size_t u : units) {
            add(recs[u]);
        }
    }
    for (double& v : acc) {
        v /= static_cast<double>(std::max<std::size_t>(cnt, 1));
    }
    return acc;
}

/// Fits and regime scalars of a finished ensemble.
inline ExperimentSummary summarize(const ExperimentPlan& plan, const std::vector<ExperimentRecord>& recs,
                                   int bootstrap_resamples = 1000)
{
    ExperimentSummary s;
    const std::uint64_t bseed = SeedSpec{plan.master_seed, 0, 99}.derived();
    switch (plan.kind) {
    case ExperimentKind::Scaling: {
        s.x = plan.radii;
        const auto var = ladder_mean(recs, "grad_avg_var");
        for (double v : var) {
            s.y.push_back(std::sqrt(v));
        }
        FitResult f = fit_power_law(s.x, s.y);
        std::tie(f.ci_low, f.ci_high) = bootstrap_interval(
            recs.size(),
            [&](const std::vector<std::size_t>& idx) {
                auto v = ladder_mean(recs, "grad_avg_var", idx);
                for (double& x : v) {
                    x = std::sqrt(x);
                }
                return fit_power_law(s.x, v).slope;
            },
            bseed, bootstrap_resamples);
        s.fits["sd_vs_r"] = f;
        s.scalars["predicted_slope"] = -0.5 * plan.d * (1.0 - plan.beta());
        break;
    }
    case ExperimentKind::Growth: {
        s.x = plan.radii;
        std::vector<std::vector<double>> per(plan.radii.size());
        for (const ExperimentRecord& r : recs) {
            if (r.ok) {
                const auto v = r.get("V");
                for (std::size_t k = 0; k < v.size(); ++k) {
                    per[k].push_back(v[k]);
                }
            }
        }
        std::vector<double> ratios;
        for (const ExperimentRecord& r : recs) {
            if (r.ok) {
                const auto v = r.get("V");
                ratios.push_back(v.back() / v.front());
            }
        }
        for (auto& p : per) {
            s.y.push_back(median(p));
        }
        s.scalars["median_ratio_last_first"] = median(ratios);
        s.fits["V_vs_logR"] = fit_log_linear(s.x, s.y);
        s.fits["V_power_law"] = fit_power_law(s.x, s.y);
        break;
    }
    case ExperimentKind::Tail: {
        const double a = plan.d * (1.0 - plan.beta());
        for (double dl : plan.deltas()) {
            std::vector<double> rs;
            for (const ExperimentRecord& r : recs) {
                if (!r.ok) {
                    continue;
                }
                for (const Measurement& m : r.values) {
                    if (m.quantity == "r_star" && m.param == dl) {
                        rs.push_back(m.value);
                    }
                }
            }
            const std::string tag = plan.deltas().size() == 1 ? "" : "_delta=" + format_param(dl);
            if (rs.size() >= 32) {
                s.fits["tail" + tag] = fit_tail(rs, a);
                if (dl == plan.deltas().front()) {
                    const TailTable tab = dyadic_survival(rs);
                    s.x = tab.t;
                    s.y = tab.survival;
                }
            }
            s.scalars["median_r_star" + tag] = rs.empty() ? 0.0 : median(rs);
            s.scalars["samples" + tag] = static_cast<double>(rs.size());
        }
        break;
    }
    case ExperimentKind::Excess: {
        std::vector<double> ex;
        for (const ExperimentRecord& r : recs) {
            if (r.ok) {
                const double e = r.get("exponent").front();
                if (std::isfinite(e)) {
                    ex.push_back(e);
                }
            }
        }
        s.scalars["usable_realizations"] = static_cast<double>(ex.size());
        s.scalars["median_exponent"] = ex.empty() ? std::numeric_limits<double>::quiet_NaN() : median(ex);
        break;
    }
    case ExperimentKind::FBlock: {
        s.x = plan.T_ladder;
        s.y = ladder_mean(recs, "F_RT");
        if (s.x.size() >= 2 && std::all_of(s.y.begin(), s.y.end(), [](double v) { return v > 0.0; })) {
            s.fits["F_vs_T"] = fit_power_law(s.x, s.y);
        }
        break;
    }
    case ExperimentKind::TwoScale:
        break;
    }
    return s;
}

}  // namespace homlab
