#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "homlab/ensemble.hpp"

using namespace homlab;

namespace {

std::vector<double> ladder(std::initializer_list<double> v) { return v; }

ExperimentPlan small_plan(ExperimentKind kind)
{
    ExperimentPlan p;
    p.kind = kind;
    p.d = 2;
    p.N = 32;
    p.M = 8;
    p.master_seed = 17;
    p.radii = {1.0, 2.0, 4.0};
    return p;
}

}  // namespace

TEST(FitPowerLaw, ExactInverseLaw)
{
    const auto r = ladder({1, 2, 4, 8, 16});
    std::vector<double> y;
    for (double x : r) {
        y.push_back(1.0 / x);
    }
    const FitResult f = fit_power_law(r, y);
    EXPECT_NEAR(f.slope, -1.0, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    EXPECT_TRUE(f.stderr_defined);
    EXPECT_NEAR(f.stderr_slope, 0.0, 1e-12);
}

TEST(FitPowerLaw, NoisyExponent)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.01);
    std::vector<double> r, y;
    for (double x = 2.0; x <= 256.0; x *= 2.0) {
        r.push_back(x);
        y.push_back(3.0 * std::pow(x, -1.5) * (1.0 + n(rng)));
    }
    const FitResult f = fit_power_law(r, y);
    EXPECT_NEAR(f.slope, -1.5, 0.05);
    EXPECT_NEAR(std::exp(f.intercept), 3.0, 0.1);
}

TEST(FitPowerLaw, TwoPointsInterpolateWithUndefinedError)
{
    const FitResult f = fit_power_law(ladder({2, 8}), ladder({4, 1}));
    EXPECT_NEAR(f.slope, -1.0, 1e-12);
    EXPECT_FALSE(f.stderr_defined);
    EXPECT_TRUE(std::isnan(f.stderr_slope));
}

TEST(FitPowerLaw, RejectsNonpositiveValues)
{
    EXPECT_THROW(fit_power_law(ladder({1, 2, 3}), ladder({1, 0, 1})), InvalidArgument);
    EXPECT_THROW(fit_power_law(ladder({1, 2, 3}), ladder({1, -1, 1})), InvalidArgument);
    EXPECT_THROW(fit_power_law(ladder({1}), ladder({1})), InvalidArgument);
}

TEST(FitPowerLaw, RecoversRandomExponentsWithinThreeStandardErrors)
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> expo(-3.0, 0.0);
    std::normal_distribution<double> n(0.0, 0.05);
    int inside = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        const double p = expo(rng);
        std::vector<double> r, y;
        for (int k = 0; k < 20; ++k) {
            const double x = std::pow(2.0, 0.4 * k);
            r.push_back(x);
            y.push_back(std::pow(x, p) * std::exp(n(rng)));
        }
        const FitResult f = fit_power_law(r, y);
        inside += std::abs(f.slope - p) <= 3.0 * f.stderr_slope ? 1 : 0;
    }
    EXPECT_GE(inside, trials * 97 / 100);
}

TEST(FitLogLinear, RecoversLogarithmicGrowth)
{
    const auto R = ladder({2, 4, 8, 16, 32});
    std::vector<double> V;
    for (double r : R) {
        V.push_back(0.5 + 0.3 * std::log(r));
    }
    const FitResult f = fit_log_linear(R, V);
    EXPECT_NEAR(f.slope, 0.3, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
}

TEST(FitTail, StretchedExponentialSyntheticOracle)
{
    const double C = 50.0, a = 2.0;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> s;
    for (int k = 0; k < 4096; ++k) {
        s.push_back(std::pow(-C * std::log(1.0 - u(rng)), 1.0 / a));
    }
    const FitResult f = fit_tail(s, a);
    EXPECT_FALSE(f.degenerate);
    EXPECT_GE(f.r2, 0.98);
    EXPECT_NEAR(f.slope, -1.0 / C, 0.1 / C);

    const FitResult h = fit_tail(s, a / 2.0);
    EXPECT_GT(std::abs(h.slope - f.slope), 0.1 / C);
    EXPECT_LT(h.r2, f.r2);
}

TEST(FitTail, ConstantSamplesAreDegenerate)
{
    const std::vector<double> s(64, 1.0);
    EXPECT_TRUE(fit_tail(s, 2.0).degenerate);
    EXPECT_THROW(fit_tail(std::vector<double>(31, 1.0), 2.0), InvalidArgument);
}

TEST(Bootstrap, IntervalBracketsTheEstimate)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(1.0, 1.0);
    std::vector<double> x;
    for (int k = 0; k < 200; ++k) {
        x.push_back(n(rng));
    }
    auto mean_of = [&](const std::vector<std::size_t>& idx) {
        double s = 0.0;
        for (std::size_t i : idx) {
            s += x[i];
        }
        return s / static_cast<double>(idx.size());
    };
    std::vector<std::size_t> all(x.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = i;
    }
    const auto [lo, hi] = bootstrap_interval(x.size(), mean_of, 9);
    EXPECT_LT(lo, mean_of(all));
    EXPECT_GT(hi, mean_of(all));
    EXPECT_NEAR(hi - lo, 2.0 * 1.96 / std::sqrt(200.0), 0.07);
}

TEST(Plan, ValidatesLaddersAndRealizations)
{
    ExperimentPlan p = small_plan(ExperimentKind::Scaling);
    EXPECT_NO_THROW(p.validate());
    p.radii.push_back(5.0);
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = small_plan(ExperimentKind::Scaling);
    p.M = 4;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = small_plan(ExperimentKind::FBlock);
    p.T_ladder = {32.0};
    EXPECT_THROW(p.validate(), InvalidArgument);
    p.T_ladder = {4.0};
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = small_plan(ExperimentKind::Scaling);
    p.radii = {2.0};
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = small_plan(ExperimentKind::Excess);
    p.radii.clear();
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = small_plan(ExperimentKind::TwoScale);
    p.N_ladder = {16};
    EXPECT_THROW(p.validate(), InvalidArgument);
    EXPECT_EQ(experiment_kind_from_string("growth"), ExperimentKind::Growth);
    EXPECT_THROW(experiment_kind_from_string("nope"), InvalidArgument);
}

TEST(RunEnsemble, ConstantCoefficientsGiveZeroFunctionals)
{
    ExperimentPlan p = small_plan(ExperimentKind::Scaling);
    p.M = 2;
    p.constant_coefficients = true;
    for (const ExperimentRecord& r : run_ensemble(p)) {
        ASSERT_TRUE(r.ok);
        for (const Measurement& m : r.values) {
            EXPECT_EQ(m.value, 0.0);
        }
    }
    p.kind = ExperimentKind::Growth;
    for (const ExperimentRecord& r : run_ensemble(p)) {
        for (const Measurement& m : r.values) {
            EXPECT_NEAR(m.value, 0.0, 1e-20);
        }
    }
}

TEST(RunEnsemble, ConstantTailIsDegenerate)
{
    ExperimentPlan p = small_plan(ExperimentKind::Tail);
    p.M = 32;
    p.constant_coefficients = true;
    const auto recs = run_ensemble(p);
    for (const ExperimentRecord& r : recs) {
        EXPECT_EQ(r.get("r_star").front(), 1.0);
    }
    EXPECT_TRUE(summarize(p, recs).fits.at("tail").degenerate);
}

TEST(RunEnsemble, DeterministicAndOrderIndependent)
{
    ExperimentPlan p = small_plan(ExperimentKind::Growth);
    p.M = 4;
    const auto a = run_ensemble(p);
    const auto b = run_ensemble(p);
    EXPECT_EQ(a, b);
    const auto c = run_ensemble(p, {2, 0, 3, 1});
    EXPECT_EQ(a, c);
    p.threads = 3;
    EXPECT_EQ(a, run_ensemble(p));
    p.master_seed += 1;
    EXPECT_FALSE(a == run_ensemble(p));
}

TEST(RunEnsemble, FailureThreshold)
{
    ExperimentPlan p = small_plan(ExperimentKind::Scaling);
    p.M = 10;
    auto failing = [](std::size_t k) {
        return [k](std::size_t m, ExperimentRecord& rec) {
            if (m < k) {
                throw SolverError("injected");
            }
            rec.values.push_back({"x", 0.0, 1.0});
        };
    };
    const auto recs = run_realizations(p, failing(1));
    EXPECT_FALSE(recs[0].ok);
    EXPECT_EQ(recs[0].error, "injected");
    EXPECT_TRUE(recs[1].ok);
    EXPECT_THROW(run_realizations(p, failing(2)), EnsembleFailure);
}

TEST(RunEnsemble, ScalingSummaryFitsNegativeSlope)
{
    ExperimentPlan p = small_plan(ExperimentKind::Scaling);
    p.N = 64;
    p.radii = {2.0, 4.0, 8.0};
    const auto recs = run_ensemble(p);
    const ExperimentSummary s = summarize(p, recs, 200);
    const FitResult& f = s.fits.at("sd_vs_r");
    EXPECT_LT(f.slope, -0.5);
    EXPECT_LE(f.ci_low, f.slope);
    EXPECT_GE(f.ci_high, f.slope);
}

TEST(TwoScale, ConstantCoefficientsGiveZeroError)
{
    ExperimentPlan p = small_plan(ExperimentKind::TwoScale);
    p.M = 1;
    p.constant_coefficients = true;
    p.N_ladder = {8, 16};
    p.solve.tol = 1e-12;
    const TwoScaleTable t = twoscale_experiment(p);
    for (double e : t.mean_error) {
        EXPECT_LE(e, 1e-10);
    }
}

TEST(TwoScale, GaugeInvariantAndLinearInAmplitude)
{
    const GridSpec g(2, 32);
    ExperimentPlan p = small_plan(ExperimentKind::TwoScale);
    p.solve.tol = 1e-12;
    const CoefficientField a = realization_coefficients(p, g, 0);
    const CorrectorSet corr = build_corrector_set(a, p.solve, false);
    const TwoScaleError base = twoscale_error(a, corr, sine_product(g), 0.0, p.solve);
    const TwoScaleError shifted = twoscale_error(a, corr, sine_product(g, 1.0, 0.7), 0.0, p.solve);
    const TwoScaleError doubled = twoscale_error(a, corr, sine_product(g, 2.0), 0.0, p.solve);
    EXPECT_GT(base.normalized, 0.0);
    EXPECT_NEAR(shifted.normalized, base.normalized, 1e-8 * base.normalized);
    EXPECT_NEAR(doubled.error, 2.0 * base.error, 1e-8 * base.error);
    EXPECT_NEAR(doubled.normalized, base.normalized, 1e-8 * base.normalized);
}

TEST(TwoScale, RatePrefactors)
{
    EXPECT_DOUBLE_EQ(twoscale_rate(3, 0.0, 0.1), 0.1);
    EXPECT_NEAR(twoscale_rate(2, 0.0, 0.1), 0.1 * std::sqrt(std::log(10.0)), 1e-15);
    EXPECT_NEAR(twoscale_rate(3, 0.5, 0.01), std::pow(0.01, 0.75), 1e-15);
}

TEST(RunEnsemble, TailPoolsCentersAndThresholds)
{
    ExperimentPlan p = small_plan(ExperimentKind::Tail);
    p.M = 2;
    p.center_stride = 8;
    p.delta_ladder = {1.0 / 8.0, 1.0 / 32.0};
    const auto recs = run_ensemble(p);
    for (const ExperimentRecord& r : recs) {
        ASSERT_EQ(r.values.size(), 2u * 16u);
        for (std::size_t k = 0; k < 16; ++k) {
            // r_* is antitone in delta
            EXPECT_LE(r.values[k].value, r.values[16 + k].value);
        }
    }
    const ExperimentSummary s = summarize(p, recs);
    EXPECT_EQ(s.scalars.at("samples_delta=0.125"), 32.0);
    EXPECT_TRUE(s.fits.count("tail_delta=0.03125") == 1);
    EXPECT_EQ(format_param(0.1), "0.1");
    EXPECT_EQ(format_param(64.0), "64");
}

TEST(RunEnsemble, ExcessDecayConstantControl)
{
    ExperimentPlan p = small_plan(ExperimentKind::Excess);
    p.N = 128;
    p.radii = {2.0, 4.0, 8.0, 16.0};
    p.constant_coefficients = true;
    const ExperimentSummary s = summarize(p, run_ensemble(p));
    EXPECT_EQ(s.scalars.at("usable_realizations"), 8.0);
    EXPECT_NEAR(s.scalars.at("median_exponent"), 2.0, 0.2);
}
