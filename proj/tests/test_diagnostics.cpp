#include <gtest/gtest.h>

#include "homlab/diagnostics.hpp"
#include "homlab/random_field.hpp"

using namespace homlab;

namespace {

CoefficientField random_coefficients(const GridSpec& g, std::uint64_t seed, double skew = 0.0)
{
    const GaussianSampler sampler(CovarianceSpec{2.5, 0.0}, g);
    return sample_coefficients(sampler, CoefficientModel{0.25, skew}, SeedSpec{seed, 0, 0});
}

CorrectorSet identity_corrector(const GridSpec& g)
{
    return build_corrector_set(CoefficientField::constant(g, identity_matrix(g.d())));
}

ScalarField harmonic_coordinate(const CorrectorSet& corr, int i)
{
    const GridSpec& g = corr.grid;
    ScalarField u(g);
    for (Index c = 0; c < g.cells(); ++c) {
        u[c] = static_cast<double>(g.coord(c)[i]) + corr.phi[static_cast<std::size_t>(i)][c];
    }
    return u;
}

}  // namespace

TEST(Excess, HarmonicCoordinateHasZeroExcess)
{
    const GridSpec g(2, 64);
    const CorrectorSet corr = build_corrector_set(random_coefficients(g, 3, 0.2));
    const ExcessReport rep = excess(shifted_gradient(corr.phi[0], 0), corr, Ball{{20, 30, 0}, 8.0});
    EXPECT_NEAR(rep.xi[0], 1.0, 1e-12);
    EXPECT_NEAR(rep.xi[1], 0.0, 1e-12);
    EXPECT_LE(rep.excess, 1e-20);
    EXPECT_TRUE(rep.gram.isApprox(rep.gram.transpose()));
    EXPECT_GE(symmetric_min_eigenvalue(rep.gram), 0.0);
}

TEST(Excess, HarmonicQuadraticDecaysLikeRSquared)
{
    const GridSpec g(2, 128);
    const CorrectorSet corr = identity_corrector(g);
    DynMatrix B(2, 2);
    B << 1.0, 0.0, 0.0, -1.0;
    const ScalarField u = quadratic_field(g, B, {64, 64, 0});
    const VectorField gu = grad(u);
    for (double r : {4.0, 8.0, 16.0}) {
        const double e1 = excess(gu, corr, Ball{{64, 64, 0}, r}).excess;
        const double e2 = excess(gu, corr, Ball{{64, 64, 0}, 2.0 * r}).excess;
        EXPECT_NEAR(e1 / e2, 0.25, 0.02) << "r=" << r;
    }
}

TEST(Excess, InvariantUnderConstantsAndAffineCorrectors)
{
    const GridSpec g(2, 64);
    const CorrectorSet corr = build_corrector_set(random_coefficients(g, 5));
    DynMatrix B(2, 2);
    B << 0.3, 1.0, 1.0, -0.3;
    const ScalarField u = quadratic_field(g, B, {32, 32, 0});
    const Ball ball{{32, 32, 0}, 10.0};
    const double e0 = excess(grad(u), corr, ball).excess;
    ScalarField v = u;
    for (Index c = 0; c < g.cells(); ++c) {
        v[c] += 4.0 + 0.7 * (static_cast<double>(g.coord(c)[0]) + corr.phi[0][c]) -
                1.1 * (static_cast<double>(g.coord(c)[1]) + corr.phi[1][c]);
    }
    EXPECT_NEAR(excess(grad(v), corr, ball).excess, e0, 1e-9 * e0);
}

TEST(Excess, DegenerateGramIsReported)
{
    const GridSpec g(2, 16);
    const std::vector<VectorField> basis(2, unit_vector_field(g, 0));
    EXPECT_THROW(excess(unit_vector_field(g, 1), basis, Ball{{0, 0, 0}, 3.0}), DegenerateCorrector);
}

TEST(MinimalRadius, ConstantCoefficientsAndMonotoneInDelta)
{
    const GridSpec g(2, 64);
    EXPECT_EQ(minimal_radius(identity_corrector(g), 1.0 / 16.0).r_star, 1.0);
    EXPECT_THROW(minimal_radius(identity_corrector(g), 0.0), InvalidArgument);
    const CorrectorSet corr = build_corrector_set(random_coefficients(g, 8));
    double prev = 0.0;
    for (double delta : {1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0, 1e-4, 1e-8}) {
        const MinimalRadiusReport rep = minimal_radius(corr, delta, {5, 9, 0});
        EXPECT_GE(rep.r_star, prev);
        prev = rep.r_star;
        EXPECT_EQ(rep.radii.back(), 8.0);
    }
    EXPECT_FALSE(minimal_radius(corr, 1e-8).finite());
}

TEST(MinimalRadius, GramNonDegenerateAboveTwiceRStar)
{
    const GridSpec g(2, 128);
    const CorrectorSet corr = build_corrector_set(random_coefficients(g, 12));
    const MinimalRadiusReport rep = minimal_radius(corr, 1.0 / 16.0);
    ASSERT_TRUE(rep.finite());
    const auto basis = harmonic_gradients(corr);
    for (double r = 2.0 * rep.r_star; r <= 16.0; r *= 2.0) {
        const ExcessReport e = excess(basis[0], basis, Ball{{0, 0, 0}, r});
        EXPECT_GE(symmetric_min_eigenvalue(e.gram), 0.4) << "r=" << r;
    }
}

TEST(ExcessDecay, ConstantCoefficientControl)
{
    const GridSpec g(2, 128);
    const auto a = CoefficientField::constant(g, identity_matrix(2));
    const CorrectorSet corr = build_corrector_set(a);
    const auto table = excess_decay_experiment(a, corr, Ball{{64, 64, 0}, 32.0}, {4.0, 8.0, 16.0}, 7);
    EXPECT_NEAR(table.exponent, 2.0, 0.2);
    for (double q : table.ratio) {
        EXPECT_LT(q, 1.0);
    }
}

TEST(ExcessDecay, HarmonicCoordinateTableVanishes)
{
    const GridSpec g(2, 64);
    const auto a = random_coefficients(g, 4);
    SolveOptions o;
    o.tol = 1e-11;
    const CorrectorSet corr = build_corrector_set(a, o);
    const ScalarField x1 = harmonic_coordinate(corr, 0);
    const Ball outer{{32, 32, 0}, 16.0};
    auto [u, rep] = solve_dirichlet_ball(a, outer, x1, o);
    ASSERT_TRUE(rep.converged);
    const auto table = excess_decay_table(u, harmonic_gradients(corr), outer, {4.0, 8.0});
    for (double e : table.excess) {
        EXPECT_LE(e, 1e-12);
    }
}

TEST(ExcessDecay, RandomQuadraticIsHarmonicForAhom)
{
    DynMatrix ah(2, 2);
    ah << 0.6, 0.1, -0.1, 0.4;
    const DynMatrix B = random_harmonic_quadratic(ah, 3);
    EXPECT_NEAR((ah * B).trace(), 0.0, 1e-14);
    EXPECT_NEAR(B.norm(), 1.0, 1e-14);
    EXPECT_TRUE(B.isApprox(B.transpose()));
}

TEST(MeanValueRatio, HarmonicAndCorrectorBrackets)
{
    const GridSpec g(2, 128);
    const auto id = CoefficientField::constant(g, identity_matrix(2));
    DynMatrix B(2, 2);
    B << 0.0, 1.0, 1.0, 0.0;
    const Ball outer{{64, 64, 0}, 32.0};
    auto [u, rep] = solve_dirichlet_ball(id, outer, quadratic_field(g, B, outer.center));
    ASSERT_TRUE(rep.converged);
    for (double r : {4.0, 8.0, 16.0}) {
        EXPECT_LE(mean_value_ratio(u, outer, r), 1.0 + 1.0 / r);
    }
    const CorrectorSet corr = build_corrector_set(random_coefficients(g, 14));
    const ScalarField x1 = harmonic_coordinate(corr, 0);
    const Ball ball{{64, 64, 0}, 32.0};
    for (double r : {8.0, 16.0}) {
        const double q = mean_value_ratio(x1, ball, r);
        EXPECT_GE(q, 0.5);
        EXPECT_LE(q, 50.0);
    }
}

TEST(GradientAverage, TorusAndConstantCases)
{
    const GridSpec g(2, 64);
    const CorrectorSet corr = build_corrector_set(random_coefficients(g, 6));
    for (double v : gradient_average_torus(corr, {0.6, 0.8})) {
        EXPECT_NEAR(v, 0.0, 1e-15);
    }
    const auto local = gradient_average(corr, {1.0, 0.0}, 4.0, {10, 10, 0});
    EXPECT_EQ(local.size(), 4u);
    EXPECT_GT(std::abs(local[0]), 0.0);
    for (double v : gradient_average(identity_corrector(g), {1.0, 0.0}, 8.0)) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_THROW(gradient_average(corr, {1.0, 0.0}, 9.0), InvalidArgument);
}

TEST(GradientAverage, PooledVarianceMatchesDirectAverage)
{
    const GridSpec g(2, 32);
    const CorrectorSet corr = build_corrector_set(random_coefficients(g, 10));
    double direct = 0.0;
    for (Index c = 0; c < g.cells(); ++c) {
        const double v = gradient_average(corr, {1.0, 0.0}, 3.0, g.coord(c))[0];
        direct += v * v / static_cast<double>(g.cells());
    }
    EXPECT_NEAR(pooled_gradient_average_variance(corr.phi[0], 0, 3.0), direct, 1e-14);
}

TEST(GrowthProfile, ConstantAndCenterConsistency)
{
    const GridSpec g(2, 32);
    const auto zero = growth_profile(identity_corrector(g), {1.0, 2.0, 4.0}, 0.0);
    for (double v : zero.V) {
        EXPECT_EQ(v, 0.0);
    }
    const CorrectorSet corr = build_corrector_set(random_coefficients(g, 2));
    std::vector<Coord> all;
    for (Index c = 0; c < g.cells(); ++c) {
        all.push_back(g.coord(c));
    }
    const auto spectral = growth_profile(corr, {2.0, 4.0}, 0.0);
    const auto direct = growth_profile(corr, {2.0, 4.0}, 0.0, all);
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_NEAR(spectral.V[k], direct.V[k], 1e-10 * direct.V[k]);
        EXPECT_GT(spectral.V[k], 0.0);
    }
    EXPECT_THROW(growth_profile(corr, {8.0}, 0.0), InvalidArgument);
}

TEST(GrowthProfile, ReferenceCurves)
{
    EXPECT_EQ(growth_regime(2, 0.0), GrowthRegime::Critical);
    EXPECT_EQ(growth_regime(3, 0.0), GrowthRegime::Bounded);
    EXPECT_EQ(growth_regime(3, 0.5), GrowthRegime::Growing);
    EXPECT_DOUBLE_EQ(growth_reference(3, 0.0, 64.0), 1.0);
    EXPECT_DOUBLE_EQ(growth_reference(2, 0.0, 62.0), std::log(64.0));
    EXPECT_NEAR(growth_reference(2, 0.5, 16.0), std::pow(1.0 + 4.0, 2), 1e-12);
    EXPECT_NEAR(twoscale_weight(2, 0.0, 2.0), std::sqrt(std::log(4.0)), 1e-15);
}

TEST(HoleFilling, DoublingRatiosBounded)
{
    const GridSpec g(2, 128);
    const CorrectorSet corr = build_corrector_set(random_coefficients(g, 16));
    const auto h = hole_filling_profile(corr, 0, {1.0, 2.0, 4.0, 8.0, 16.0});
    EXPECT_EQ(h.doubling_ratio.size(), 4u);
    EXPECT_LE(h.max_doubling_ratio, 4.0);
    EXPECT_GT(h.epsilon_hat, 0.0);
    EXPECT_LE(h.epsilon_hat, 1.0);
}
