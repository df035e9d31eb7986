#include <gtest/gtest.h>

#include <random>

#include "homlab/corrector.hpp"
#include "homlab/random_field.hpp"

using namespace homlab;

namespace {

CoefficientField laminate(const GridSpec& g, const std::vector<double>& alpha)
{
    CoefficientField a(g);
    for (Index c = 0; c < g.cells(); ++c) {
        const double v = alpha[static_cast<std::size_t>(g.coord(c)[0]) % alpha.size()];
        for (int i = 0; i < g.d(); ++i) {
            a(c, i, i) = v;
        }
    }
    return a;
}

CoefficientField random_coefficients(const GridSpec& g, std::uint64_t seed, double skew = 0.0)
{
    const GaussianSampler sampler(CovarianceSpec{2.5, 0.0}, g);
    return sample_coefficients(sampler, CoefficientModel{0.25, skew}, SeedSpec{seed, 0, 0});
}

double relative_residual(const CoefficientField& a, const ScalarField& u, const VectorField& gf, double mass)
{
    ScalarField lhs = div(apply_coefficients(a, grad(u)));
    lhs *= -1.0;
    if (mass > 0.0) {
        ScalarField mu = u;
        mu *= mass;
        lhs += mu;
    }
    ScalarField rhs = div(gf);
    ScalarField r = lhs;
    r -= rhs;
    return l2_norm(r) / l2_norm(rhs);
}

}  // namespace

TEST(SolveOptions, Validation)
{
    SolveOptions o;
    o.tol = 1e-2;
    EXPECT_THROW(o.validate(), InvalidArgument);
    o.tol = 1e-9;
    o.max_iter = 0;
    EXPECT_THROW(o.validate(), InvalidArgument);
}

TEST(SolveDivform, ZeroRightHandSide)
{
    const GridSpec g(2, 16);
    const auto a = random_coefficients(g, 1);
    auto [u, rep] = solve_divform(a, VectorField(g), 0.0);
    EXPECT_TRUE(rep.converged);
    EXPECT_EQ(l2_norm(u), 0.0);
}

TEST(SolveDivform, IdentityMatchesSpectralSolve)
{
    const GridSpec g(2, 32);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    VectorField gf(g);
    for (int i = 0; i < 2; ++i) {
        for (double& v : gf[i].values()) {
            v = n(rng);
        }
    }
    const auto a = CoefficientField::constant(g, identity_matrix(2));
    auto [u, rep] = solve_divform(a, gf, 0.0);
    ASSERT_TRUE(rep.converged);
    const ScalarField ref = poisson_solve(div(gf));
    ScalarField diff = u;
    diff -= ref;
    EXPECT_LE(l2_norm(diff), 1e-8 * l2_norm(ref));
    EXPECT_NEAR(u.mean(), 0.0, 1e-14);
}

TEST(SolveDivform, LaminateMatchesOneDimensionalQuadrature)
{
    const GridSpec g(2, 16);
    std::vector<double> alpha(16);
    std::vector<double> g1(16);
    for (int k = 0; k < 16; ++k) {
        alpha[static_cast<std::size_t>(k)] = 0.3 + 0.6 * std::pow(std::sin(0.7 * k), 2);
        g1[static_cast<std::size_t>(k)] = std::cos(0.9 * k) + 0.2;
    }
    const auto a = laminate(g, alpha);
    VectorField gf(g);
    for (Index c = 0; c < g.cells(); ++c) {
        gf[0][c] = g1[static_cast<std::size_t>(g.coord(c)[0])];
    }
    // alpha D+u + g1 = C with C fixed by periodicity of u.
    double s_ga = 0.0, s_a = 0.0;
    for (int k = 0; k < 16; ++k) {
        s_ga += g1[static_cast<std::size_t>(k)] / alpha[static_cast<std::size_t>(k)];
        s_a += 1.0 / alpha[static_cast<std::size_t>(k)];
    }
    const double C = s_ga / s_a;
    std::vector<double> u1(16, 0.0);
    for (int k = 1; k < 16; ++k) {
        const auto p = static_cast<std::size_t>(k - 1);
        u1[static_cast<std::size_t>(k)] = u1[p] + (C - g1[p]) / alpha[p];
    }
    double m = 0.0;
    for (double v : u1) {
        m += v / 16.0;
    }
    SolveOptions o;
    o.tol = 1e-12;
    auto [u, rep] = solve_divform(a, gf, 0.0, o);
    ASSERT_TRUE(rep.converged);
    for (Index c = 0; c < g.cells(); ++c) {
        EXPECT_NEAR(u[c], u1[static_cast<std::size_t>(g.coord(c)[0])] - m, 1e-8);
    }
}

TEST(SolveDivform, ResidualContractSymmetricAndSkew)
{
    for (double skew : {0.0, 0.3}) {
        for (double mass : {0.0, 0.05}) {
            const GridSpec g(2, 32);
            const auto a = random_coefficients(g, 7, skew);
            EXPECT_EQ(a.is_symmetric(), skew == 0.0);
            const VectorField gf = apply_coefficients(a, unit_vector_field(g, 0));
            auto [u, rep] = solve_divform(a, gf, mass);
            ASSERT_TRUE(rep.converged);
            EXPECT_LE(rep.residual, 1e-9);
            EXPECT_LE(relative_residual(a, u, gf, mass), 2e-9);
        }
    }
}

TEST(SolveDivform, ReportsNonConvergence)
{
    const GridSpec g(2, 32);
    const auto a = random_coefficients(g, 3);
    SolveOptions o;
    o.max_iter = 1;
    o.preconditioner = Preconditioner::None;
    auto [u, rep] = solve_divform(a, apply_coefficients(a, unit_vector_field(g, 0)), 0.0, o);
    EXPECT_FALSE(rep.converged);
    EXPECT_GT(rep.residual, o.tol);
}

TEST(SolveDivform, MassiveConstantCoefficient)
{
    const GridSpec g(3, 8);
    const auto a = CoefficientField::constant(g, identity_matrix(3));
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    VectorField gf(g);
    for (int i = 0; i < 3; ++i) {
        for (double& v : gf[i].values()) {
            v = n(rng);
        }
    }
    auto [u, rep] = solve_divform(a, gf, 0.25);
    ASSERT_TRUE(rep.converged);
    const ScalarField ref = massive_poisson_solve(div(gf), 0.25);
    ScalarField diff = u;
    diff -= ref;
    EXPECT_LE(l2_norm(diff), 1e-8 * l2_norm(ref));
}

TEST(DirichletBall, AffineDataIsHarmonicForIdentity)
{
    const GridSpec g(2, 64);
    const auto a = CoefficientField::constant(g, identity_matrix(2));
    ScalarField bd(g);
    for (Index c = 0; c < g.cells(); ++c) {
        const Coord x = g.coord(c);
        bd[c] = 0.7 * static_cast<double>(x[0]) - 1.3 * static_cast<double>(x[1]);
    }
    ScalarField start = bd;
    const Ball b{{32, 32, 0}, 12.0};
    for (Index c : ball_cells(g, b)) {
        start[c] = 0.0;
    }
    auto [u, rep] = solve_dirichlet_ball(a, b, start);
    ASSERT_TRUE(rep.converged);
    for (Index c : ball_cells(g, b)) {
        EXPECT_NEAR(u[c], bd[c], 1e-7 * 60.0);
    }
}

TEST(DirichletBall, ReproducesHarmonicCoordinate)
{
    const GridSpec g(2, 64);
    const auto a = random_coefficients(g, 11, 0.2);
    SolveOptions o;
    o.tol = 1e-11;
    auto [phi, reps] = compute_corrector(a, o, {0});
    ASSERT_TRUE(reps[0].converged);
    ScalarField coord(g);
    for (Index c = 0; c < g.cells(); ++c) {
        coord[c] = static_cast<double>(g.coord(c)[0]) + phi[0][c];
    }
    ScalarField start = coord;
    const Ball b{{32, 32, 0}, 14.0};
    for (Index c : ball_cells(g, b)) {
        start[c] = 0.0;
    }
    auto [u, rep] = solve_dirichlet_ball(a, b, start, o);
    ASSERT_TRUE(rep.converged);
    for (Index c : ball_cells(g, b)) {
        EXPECT_NEAR(u[c], coord[c], 1e-6);
    }
}

TEST(DirichletBall, EnergyMinimalityAndCaccioppoli)
{
    const GridSpec g(2, 64);
    const auto a = random_coefficients(g, 13);
    ScalarField bd(g);
    for (Index c = 0; c < g.cells(); ++c) {
        const Coord x = g.coord(c);
        const double y0 = static_cast<double>(x[0]) - 32.0, y1 = static_cast<double>(x[1]) - 32.0;
        bd[c] = y0 * y0 - y1 * y1 + 3.0 * y0;
    }
    const Ball b{{32, 32, 0}, 16.0};
    BallDirichletProblem problem(a, b);
    auto [u, rep] = problem.solve(bd, SolveOptions{});
    ASSERT_TRUE(rep.converged);
    const double e0 = problem.energy(u);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (int k = 0; k < 5; ++k) {
        ScalarField w = u;
        for (Index c : problem.interior()) {
            w[c] += 0.1 * n(rng);
        }
        EXPECT_GE(problem.energy(w), e0);
    }
    EXPECT_LE(caccioppoli_constant(u, b), 100.0);
}
