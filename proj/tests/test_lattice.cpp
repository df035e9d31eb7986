#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "homlab/lattice.hpp"

using namespace homlab;

namespace {

ScalarField random_field(const GridSpec& g, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    ScalarField u(g);
    for (double& v : u.values()) {
        v = n(rng);
    }
    return u;
}

VectorField random_vector_field(const GridSpec& g, unsigned seed)
{
    VectorField f(g);
    for (int i = 0; i < g.d(); ++i) {
        f[i] = random_field(g, seed + 17 * static_cast<unsigned>(i));
    }
    return f;
}

}  // namespace

TEST(Grid, RejectsBadDimensions)
{
    EXPECT_THROW(GridSpec(4, 8), InvalidArgument);
    EXPECT_THROW(GridSpec(2, 7), InvalidArgument);
    EXPECT_NO_THROW(GridSpec(3, 96));
}

TEST(Grad, ConstantHasZeroGradient)
{
    const GridSpec g(3, 8);
    const VectorField gu = grad(ScalarField(g, 3.5));
    for (int i = 0; i < 3; ++i) {
        for (double v : gu[i].values()) {
            EXPECT_EQ(v, 0.0);
        }
    }
}

TEST(Grad, SawtoothJumpsAtTheSeam)
{
    const GridSpec g(2, 4);
    ScalarField u(g);
    for (Index c = 0; c < g.cells(); ++c) {
        u[c] = static_cast<double>(g.coord(c)[0]);
    }
    const VectorField gu = grad(u);
    for (Index c = 0; c < g.cells(); ++c) {
        const double expected = g.coord(c)[0] == 3 ? 1.0 - 4.0 : 1.0;
        EXPECT_EQ(gu[0][c], expected);
        EXPECT_EQ(gu[1][c], 0.0);
    }
}

TEST(GradDiv, SummationByParts)
{
    for (int d : {2, 3}) {
        const GridSpec g(d, 8);
        const ScalarField u = random_field(g, 3);
        const VectorField v = random_vector_field(g, 5);
        const double lhs = inner(grad(u), v);
        const double rhs = -inner(u, div(v));
        EXPECT_NEAR(lhs, rhs, 1e-11 * (std::abs(lhs) + 1.0));
    }
}

TEST(Div, ConstantFieldAndTelescoping)
{
    const GridSpec g(2, 16);
    const ScalarField d0 = div(VectorField(g, 2.0));
    for (double v : d0.values()) {
        EXPECT_EQ(v, 0.0);
    }
    const ScalarField dv = div(random_vector_field(g, 9));
    EXPECT_NEAR(dv.mean() * static_cast<double>(g.cells()), 0.0, 1e-11);
}

TEST(Div, GradIsTheFivePointStencil)
{
    const GridSpec g(2, 8);
    const ScalarField u = random_field(g, 11);
    const ScalarField lap = div(grad(u));
    for (Index c = 0; c < g.cells(); ++c) {
        double s = -4.0 * u[c];
        for (int a = 0; a < 2; ++a) {
            s += u[g.shifted(c, a, 1)] + u[g.shifted(c, a, -1)];
        }
        EXPECT_NEAR(lap[c], s, 1e-12);
    }
}

TEST(Poisson, ZeroRhs)
{
    const GridSpec g(2, 16);
    const ScalarField u = poisson_solve(ScalarField(g));
    EXPECT_EQ(l2_norm(u), 0.0);
}

TEST(Poisson, RoundTripOnZeroMeanFields)
{
    for (int d : {2, 3}) {
        const GridSpec g(d, 16);
        ScalarField w = random_field(g, 21);
        w.subtract_mean();
        ScalarField rhs = laplacian(w);
        rhs *= -1.0;
        const ScalarField u = poisson_solve(rhs);
        ScalarField diff = u;
        diff -= w;
        EXPECT_LE(l2_norm(diff), 1e-10 * l2_norm(w));
        // residual contract
        ScalarField res = laplacian(u);
        res += rhs;
        EXPECT_LE(l2_norm(res), 1e-12 * l2_norm(rhs));
    }
}

TEST(Poisson, SingleModeDividedBySymbol)
{
    const GridSpec g(2, 32);
    const Index k1 = 3, k2 = 5;
    ScalarField rhs(g);
    for (Index c = 0; c < g.cells(); ++c) {
        const Coord x = g.coord(c);
        rhs[c] = std::cos(2.0 * M_PI * static_cast<double>(k1 * x[0] + k2 * x[1]) / 32.0);
    }
    const double symbol = 4.0 * (std::pow(std::sin(M_PI * 3.0 / 32.0), 2) + std::pow(std::sin(M_PI * 5.0 / 32.0), 2));
    const ScalarField u = poisson_solve(rhs);
    for (Index c = 0; c < g.cells(); ++c) {
        EXPECT_NEAR(u[c], rhs[c] / symbol, 1e-12);
    }
}

TEST(BallAverage, ConstantAndPrecondition)
{
    const GridSpec g(2, 32);
    const ScalarField u(g, 2.25);
    EXPECT_DOUBLE_EQ(ball_average(u, Ball{{3, 4, 0}, 5.0}), 2.25);
    EXPECT_THROW(ball_average(u, Ball{{0, 0, 0}, 16.0}), InvalidArgument);
    EXPECT_THROW(ball_average(u, Ball{{0, 0, 0}, 0.3}), InvalidArgument);
}

TEST(BallAverage, NineCellDisk)
{
    const GridSpec g(2, 8);
    ScalarField u(g);
    for (Index c = 0; c < g.cells(); ++c) {
        u[c] = static_cast<double>(c);
    }
    // cells with |x - (2,2)| <= 1.5: the 3x3 block around (2,2)
    double sum = 0.0;
    for (Index i = 1; i <= 3; ++i) {
        for (Index j = 1; j <= 3; ++j) {
            sum += static_cast<double>(i * 8 + j);
        }
    }
    EXPECT_EQ(ball_cells(g, Ball{{2, 2, 0}, 1.5}).size(), 9u);
    EXPECT_DOUBLE_EQ(ball_average(u, Ball{{2, 2, 0}, 1.5}), sum / 9.0);
}

TEST(BallAverage, MonotoneInTheField)
{
    const GridSpec g(3, 16);
    const ScalarField u = random_field(g, 2);
    ScalarField v = u;
    for (double& x : v.values()) {
        x += std::abs(x) * 0.1 + 1e-3;
    }
    const Ball b{{5, 6, 7}, 3.0};
    EXPECT_LT(ball_average(u, b), ball_average(v, b));
}

TEST(BoxMollify, PreservesConstantsAndMass)
{
    const GridSpec g(2, 32);
    const ScalarField c(g, -1.5);
    const ScalarField mc = box_mollify(c, 3.0);
    for (double v : mc.values()) {
        EXPECT_NEAR(v, -1.5, 1e-13);
    }
    const ScalarField u = random_field(g, 7);
    EXPECT_NEAR(box_mollify(u, 4.0).mean(), u.mean(), 1e-14);
    const ScalarField same = box_mollify(u, 0.5);
    EXPECT_EQ(same.raw(), u.raw());
}

TEST(BoxMollify, MatchesPointwiseBallAverages)
{
    const GridSpec g(2, 16);
    const ScalarField u = random_field(g, 13);
    const ScalarField m = box_mollify(u, 2.5);
    for (Index c : {Index{0}, Index{17}, Index{200}}) {
        const Coord x = g.coord(c);
        EXPECT_NEAR(m[c], ball_average(u, Ball{x, 2.5}), 1e-13);
    }
}

TEST(FieldIo, BinaryLayoutRoundTrip)
{
    const GridSpec g(2, 8);
    const ScalarField u = random_field(g, 1);
    const std::string path = ::testing::TempDir() + "/field.bin";
    io::save(path, u);
    const ScalarField back = io::load_scalar(path);
    EXPECT_EQ(back.raw(), u.raw());

    std::ifstream is(path, std::ios::binary);
    const auto raw = io::read_raw(is);
    EXPECT_EQ(raw.d, 2);
    EXPECT_EQ(raw.n, 8);
    EXPECT_EQ(raw.components, 1);
    // header is three little-endian int64 words
    std::ifstream bytes(path, std::ios::binary);
    unsigned char head[8];
    bytes.read(reinterpret_cast<char*>(head), 8);
    EXPECT_EQ(head[0], 2);
    for (int i = 1; i < 8; ++i) {
        EXPECT_EQ(head[i], 0);
    }
}
