#include <gtest/gtest.h>

#include "homlab/config.hpp"

using namespace homlab;

TEST(Config, DefaultsAreValid)
{
    const RunConfig c = RunConfig::parse("");
    EXPECT_EQ(c.dimension, 2);
    EXPECT_EQ(c.grid_size, 64);
    EXPECT_DOUBLE_EQ(c.effective_beta(), CovarianceSpec::effective_beta(2.5, 2));
    EXPECT_DOUBLE_EQ(c.fd_amplitude(), 1e-4 * 0.25);
    EXPECT_TRUE(c.entries.empty());
}

TEST(Config, ParsesValuesListsAndComments)
{
    const RunConfig c = RunConfig::parse(
        "# header\n"
        "dimension = 3   # trailing\n"
        "\n"
        "grid_size=32\r\n"
        "radii = 1, 2 ,4\n"
        "N_ladder = 8,16\n"
        "seed = 42\n"
        "preconditioner = none\n");
    EXPECT_EQ(c.dimension, 3);
    EXPECT_EQ(c.grid_size, 32);
    EXPECT_EQ(c.radii, (std::vector<double>{1.0, 2.0, 4.0}));
    EXPECT_EQ(c.N_ladder, (std::vector<Index>{8, 16}));
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.solve_options().preconditioner, Preconditioner::None);
    EXPECT_EQ(c.entries.size(), 6u);
    EXPECT_EQ(c.entries.at("radii"), "1, 2 ,4");
}

TEST(Config, UnknownKeyReportsLine)
{
    try {
        RunConfig::parse("dimension = 2\ngrid = 8\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("grid"), std::string::npos);
    }
}

TEST(Config, RejectsMalformedInput)
{
    EXPECT_THROW(RunConfig::parse("seed = 1\nseed = 2\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("lambda = 0.2x\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("grid_size = 8.5\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("no equals sign\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("seed = -1\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("grid_size = 7\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("dimension = 4\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("model = cubic\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("lambda = 0\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("tol = -1\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("laminate_profile = 1, 2\n"), ConfigError);
    EXPECT_THROW(RunConfig::from_file("/nonexistent/homlab.cfg"), ConfigError);
}

TEST(Config, LaminateCoefficients)
{
    const RunConfig c = RunConfig::parse("model = laminate\ngrid_size = 8\nlaminate_profile = 1, 0.5\n");
    const CoefficientField a = c.coefficients(0);
    const GridSpec& g = a.grid();
    for (Index x = 0; x < g.cells(); ++x) {
        const double v = g.coord(x)[0] % 2 == 0 ? 1.0 : 0.5;
        EXPECT_EQ(a(x, 0, 0), v);
        EXPECT_EQ(a(x, 1, 1), v);
        EXPECT_EQ(a(x, 0, 1), 0.0);
    }
    EXPECT_THROW(c.plan(ExperimentKind::Scaling), InvalidArgument);
}

TEST(Config, PlanMappingAndDefaults)
{
    const RunConfig c = RunConfig::parse(
        "grid_size = 128\nrealizations = 12\nseed = 7\nlambda = 0.3\nskew = 0.1\nbeta = 0.2\n"
        "delta_ladder = 0.125, 0.0625\ncenter_stride = 16\n");
    const ExperimentPlan p = c.plan(ExperimentKind::Tail);
    EXPECT_EQ(p.N, 128);
    EXPECT_EQ(p.M, 12);
    EXPECT_EQ(p.master_seed, 7u);
    EXPECT_DOUBLE_EQ(p.model.lambda, 0.3);
    EXPECT_DOUBLE_EQ(p.model.skew_amplitude, 0.1);
    EXPECT_DOUBLE_EQ(p.beta(), 0.2);
    EXPECT_EQ(p.deltas(), (std::vector<double>{0.125, 0.0625}));
    EXPECT_EQ(p.center_stride, 16);
    EXPECT_NO_THROW(p.validate());

    const ExperimentPlan s = c.plan(ExperimentKind::Scaling);
    EXPECT_EQ(s.radii, (std::vector<double>{2.0, 4.0, 8.0, 16.0}));
    EXPECT_EQ(c.plan(ExperimentKind::Growth).radii.front(), 1.0);
    EXPECT_EQ(c.plan(ExperimentKind::FBlock).T_ladder, (std::vector<double>{4.0, 16.0, 64.0, 256.0}));
    EXPECT_EQ(c.plan(ExperimentKind::TwoScale).N_ladder, (std::vector<Index>{32, 64, 128}));
}

TEST(Config, ConstantModelIsIdentity)
{
    const RunConfig c = RunConfig::parse("model = constant\ngrid_size = 4\n");
    const CoefficientField a = c.coefficients(3);
    for (Index x = 0; x < a.grid().cells(); ++x) {
        EXPECT_EQ(a(x, 0, 0), 1.0);
        EXPECT_EQ(a(x, 0, 1), 0.0);
    }
    EXPECT_TRUE(c.plan(ExperimentKind::Growth).constant_coefficients);
}
