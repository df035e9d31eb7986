#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "homlab/ensemble.hpp"
#include "homlab/error.hpp"

namespace homlab {

/// Flat key=value run configuration. One entry per line, '#' starts a comment,
/// lists are comma separated. Unknown or repeated keys are errors.
struct RunConfig {
    int dimension = 2;
    Index grid_size = 64;
    std::string model = "gaussian";           // gaussian | constant | laminate
    std::vector<double> laminate_profile{1.0, 0.5, 0.25, 0.5};
    double lambda = 0.25;
    double gamma = 2.5;
    double beta = -1.0;                       // < 0: effective value from gamma
    double skew = 0.0;
    double delta = 1.0 / 16.0;
    std::vector<double> delta_ladder;
    std::vector<double> T_ladder;
    std::vector<double> radii;
    std::vector<Index> N_ladder;
    Index center_stride = 0;
    double outer_fraction = 0.25;
    int realizations = 8;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    double tol = 1e-9;
    int max_iter = 2000;
    std::string preconditioner = "spectral";  // spectral | none
    std::vector<double> partition_beta{0.0, 0.3, 0.6};
    std::vector<double> partition_half_width{121.5, 364.5};
    std::string functional = "phi";           // phi | sigma
    double support_radius = 4.0;
    double fd_step = 0.0;                     // <= 0: 1e-4 * lambda

    std::map<std::string, std::string> entries;  // keys as given, for the manifest echo

    static const std::set<std::string>& known_keys()
    {
        static const std::set<std::string> keys{
            "dimension", "grid_size", "model", "laminate_profile", "lambda", "gamma", "beta", "skew", "delta",
            "delta_ladder", "T_ladder", "radii", "N_ladder", "center_stride", "outer_fraction", "realizations",
            "seed", "output_dir", "tol", "max_iter", "preconditioner", "partition_beta", "partition_half_width",
            "functional", "support_radius", "fd_step"};
        return keys;
    }

    static RunConfig parse(const std::string& text)
    {
        RunConfig c;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.erase(hash);
            }
            line = trim(line);
            if (line.empty()) {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (!known_keys().count(key)) {
                throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
            }
            if (c.entries.count(key)) {
                throw ConfigError("line " + std::to_string(lineno) + ": repeated key '" + key + "'");
            }
            c.entries[key] = value;
            c.assign(key, value);
        }
        c.validate();
        return c;
    }

    static RunConfig from_file(const std::string& path)
    {
        std::ifstream f(path);
        if (!f) {
            throw ConfigError("cannot read config file " + path);
        }
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    double effective_beta() const { return beta >= 0.0 ? beta : CovarianceSpec::effective_beta(gamma, dimension); }

    double fd_amplitude() const { return fd_step > 0.0 ? fd_step : 1e-4 * lambda; }

    SolveOptions solve_options() const
    {
        SolveOptions o;
        o.tol = tol;
        o.max_iter = max_iter;
        o.preconditioner = preconditioner == "none" ? Preconditioner::None : Preconditioner::Spectral;
        return o;
    }

    GridSpec grid() const { return GridSpec(dimension, grid_size); }

    /// Coefficient field of realization m under the configured model.
    CoefficientField coefficients(std::size_t m) const
    {
        const GridSpec g = grid();
        if (model == "constant") {
            return CoefficientField::constant(g, identity_matrix(dimension));
        }
        if (model == "laminate") {
            CoefficientField a(g);
            for (Index c = 0; c < g.cells(); ++c) {
                const double v = laminate_profile[static_cast<std::size_t>(g.coord(c)[0]) % laminate_profile.size()];
                for (int i = 0; i < dimension; ++i) {
                    a(c, i, i) = v;
                }
            }
            return a;
        }
        const GaussianSampler sampler(CovarianceSpec{gamma, effective_beta()}, g);
        return sample_coefficients(sampler, CoefficientModel{lambda, skew}, SeedSpec{seed, m, 0});
    }

    ExperimentPlan plan(ExperimentKind kind) const
    {
        require(model != "laminate", "experiments run on the gaussian or constant model");
        ExperimentPlan p;
        p.kind = kind;
        p.d = dimension;
        p.N = grid_size;
        p.covariance = CovarianceSpec{gamma, effective_beta()};
        p.model = CoefficientModel{lambda, skew};
        p.constant_coefficients = model == "constant";
        p.M = realizations;
        p.master_seed = seed;
        p.radii = radii;
        p.N_ladder = N_ladder;
        p.T_ladder = T_ladder;
        p.delta = delta;
        p.delta_ladder = delta_ladder;
        p.center_stride = center_stride;
        p.outer_fraction = outer_fraction;
        p.solve = solve_options();
        if (p.radii.empty() && (kind == ExperimentKind::Scaling || kind == ExperimentKind::Growth ||
                                kind == ExperimentKind::Excess)) {
            p.radii = dyadic_radii(grid(), kind == ExperimentKind::Scaling ? 2.0 : 1.0);
        }
        if (p.T_ladder.empty() && kind == ExperimentKind::FBlock) {
            for (double r : dyadic_radii(grid(), 2.0)) {
                p.T_ladder.push_back(r * r);
            }
        }
        if (p.N_ladder.empty() && kind == ExperimentKind::TwoScale) {
            p.N_ladder = {grid_size / 4, grid_size / 2, grid_size};
        }
        return p;
    }

    void validate() const
    {
        auto check = [](bool ok, const std::string& msg) {
            if (!ok) {
                throw ConfigError(msg);
            }
        };
        check(dimension == 2 || dimension == 3, "dimension must be 2 or 3");
        check(grid_size >= 4 && grid_size % 2 == 0, "grid_size must be even and >= 4");
        check(model == "gaussian" || model == "constant" || model == "laminate",
              "model must be gaussian, constant or laminate");
        check(!laminate_profile.empty(), "laminate_profile must not be empty");
        for (double v : laminate_profile) {
            check(v > 0.0 && v <= 1.0, "laminate_profile entries must lie in (0, 1]");
        }
        check(realizations >= 1, "realizations must be >= 1");
        check(preconditioner == "spectral" || preconditioner == "none", "preconditioner must be spectral or none");
        check(functional == "phi" || functional == "sigma", "functional must be phi or sigma");
        check(support_radius > 0.0, "support_radius must be positive");
        try {
            CoefficientModel{lambda, skew}.validate();
            solve_options().validate();
            if (model == "gaussian") {
                CovarianceSpec{gamma, effective_beta()}.validate(dimension);
            }
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    }

private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) {
            return "";
        }
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    static double to_double(const std::string& key, const std::string& v)
    {
        std::size_t pos = 0;
        double x = 0.0;
        try {
            x = std::stod(v, &pos);
        } catch (const std::exception&) {
            throw ConfigError(key + ": not a number '" + v + "'");
        }
        if (pos != v.size()) {
            throw ConfigError(key + ": not a number '" + v + "'");
        }
        return x;
    }

    static long long to_integer(const std::string& key, const std::string& v)
    {
        std::size_t pos = 0;
        long long x = 0;
        try {
            x = std::stoll(v, &pos);
        } catch (const std::exception&) {
            throw ConfigError(key + ": not an integer '" + v + "'");
        }
        if (pos != v.size()) {
            throw ConfigError(key + ": not an integer '" + v + "'");
        }
        return x;
    }

    static std::vector<std::string> split(const std::string& v)
    {
        std::vector<std::string> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) {
                out.push_back(item);
            }
        }
        return out;
    }

    static std::vector<double> to_doubles(const std::string& key, const std::string& v)
    {
        std::vector<double> out;
        for (const std::string& s : split(v)) {
            out.push_back(to_double(key, s));
        }
        return out;
    }

    void assign(const std::string& key, const std::string& v)
    {
        if (key == "dimension") {
            dimension = static_cast<int>(to_integer(key, v));
        } else if (key == "grid_size") {
            grid_size = to_integer(key, v);
        } else if (key == "model") {
            model = v;
        } else if (key == "laminate_profile") {
            laminate_profile = to_doubles(key, v);
        } else if (key == "lambda") {
            lambda = to_double(key, v);
        } else if (key == "gamma") {
            gamma = to_double(key, v);
        } else if (key == "beta") {
            beta = to_double(key, v);
        } else if (key == "skew") {
            skew = to_double(key, v);
        } else if (key == "delta") {
            delta = to_double(key, v);
        } else if (key == "delta_ladder") {
            delta_ladder = to_doubles(key, v);
        } else if (key == "T_ladder") {
            T_ladder = to_doubles(key, v);
        } else if (key == "radii") {
            radii = to_doubles(key, v);
        } else if (key == "N_ladder") {
            N_ladder.clear();
            for (const std::string& s : split(v)) {
                N_ladder.push_back(to_integer(key, s));
            }
        } else if (key == "center_stride") {
            center_stride = to_integer(key, v);
        } else if (key == "outer_fraction") {
            outer_fraction = to_double(key, v);
        } else if (key == "realizations") {
            realizations = static_cast<int>(to_integer(key, v));
        } else if (key == "seed") {
            const long long s = to_integer(key, v);
            if (s < 0) {
                throw ConfigError("seed must be nonnegative");
            }
            seed = static_cast<std::uint64_t>(s);
        } else if (key == "output_dir") {
            output_dir = v;
        } else if (key == "tol") {
            tol = to_double(key, v);
        } else if (key == "max_iter") {
            max_iter = static_cast<int>(to_integer(key, v));
        } else if (key == "preconditioner") {
            preconditioner = v;
        } else if (key == "partition_beta") {
            partition_beta = to_doubles(key, v);
        } else if (key == "partition_half_width") {
            partition_half_width = to_doubles(key, v);
        } else if (key == "functional") {
            functional = v;
        } else if (key == "support_radius") {
            support_radius = to_double(key, v);
        } else if (key == "fd_step") {
            fd_step = to_double(key, v);
        }
    }
};

}  // namespace homlab
