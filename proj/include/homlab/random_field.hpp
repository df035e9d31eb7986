#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "homlab/lattice.hpp"
#include "homlab/linalg.hpp"

namespace homlab {

/// Radial covariance c(r) = (1 + r)^-gamma at unit correlation length.
struct CovarianceSpec {
    double gamma = 2.5;
    double beta_target = 0.0;

    /// Smallest admissible coarseness label for a decay exponent.
    static double effective_beta(double gamma, int d, double margin = 0.01)
    {
        return gamma > d ? 0.0 : 1.0 - gamma / d + margin;
    }

    static CovarianceSpec from_gamma(double gamma, int d)
    {
        return CovarianceSpec{gamma, effective_beta(gamma, d)};
    }

    void validate(int d) const
    {
        require(gamma > 0.0, "CovarianceSpec: gamma must be positive");
        require(beta_target >= 0.0 && beta_target < 1.0, "CovarianceSpec: beta must lie in [0,1)");
        require(gamma > d * (1.0 - beta_target),
                "CovarianceSpec: integrability needs gamma > d(1 - beta)");
    }

    double covariance(double r) const { return std::pow(1.0 + r, -gamma); }
};

struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t realization_index = 0;
    std::uint64_t stream = 0;  // distinguishes several fields of one realization

    static std::uint64_t splitmix(std::uint64_t x)
    {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t derived() const
    {
        return splitmix(splitmix(splitmix(master_seed) ^ realization_index) ^ (stream * 0x632be59bd9b4e019ULL));
    }

    SeedSpec with_stream(std::uint64_t s) const { return SeedSpec{master_seed, realization_index, s}; }
};

// Circulant-embedding sampler: the spectrum is the DFT of the minimal-image
// covariance, clipped at zero, with the zero mode removed and the variance
// renormalized to one. The spectrum is computed once per (spec, grid).
class GaussianSampler {
public:
    GaussianSampler(const CovarianceSpec& spec, const GridSpec& grid) : spec_(spec), grid_(grid)
    {
        spec.validate(grid.d());
        ScalarField c(grid);
        for (Index i = 0; i < grid.cells(); ++i) {
            const Coord x = grid.coord(i);
            double r2 = 0.0;
            for (int a = 0; a < grid.d(); ++a) {
                const double dx = static_cast<double>(grid.displacement(0, x[a]));
                r2 += dx * dx;
            }
            c[i] = spec.covariance(std::sqrt(r2));
        }
        Spectrum s = forward_fft(c);
        amplitude_.resize(static_cast<std::size_t>(s.size()));
        double total = 0.0;
        for (Index i = 0; i < s.size(); ++i) {
            double v = std::max(0.0, s[i].real());
            if (i == 0) {
                v = 0.0;
            }
            amplitude_[static_cast<std::size_t>(i)] = v;
            total += s.multiplicity(i) * v;
        }
        // Var g(x) = (1/n) sum_k S(k)
        const double scale = static_cast<double>(grid.cells()) / total;
        for (double& v : amplitude_) {
            v = std::sqrt(v * scale);
        }
    }

    const GridSpec& grid() const { return grid_; }
    const CovarianceSpec& spec() const { return spec_; }

    ScalarField sample(const SeedSpec& seed) const
    {
        std::mt19937_64 rng(seed.derived());
        std::normal_distribution<double> normal(0.0, 1.0);
        ScalarField w(grid_);
        for (double& v : w.values()) {
            v = normal(rng);
        }
        Spectrum s = forward_fft(w);
        for (Index i = 0; i < s.size(); ++i) {
            s[i] *= amplitude_[static_cast<std::size_t>(i)];
        }
        return inverse_fft(std::move(s));
    }

private:
    CovarianceSpec spec_;
    GridSpec grid_;
    std::vector<double> amplitude_;
};

inline ScalarField sample_gaussian(const CovarianceSpec& spec, const GridSpec& grid, const SeedSpec& seed)
{
    return GaussianSampler(spec, grid).sample(seed);
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct CoefficientModel {
    double lambda = 0.25;
    double skew_amplitude = 0.0;

    double max_skew() const { return (1.0 - lambda) / 2.0; }

    void validate() const
    {
        require(lambda > 0.0 && lambda < 1.0, "CoefficientModel: lambda must lie in (0,1)");
        if (skew_amplitude < 0.0 || skew_amplitude > max_skew()) {
            throw InvalidArgument("CoefficientModel: skew amplitude " + std::to_string(skew_amplitude) +
                                  " outside the admissible range [0, " + std::to_string(max_skew()) + "]");
        }
    }

    /// Uniform rescale so that |a xi| <= |xi| for every admissible cell value.
    double rescale() const { return 1.0 / std::sqrt(1.0 + skew_amplitude * skew_amplitude); }

    /// Ellipticity of the symmetric part after the rescale.
    double lambda_prime() const { return lambda * rescale(); }
};

/// Fixed unit skew generator: rotation in the (e1, e2) plane.
inline Matrix skew_generator()
{
    Matrix j{};
    j[0][1] = -1.0;
    j[1][0] = 1.0;
    return j;
}

/// a(x) = c [ (lambda + (1-lambda) Phi(g_sym)) Id + nu (2 Phi(g_skew) - 1) J ].
inline CoefficientField to_coefficients(const ScalarField& g_sym, const ScalarField* g_skew,
                                        const CoefficientModel& model)
{
    model.validate();
    const GridSpec& g = g_sym.grid();
    if (g_skew) {
        require(g_skew->grid() == g, "to_coefficients: grid mismatch");
    }
    const int d = g.d();
    const double c = model.rescale();
    const Matrix J = skew_generator();
    CoefficientField a(g);
    for (Index x = 0; x < g.cells(); ++x) {
        const double iso = model.lambda + (1.0 - model.lambda) * standard_normal_cdf(g_sym[x]);
        const double sk = g_skew ? model.skew_amplitude * (2.0 * standard_normal_cdf((*g_skew)[x]) - 1.0) : 0.0;
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                a(x, i, j) = c * ((i == j ? iso : 0.0) + sk * J[i][j]);
            }
        }
    }
    return a;
}

struct AdmissibilityReport {
    double min_symmetric_eigenvalue = 0.0;
    double max_operator_norm = 0.0;
};

// Extremes over cells of the symmetric-part spectrum and of the operator norm.
inline AdmissibilityReport admissibility(const CoefficientField& a)
{
    const int d = a.d();
    AdmissibilityReport rep{1e300, 0.0};
    for (Index c = 0; c < a.grid().cells(); ++c) {
        const DynMatrix m = to_eigen(a.at(c), d);
        rep.min_symmetric_eigenvalue = std::min(rep.min_symmetric_eigenvalue, symmetric_eigenvalues(m)(0));
        rep.max_operator_norm = std::max(rep.max_operator_norm, operator_norm(m));
    }
    return rep;
}

/// Sample an admissible coefficient field for one realization.
inline CoefficientField sample_coefficients(const GaussianSampler& sampler, const CoefficientModel& model,
                                            const SeedSpec& seed)
{
    const ScalarField gs = sampler.sample(seed.with_stream(0));
    if (model.skew_amplitude > 0.0) {
        const ScalarField gk = sampler.sample(seed.with_stream(1));
        return to_coefficients(gs, &gk, model);
    }
    return to_coefficients(gs, nullptr, model);
}

struct CovarianceProfile {
    std::vector<double> r;
    std::vector<double> c;
    std::vector<double> stderr_;  // standard error across samples
};

/// c(r) = <u(x) u(x + r e_1)> averaged over x and samples, r = 0..max_r.
/// Per-sample autocorrelations come from the periodogram.
inline CovarianceProfile empirical_covariance(const std::vector<ScalarField>& samples, Index max_r = -1)
{
    require(samples.size() >= 2, "empirical_covariance: need at least two samples");
    const GridSpec& g = samples.front().grid();
    if (max_r < 0) {
        max_r = g.n() / 2;
    }
    require(max_r <= g.n() / 2, "empirical_covariance: max_r exceeds N/2");
    const auto nr = static_cast<std::size_t>(max_r + 1);
    std::vector<double> sum(nr, 0.0), sum2(nr, 0.0);
    for (const ScalarField& u : samples) {
        require(u.grid() == g, "empirical_covariance: grid mismatch");
        Spectrum s = forward_fft(u);
        for (Index i = 0; i < s.size(); ++i) {
            s[i] = std::norm(s[i]);
        }
        const ScalarField ac = inverse_fft(std::move(s));
        for (std::size_t r = 0; r < nr; ++r) {
            const double v = ac[g.shifted(0, 0, static_cast<Index>(r))] / static_cast<double>(g.cells());
            sum[r] += v;
            sum2[r] += v * v;
        }
    }
    CovarianceProfile prof;
    const double m = static_cast<double>(samples.size());
    for (std::size_t r = 0; r < nr; ++r) {
        const double mean = sum[r] / m;
        const double var = std::max(0.0, (sum2[r] / m - mean * mean) * m / (m - 1.0));
        prof.r.push_back(static_cast<double>(r));
        prof.c.push_back(mean);
        prof.stderr_.push_back(std::sqrt(var / m));
    }
    return prof;
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F1 - F2|.
inline double ks_statistic(std::vector<double> x, std::vector<double> y)
{
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    std::size_t i = 0, j = 0;
    double dmax = 0.0;
    while (i < x.size() && j < y.size()) {
        const double t = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= t) {
            ++i;
        }
        while (j < y.size() && y[j] <= t) {
            ++j;
        }
        const double fx = static_cast<double>(i) / static_cast<double>(x.size());
        const double fy = static_cast<double>(j) / static_cast<double>(y.size());
        dmax = std::max(dmax, std::abs(fx - fy));
    }
    return dmax;
}

/// Critical KS value at the 1% level for sample sizes n and m.
inline double ks_critical_1pct(std::size_t n, std::size_t m)
{
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return 1.628 * std::sqrt((nn + mm) / (nn * mm));
}

}  // namespace homlab
