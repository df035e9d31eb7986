#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "homlab/corrector.hpp"
#include "homlab/elliptic.hpp"
#include "homlab/linalg.hpp"

namespace homlab {

/// Components of (phi, sigma) with their weight in |(phi, sigma)|^2; each stored
/// sigma_ijk (j < k) stands for two entries of the full tensor.
struct WeightedComponent {
    const ScalarField* field;
    double weight;
};

inline std::vector<WeightedComponent> extended_components(const CorrectorSet& corr)
{
    std::vector<WeightedComponent> out;
    for (const ScalarField& p : corr.phi) {
        out.push_back({&p, 1.0});
    }
    if (corr.has_sigma()) {
        for (int k = 0; k < corr.sigma.stored_components(); ++k) {
            out.push_back({&corr.sigma.stored_flat(k), 2.0});
        }
    }
    return out;
}

/// e_i + grad phi_i for every direction.
inline std::vector<VectorField> harmonic_gradients(const CorrectorSet& corr)
{
    std::vector<VectorField> out;
    for (int i = 0; i < corr.d(); ++i) {
        out.push_back(shifted_gradient(corr.phi[static_cast<std::size_t>(i)], i));
    }
    return out;
}

struct ExcessReport {
    double radius = 0.0;
    double excess = 0.0;
    std::vector<double> xi;
    DynMatrix gram;
    std::vector<double> b;
    double gradient_energy = 0.0;  // mean |grad u|^2 over the ball
};

/// Exc(r) = min_xi mean_B |grad u - xi_i (e_i + grad phi_i)|^2 against a prepared basis.
inline ExcessReport excess(const VectorField& grad_u, const std::vector<VectorField>& basis, const Ball& ball,
                           double degenerate_tol = 1e-10)
{
    const GridSpec& g = grad_u.grid();
    const int d = g.d();
    require(static_cast<int>(basis.size()) == d, "excess: need d basis gradients");
    const auto cells = ball_cells(g, ball);
    const double inv = 1.0 / static_cast<double>(cells.size());
    ExcessReport rep;
    rep.radius = ball.radius;
    rep.gram = DynMatrix::Zero(d, d);
    DynVector b = DynVector::Zero(d);
    for (Index c : cells) {
        for (int k = 0; k < d; ++k) {
            rep.gradient_energy += grad_u[k][c] * grad_u[k][c] * inv;
        }
        for (int i = 0; i < d; ++i) {
            const VectorField& bi = basis[static_cast<std::size_t>(i)];
            for (int k = 0; k < d; ++k) {
                b(i) += grad_u[k][c] * bi[k][c] * inv;
            }
            for (int j = 0; j <= i; ++j) {
                const VectorField& bj = basis[static_cast<std::size_t>(j)];
                double s = 0.0;
                for (int k = 0; k < d; ++k) {
                    s += bi[k][c] * bj[k][c];
                }
                rep.gram(i, j) += s * inv;
            }
        }
    }
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            rep.gram(i, j) = rep.gram(j, i);
        }
    }
    const DynVector ev = Eigen::SelfAdjointEigenSolver<DynMatrix>(rep.gram, Eigen::EigenvaluesOnly).eigenvalues();
    if (!(ev(0) > degenerate_tol * std::max(ev(d - 1), 1e-300))) {
        throw DegenerateCorrector("excess: Gram matrix of corrector gradients is singular on this ball");
    }
    const DynVector xi = rep.gram.ldlt().solve(b);
    rep.xi.assign(xi.data(), xi.data() + d);
    rep.b.assign(b.data(), b.data() + d);
    // evaluate the minimum directly; the expanded form loses digits when Exc is small
    double e = 0.0;
    for (Index c : cells) {
        for (int k = 0; k < d; ++k) {
            double r = grad_u[k][c];
            for (int i = 0; i < d; ++i) {
                r -= xi(i) * basis[static_cast<std::size_t>(i)][k][c];
            }
            e += r * r * inv;
        }
    }
    rep.excess = std::max(0.0, e);
    return rep;
}

inline ExcessReport excess(const VectorField& grad_u, const CorrectorSet& corr, const Ball& ball)
{
    return excess(grad_u, harmonic_gradients(corr), ball);
}

inline double symmetric_min_eigenvalue(const DynMatrix& m) { return symmetric_eigenvalues(m)(0); }

/// Dyadic radii 1, 2, 4, ... up to L/8.
inline std::vector<double> dyadic_radii(const GridSpec& g, double from = 1.0)
{
    std::vector<double> out;
    for (double r = 1.0; r <= g.side_length() / 8.0 + 1e-12; r *= 2.0) {
        if (r >= from - 1e-12) {
            out.push_back(r);
        }
    }
    return out;
}

/// Centered second moment mean_B |w - mean_B w|^2 of (phi, sigma).
inline double centered_ball_variance(const std::vector<WeightedComponent>& comps, const GridSpec& g,
                                     const Ball& ball)
{
    const auto cells = ball_cells(g, ball);
    const double inv = 1.0 / static_cast<double>(cells.size());
    double v = 0.0;
    for (const WeightedComponent& wc : comps) {
        double m = 0.0;
        for (Index c : cells) {
            m += (*wc.field)[c];
        }
        m *= inv;
        double s = 0.0;
        for (Index c : cells) {
            const double t = (*wc.field)[c] - m;
            s += t * t;
        }
        v += wc.weight * s * inv;
    }
    return v;
}

struct MinimalRadiusReport {
    static constexpr double infinity = std::numeric_limits<double>::infinity();

    double r_star = infinity;
    double delta = 0.0;
    Coord center{0, 0, 0};
    std::vector<double> radii;
    std::vector<double> scale_values;  // R^-2 mean_{B_R} |(phi,sigma) - mean|^2

    bool finite() const { return std::isfinite(r_star); }
};

inline double minimal_radius_from_values(const std::vector<double>& radii, const std::vector<double>& values,
                                         double delta)
{
    double r_star = MinimalRadiusReport::infinity;
    for (std::size_t k = radii.size(); k-- > 0;) {
        if (values[k] > delta) {
            break;
        }
        r_star = radii[k];
    }
    return r_star;
}

/// Smallest dyadic r with R^-2 mean_{B_R(x)} |(phi,sigma) - mean|^2 <= delta for
/// every dyadic R in [r, L/8]; infinity when even L/8 fails.
inline MinimalRadiusReport minimal_radius(const CorrectorSet& corr, double delta, const Coord& center = {0, 0, 0})
{
    require(delta > 0.0, "minimal_radius: delta must be positive");
    const GridSpec& g = corr.grid;
    MinimalRadiusReport rep;
    rep.delta = delta;
    rep.center = center;
    rep.radii = dyadic_radii(g);
    const auto comps = extended_components(corr);
    for (double R : rep.radii) {
        rep.scale_values.push_back(centered_ball_variance(comps, g, Ball{center, R}) / (R * R));
    }
    rep.r_star = minimal_radius_from_values(rep.radii, rep.scale_values, delta);
    return rep;
}

/// Stationary extension r_*(x) at the centers of a sublattice with the given stride.
inline std::vector<double> minimal_radius_samples(const CorrectorSet& corr, double delta, Index stride)
{
    const GridSpec& g = corr.grid;
    require(stride >= 1 && g.n() % stride == 0, "minimal_radius_samples: stride must divide N");
    const Index m = g.n() / stride;
    const int d = g.d();
    Index count = 1;
    for (int a = 0; a < d; ++a) {
        count *= m;
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) {
        Coord c{0, 0, 0};
        Index rest = k;
        for (int a = d - 1; a >= 0; --a) {
            c[static_cast<std::size_t>(a)] = (rest % m) * stride;
            rest /= m;
        }
        out.push_back(minimal_radius(corr, delta, c).r_star);
    }
    return out;
}

/// Exc on co-centered balls B_r divided by Exc(B_R), and the fitted log-log slope.
struct ExcessDecayTable {
    double R = 0.0;
    std::vector<double> radii;
    std::vector<double> excess;
    std::vector<double> ratio;        // Exc(r) / Exc(R)
    std::vector<double> gram_min_eig;
    double exponent = 0.0;            // fitted 2*alpha
    bool degenerate_reference = false;
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need at least two points");
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i] > 0.0 && y[i] > 0.0, "loglog_slope: values must be positive");
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]) - mx;
        sxy += lx * (std::log(y[i]) - my);
        sxx += lx * lx;
    }
    return sxy / sxx;
}

/// Random a_hom-harmonic quadratic p(x) = (x - c).B(x - c) with tr(a_hom B) = 0.
inline DynMatrix random_harmonic_quadratic(const DynMatrix& a_hom, std::uint64_t seed)
{
    const auto d = static_cast<int>(a_hom.rows());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    DynMatrix B(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            B(i, j) = B(j, i) = normal(rng);
        }
    }
    const DynMatrix as = 0.5 * (a_hom + a_hom.transpose());
    // remove the a_hom-trace along the identity direction
    const double t = (as * B).trace() / as.trace();
    B -= t * DynMatrix::Identity(d, d);
    return B / B.norm();
}

inline ScalarField quadratic_field(const GridSpec& g, const DynMatrix& B, const Coord& center)
{
    ScalarField p(g);
    const int d = g.d();
    for (Index c = 0; c < g.cells(); ++c) {
        const Coord x = g.coord(c);
        double y[3];
        for (int i = 0; i < d; ++i) {
            y[i] = static_cast<double>(g.displacement(center[i], x[i]));
        }
        double s = 0.0;
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                s += y[i] * B(i, j) * y[j];
            }
        }
        p[c] = s;
    }
    return p;
}

/// Exc(r)/Exc(R) for an a-harmonic u on B_R; radii outside (0, R] are rejected.
inline ExcessDecayTable excess_decay_table(const ScalarField& u, const std::vector<VectorField>& basis,
                                           const Ball& outer, const std::vector<double>& r_list)
{
    ExcessDecayTable t;
    t.R = outer.radius;
    const VectorField gu = grad(u);
    const ExcessReport ref = excess(gu, basis, outer);
    for (double r : r_list) {
        require(r > 0.0 && r <= outer.radius, "excess_decay: radii must lie in (0, R]");
        const ExcessReport e = excess(gu, basis, Ball{outer.center, r});
        t.radii.push_back(r);
        t.excess.push_back(e.excess);
        t.ratio.push_back(ref.excess > 0.0 ? e.excess / ref.excess : 0.0);
        t.gram_min_eig.push_back(symmetric_min_eigenvalue(e.gram));
    }
    t.degenerate_reference = !(ref.excess > 0.0);
    bool positive = t.radii.size() >= 2;
    for (double e : t.excess) {
        positive = positive && e > 0.0;
    }
    t.exponent = positive ? loglog_slope(t.radii, t.excess) : 0.0;
    return t;
}

/// Solve the Dirichlet problem on B_R with a random a_hom-harmonic quadratic and
/// tabulate the excess decay.
inline ExcessDecayTable excess_decay_experiment(const CoefficientField& a, const CorrectorSet& corr, const Ball& outer,
                                                const std::vector<double>& r_list, std::uint64_t seed,
                                                const SolveOptions& opts = {}, SolveReport* report = nullptr)
{
    const DynMatrix B = random_harmonic_quadratic(corr.a_hom.matrix, seed);
    const ScalarField p = quadratic_field(a.grid(), B, outer.center);
    auto [u, rep] = solve_dirichlet_ball(a, outer, p, opts);
    if (report) {
        *report = rep;
    }
    if (!rep.converged) {
        throw SolverError("excess_decay_experiment: Dirichlet solve did not converge");
    }
    return excess_decay_table(u, harmonic_gradients(corr), outer, r_list);
}

/// mean_{B_r} |grad u|^2 / mean_{B_R} |grad u|^2 on co-centered balls.
inline double mean_value_ratio(const ScalarField& u, const Ball& outer, double r)
{
    require(r > 0.0 && r <= outer.radius, "mean_value_ratio: need r <= R");
    const GridSpec& g = u.grid();
    const VectorField gu = grad(u);
    auto energy = [&](const Ball& b) {
        const auto cells = ball_cells(g, b);
        double s = 0.0;
        for (Index c : cells) {
            for (int k = 0; k < g.d(); ++k) {
                s += gu[k][c] * gu[k][c];
            }
        }
        return s / static_cast<double>(cells.size());
    };
    const double den = energy(outer);
    return den > 0.0 ? energy(Ball{outer.center, r}) / den : 0.0;
}

/// mean_{B_r(x)} grad w . m for every component w of (phi, sigma), m a constant unit vector.
inline std::vector<double> gradient_average(const CorrectorSet& corr, const std::vector<double>& m, double r,
                                            const Coord& center = {0, 0, 0})
{
    const GridSpec& g = corr.grid;
    require(static_cast<int>(m.size()) == g.d(), "gradient_average: direction has wrong dimension");
    require(r <= g.side_length() / 8.0 + 1e-12, "gradient_average: r exceeds L/8");
    const auto cells = ball_cells(g, Ball{center, r});
    std::vector<double> out;
    for (const WeightedComponent& wc : extended_components(corr)) {
        const ScalarField& w = *wc.field;
        double s = 0.0;
        for (Index c : cells) {
            for (int k = 0; k < g.d(); ++k) {
                s += (w[g.shifted(c, k, 1)] - w[c]) * m[static_cast<std::size_t>(k)];
            }
        }
        out.push_back(s / static_cast<double>(cells.size()));
    }
    return out;
}

/// Same functional with B_r replaced by the whole torus.
inline std::vector<double> gradient_average_torus(const CorrectorSet& corr, const std::vector<double>& m)
{
    const GridSpec& g = corr.grid;
    require(static_cast<int>(m.size()) == g.d(), "gradient_average: direction has wrong dimension");
    std::vector<double> out;
    for (const WeightedComponent& wc : extended_components(corr)) {
        const VectorField gw = grad(*wc.field);
        double s = 0.0;
        for (int k = 0; k < g.d(); ++k) {
            s += gw[k].mean() * m[static_cast<std::size_t>(k)];
        }
        out.push_back(s);
    }
    return out;
}

/// Mean over all cells x of (mean_{B_r(x)} D+_axis w)^2: the variance of the
/// gradient average pooled over every center of one realization.
inline double pooled_gradient_average_variance(const ScalarField& w, int axis, double r)
{
    const ScalarField m = box_mollify(forward_difference(w, axis), r);
    return inner(m, m) / static_cast<double>(w.grid().cells());
}

enum class GrowthRegime { Bounded, Critical, Growing };

inline GrowthRegime growth_regime(int d, double beta)
{
    const double crit = 1.0 - 2.0 / d;
    if (std::abs(beta - crit) < 1e-9) {
        return GrowthRegime::Critical;
    }
    return beta < crit ? GrowthRegime::Bounded : GrowthRegime::Growing;
}

/// Squared regime weight of the corrector growth: 1, log(2+R) or (1 + R^{d/2(beta-1+2/d)})^2.
inline double growth_reference(int d, double beta, double R)
{
    switch (growth_regime(d, beta)) {
    case GrowthRegime::Bounded:
        return 1.0;
    case GrowthRegime::Critical:
        return std::log(2.0 + R);
    case GrowthRegime::Growing:
        break;
    }
    const double p = 1.0 + std::pow(R, 0.5 * d * (beta - 1.0 + 2.0 / d));
    return p * p;
}

/// Two-scale weight G_{d,beta}(x) at distance |x|.
inline double twoscale_weight(int d, double beta, double x)
{
    switch (growth_regime(d, beta)) {
    case GrowthRegime::Bounded:
        return 1.0;
    case GrowthRegime::Critical:
        return std::sqrt(std::log(2.0 + x));
    case GrowthRegime::Growing:
        break;
    }
    return 1.0 + std::pow(x, 0.5 * d * (beta - 1.0 + 2.0 / d));
}

struct GrowthProfile {
    std::vector<double> radii;
    std::vector<double> V;
    std::vector<double> reference;
    std::size_t centers = 0;
};

/// V(R) = mean over centers of mean_{B_R} |(phi,sigma) - mean|^2. An empty center
/// list averages over every cell, using mean(w^2) - mean((M_R w)^2).
inline GrowthProfile growth_profile(const CorrectorSet& corr, const std::vector<double>& radii, double beta,
                                    const std::vector<Coord>& centers = {})
{
    const GridSpec& g = corr.grid;
    GrowthProfile prof;
    const auto comps = extended_components(corr);
    prof.centers = centers.empty() ? static_cast<std::size_t>(g.cells()) : centers.size();
    for (double R : radii) {
        require(R <= g.side_length() / 8.0 + 1e-12, "growth_profile: radius exceeds L/8");
        double v = 0.0;
        if (centers.empty()) {
            for (const WeightedComponent& wc : comps) {
                const ScalarField m = box_mollify(*wc.field, R);
                const double n = static_cast<double>(g.cells());
                v += wc.weight * std::max(0.0, (inner(*wc.field, *wc.field) - inner(m, m)) / n);
            }
        } else {
            for (const Coord& c : centers) {
                v += centered_ball_variance(comps, g, Ball{c, R});
            }
            v /= static_cast<double>(centers.size());
        }
        prof.radii.push_back(R);
        prof.V.push_back(v);
        prof.reference.push_back(growth_reference(g.d(), beta, R));
    }
    return prof;
}

struct HoleFillingProfile {
    std::vector<double> radii;
    std::vector<double> energy;           // mean_{B_r} |grad phi_i + e_i|^2
    std::vector<double> doubling_ratio;   // energy(2r)/energy(r) for consecutive radii
    double epsilon_hat = 1.0;             // from energy ~ (r/R)^{d(eps-1)}
    double max_doubling_ratio = 0.0;
};

inline HoleFillingProfile hole_filling_profile(const CorrectorSet& corr, int i, const std::vector<double>& radii,
                                               const Coord& center = {0, 0, 0})
{
    const GridSpec& g = corr.grid;
    const VectorField gp = shifted_gradient(corr.phi[static_cast<std::size_t>(i)], i);
    HoleFillingProfile h;
    for (double r : radii) {
        const auto cells = ball_cells(g, Ball{center, r});
        double s = 0.0;
        for (Index c : cells) {
            for (int k = 0; k < g.d(); ++k) {
                s += gp[k][c] * gp[k][c];
            }
        }
        h.radii.push_back(r);
        h.energy.push_back(s / static_cast<double>(cells.size()));
    }
    for (std::size_t k = 1; k < h.energy.size(); ++k) {
        const double q = h.energy[k] / h.energy[k - 1];
        h.doubling_ratio.push_back(q);
        h.max_doubling_ratio = std::max(h.max_doubling_ratio, q);
    }
    if (h.radii.size() >= 2) {
        const double s = loglog_slope(h.radii, h.energy);
        h.epsilon_hat = std::clamp(1.0 + s / g.d(), 1e-12, 1.0);
    }
    return h;
}

}  // namespace homlab
