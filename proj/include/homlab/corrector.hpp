#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "homlab/elliptic.hpp"
#include "homlab/linalg.hpp"

namespace homlab {

struct HomogenizedTensor {
    DynMatrix matrix;
    double min_symmetric_eigenvalue = 0.0;
    double operator_norm = 0.0;

    static HomogenizedTensor certify(const DynMatrix& m)
    {
        HomogenizedTensor h;
        h.matrix = m;
        h.min_symmetric_eigenvalue = symmetric_eigenvalues(m)(0);
        h.operator_norm = homlab::operator_norm(m);
        return h;
    }

    /// xi.a_sym xi >= lambda'|xi|^2 and |a xi| <= |xi|/lambda'.
    bool elliptic_with(double lambda_prime) const
    {
        return min_symmetric_eigenvalue >= lambda_prime && operator_norm <= 1.0 / lambda_prime;
    }
};

struct CorrectorSet {
    GridSpec grid;
    std::vector<ScalarField> phi;   // phi_i, zero mean
    std::vector<VectorField> q;     // q_i = a(grad phi_i + e_i) - a_hom e_i
    HomogenizedTensor a_hom;
    SkewTensorField sigma;          // sigma_ijk, skew in (j,k)
    std::vector<SolveReport> reports;

    int d() const { return grid.d(); }
    bool has_sigma() const { return sigma.stored_components() > 0; }
};

inline VectorField unit_vector_field(const GridSpec& g, int i)
{
    VectorField e(g);
    for (Index c = 0; c < g.cells(); ++c) {
        e[i][c] = 1.0;
    }
    return e;
}

/// grad phi_i + e_i
inline VectorField shifted_gradient(const ScalarField& phi, int i)
{
    VectorField gp = grad(phi);
    for (Index c = 0; c < phi.grid().cells(); ++c) {
        gp[i][c] += 1.0;
    }
    return gp;
}

/// Correctors phi_i for the requested directions (all when empty).
inline std::pair<std::vector<ScalarField>, std::vector<SolveReport>> compute_corrector(
    const CoefficientField& a, const SolveOptions& opts = {}, std::vector<int> directions = {})
{
    const GridSpec& g = a.grid();
    if (directions.empty()) {
        for (int i = 0; i < g.d(); ++i) {
            directions.push_back(i);
        }
    }
    std::vector<ScalarField> phi;
    std::vector<SolveReport> reports;
    for (int i : directions) {
        auto [u, rep] = solve_divform(a, apply_coefficients(a, unit_vector_field(g, i)), 0.0, opts);
        phi.push_back(std::move(u));
        reports.push_back(rep);
    }
    return {std::move(phi), std::move(reports)};
}

/// a_hom e_i = mean of a(grad phi_i + e_i); q_i the centered flux.
inline std::pair<std::vector<VectorField>, HomogenizedTensor> compute_flux_and_ahom(
    const CoefficientField& a, const std::vector<ScalarField>& phi)
{
    const GridSpec& g = a.grid();
    const int d = g.d();
    require(static_cast<int>(phi.size()) == d, "compute_flux_and_ahom: need d correctors");
    DynMatrix ah(d, d);
    std::vector<VectorField> q;
    for (int i = 0; i < d; ++i) {
        VectorField flux = apply_coefficients(a, shifted_gradient(phi[static_cast<std::size_t>(i)], i));
        for (int j = 0; j < d; ++j) {
            const double m = flux[j].mean();
            ah(j, i) = m;
            for (double& v : flux[j].values()) {
                v -= m;
            }
        }
        q.push_back(std::move(flux));
    }
    return {std::move(q), HomogenizedTensor::certify(ah)};
}

/// sigma_ijk solving -Laplace sigma_ijk = D+_j q_ik - D+_k q_ij (optionally with a mass
/// term); then sum_k D-_k sigma_ijk = q_ij whenever div q_i = 0.
inline SkewTensorField compute_sigma(const std::vector<VectorField>& q, double mass = 0.0)
{
    require(!q.empty(), "compute_sigma: no fluxes");
    const GridSpec& g = q.front().grid();
    const int d = g.d();
    SkewTensorField sigma(g);
    for (int i = 0; i < d; ++i) {
        const VectorField& qi = q[static_cast<std::size_t>(i)];
        for (int j = 0; j < d; ++j) {
            for (int k = j + 1; k < d; ++k) {
                ScalarField rhs = forward_difference(qi[k], j);
                rhs -= forward_difference(qi[j], k);
                sigma.stored(i, j, k) = massive_poisson_solve(rhs, mass);
            }
        }
    }
    return sigma;
}

/// Row divergence (div sigma_i)_j = sum_k D-_k sigma_ijk.
inline VectorField sigma_divergence(const SkewTensorField& sigma, int i)
{
    const GridSpec& g = sigma.grid();
    const int d = g.d();
    VectorField out(g);
    for (int j = 0; j < d; ++j) {
        for (int k = 0; k < d; ++k) {
            if (j == k) {
                continue;
            }
            const double sign = j < k ? 1.0 : -1.0;
            const ScalarField& s = j < k ? sigma.stored(i, j, k) : sigma.stored(i, k, j);
            for_each_forward(g, k, [&](Index x, Index xp) { out[j][xp] += sign * (s[xp] - s[x]); });
        }
    }
    return out;
}

/// ||div sigma_i - q_i|| / max(||q_i||, |Q|^(1/2))
inline double flux_corrector_residual(const SkewTensorField& sigma, const std::vector<VectorField>& q, int i)
{
    VectorField ds = sigma_divergence(sigma, i);
    const VectorField& qi = q[static_cast<std::size_t>(i)];
    double num = 0.0;
    for (int j = 0; j < qi.dim(); ++j) {
        for (Index c = 0; c < qi.grid().cells(); ++c) {
            const double r = ds[j][c] - qi[j][c];
            num += r * r;
        }
    }
    const double den = std::max(l2_norm(qi), std::sqrt(static_cast<double>(qi.grid().cells())));
    return std::sqrt(num) / den;
}

/// Full extended corrector (phi, sigma), fluxes and a_hom for one coefficient field.
inline CorrectorSet build_corrector_set(const CoefficientField& a, const SolveOptions& opts = {},
                                        bool with_sigma = true)
{
    CorrectorSet set;
    set.grid = a.grid();
    auto [phi, reports] = compute_corrector(a, opts);
    set.phi = std::move(phi);
    set.reports = std::move(reports);
    auto [q, ah] = compute_flux_and_ahom(a, set.phi);
    set.q = std::move(q);
    set.a_hom = std::move(ah);
    if (with_sigma) {
        set.sigma = compute_sigma(set.q);
    }
    return set;
}

inline bool all_converged(const CorrectorSet& set)
{
    for (const SolveReport& r : set.reports) {
        if (!r.converged) {
            return false;
        }
    }
    return true;
}

/// mean |grad phi_i|^2
inline double corrector_energy(const ScalarField& phi)
{
    const VectorField gp = grad(phi);
    return inner(gp, gp) / static_cast<double>(phi.grid().cells());
}

struct ModifiedCorrectorSet {
    double T = 1.0;
    std::vector<ScalarField> phi_T;
    SkewTensorField sigma_T;
    std::vector<VectorField> q_T;       // a(grad phi_T + e_i), not centered
    std::vector<VectorField> q_T_moll;  // moving average on scale sqrt(T)
    std::vector<SolveReport> reports;

    double mollification_scale() const { return std::sqrt(T); }
};

/// Massive-term correctors: phi_T/T - div a(grad phi_T + e) = 0 and
/// sigma_T/T - Laplace sigma_T = curl q_T, for every direction.
inline ModifiedCorrectorSet compute_modified(const CoefficientField& a, double T, const SolveOptions& opts = {})
{
    require(T >= 1.0, "compute_modified: T must be >= 1");
    const GridSpec& g = a.grid();
    ModifiedCorrectorSet mod;
    mod.T = T;
    for (int i = 0; i < g.d(); ++i) {
        auto [u, rep] = solve_divform(a, apply_coefficients(a, unit_vector_field(g, i)), 1.0 / T, opts);
        mod.q_T.push_back(apply_coefficients(a, shifted_gradient(u, i)));
        mod.phi_T.push_back(std::move(u));
        mod.reports.push_back(rep);
    }
    mod.sigma_T = compute_sigma(mod.q_T, 1.0 / T);
    for (const VectorField& qt : mod.q_T) {
        mod.q_T_moll.push_back(box_mollify(qt, std::sqrt(T)));
    }
    return mod;
}

/// |(phi, sigma)|^2 at a cell: all phi_i and all sigma_ijk (both orders of j,k).
inline double extended_norm2(const std::vector<ScalarField>& phi, const SkewTensorField& sigma, Index c)
{
    double s = 0.0;
    for (const ScalarField& p : phi) {
        s += p[c] * p[c];
    }
    for (int k = 0; k < sigma.stored_components(); ++k) {
        s += 2.0 * sigma.stored_flat(k)[c] * sigma.stored_flat(k)[c];
    }
    return s;
}

/// F_{R,T}: ball average over B_R(center) of |(phi_T, sigma_T)|^2 / T plus the
/// centered second moment of the mollified flux.
inline double compute_F_RT(const ModifiedCorrectorSet& mod, double R, const Coord& center = {0, 0, 0})
{
    require(!mod.phi_T.empty(), "compute_F_RT: empty modified corrector");
    const GridSpec& g = mod.phi_T.front().grid();
    require(R + 1e-12 >= std::sqrt(mod.T), "compute_F_RT: need sqrt(T) <= R");
    const auto cells = ball_cells(g, Ball{center, R});
    const double inv = 1.0 / static_cast<double>(cells.size());
    double first = 0.0;
    for (Index c : cells) {
        first += extended_norm2(mod.phi_T, mod.sigma_T, c);
    }
    first *= inv / mod.T;
    double second = 0.0;
    for (const VectorField& qm : mod.q_T_moll) {
        for (int j = 0; j < qm.dim(); ++j) {
            double mean = 0.0;
            for (Index c : cells) {
                mean += qm[j][c];
            }
            mean *= inv;
            for (Index c : cells) {
                second += (qm[j][c] - mean) * (qm[j][c] - mean) * inv;
            }
        }
    }
    return std::sqrt(first + second);
}

}  // namespace homlab
