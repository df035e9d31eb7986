#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "homlab/corrector.hpp"
#include "homlab/partition.hpp"

namespace homlab {

enum class FunctionalKind { Phi, Sigma };

/// F = sum_x grad phi_i . g (Phi) or F = sum_x grad sigma_ijk . g (Sigma).
struct FunctionalSpec {
    FunctionalKind kind = FunctionalKind::Phi;
    int i = 0;
    int j = 0;
    int k = 1;
    VectorField weight;
    double support_radius = 0.0;

    void validate(const GridSpec& g) const
    {
        require(weight.grid() == g && weight.dim() == g.d(), "FunctionalSpec: weight grid mismatch");
        require(i >= 0 && i < g.d(), "FunctionalSpec: direction i out of range");
        if (kind == FunctionalKind::Sigma) {
            require(j >= 0 && k >= 0 && j < g.d() && k < g.d() && j != k, "FunctionalSpec: need j != k in range");
        }
        require(support_radius <= g.side_length() / 8.0 + 1e-12, "FunctionalSpec: support radius exceeds L/8");
    }

    /// g = e_m / |B_r| on the lattice ball B_r(center).
    static VectorField ball_weight(const GridSpec& g, int m, double r, const Coord& center = {0, 0, 0})
    {
        VectorField w(g);
        const auto cells = ball_cells(g, Ball{center, r});
        for (Index c : cells) {
            w[m][c] = 1.0 / static_cast<double>(cells.size());
        }
        return w;
    }

    static FunctionalSpec phi(int i, VectorField weight, double support_radius)
    {
        return FunctionalSpec{FunctionalKind::Phi, i, 0, 1, std::move(weight), support_radius};
    }

    static FunctionalSpec sigma(int i, int j, int k, VectorField weight, double support_radius)
    {
        return FunctionalSpec{FunctionalKind::Sigma, i, j, k, std::move(weight), support_radius};
    }
};

/// sigma_ijk for one i, read from the skew storage with the sign of (j,k).
inline ScalarField sigma_component(const SkewTensorField& sigma, int i, int j, int k)
{
    ScalarField s = j < k ? sigma.stored(i, j, k) : sigma.stored(i, k, j);
    if (j > k) {
        s *= -1.0;
    }
    return s;
}

/// curl-type right-hand side D+_j f_k - D+_k f_j.
inline ScalarField antisymmetric_difference(const VectorField& f, int j, int k)
{
    ScalarField r = forward_difference(f[k], j);
    r -= forward_difference(f[j], k);
    return r;
}

inline double evaluate_functional(const CorrectorSet& corr, const FunctionalSpec& spec)
{
    spec.validate(corr.grid);
    if (spec.kind == FunctionalKind::Phi) {
        return inner(grad(corr.phi[static_cast<std::size_t>(spec.i)]), spec.weight);
    }
    require(corr.has_sigma(), "evaluate_functional: corrector set has no sigma");
    return inner(grad(sigma_component(corr.sigma, spec.i, spec.j, spec.k)), spec.weight);
}

struct DerivativeField {
    CoefficientField dF_da;          // d x d matrix density per cell
    ScalarField v_tilde;             // -div(a^T grad v~) = div g (Phi)
    ScalarField v_bar;               // -Laplace v_bar = div g (Sigma)
    ScalarField v_hat;               // -div(a^T grad v^) = div(a^T h) (Sigma)
    std::vector<SolveReport> reports;

    /// sum_x dF/da : delta_a
    double pair(const CoefficientField& delta_a) const
    {
        require(delta_a.grid() == dF_da.grid(), "DerivativeField: grid mismatch");
        double s = 0.0;
        for (std::size_t n = 0; n < dF_da.raw().size(); ++n) {
            s += dF_da.raw()[n] * delta_a.raw()[n];
        }
        return s;
    }

    /// Entrywise-L1 norm of dF/da at a cell.
    double l1_at(Index c) const
    {
        const int d = dF_da.d();
        double s = 0.0;
        for (int m = 0; m < d; ++m) {
            for (int n = 0; n < d; ++n) {
                s += std::abs(dF_da(c, m, n));
            }
        }
        return s;
    }
};

namespace detail {

inline CoefficientField outer_product(const VectorField& u, const VectorField& v)
{
    const GridSpec& g = u.grid();
    const int d = g.d();
    CoefficientField out(g);
    for (Index c = 0; c < g.cells(); ++c) {
        for (int m = 0; m < d; ++m) {
            for (int n = 0; n < d; ++n) {
                out(c, m, n) = u[m][c] * v[n][c];
            }
        }
    }
    return out;
}

inline void require_converged(const SolveReport& r, const std::string& what)
{
    if (!r.converged) {
        throw SolverError(what + ": solver did not converge (residual " + std::to_string(r.residual) + ")");
    }
}

/// h = D-_j v e_k - D-_k v e_j
inline VectorField sigma_adjoint_flux(const ScalarField& v, int j, int k)
{
    VectorField h(v.grid());
    h[k] = backward_difference(v, j);
    h[j] = backward_difference(v, k);
    h[j] *= -1.0;
    return h;
}

}  // namespace detail

/// Adjoint derivative of a corrector functional with respect to the coefficients.
/// Phi: dF/da = grad v~ (x) (grad phi_i + e_i).
/// Sigma: dF/da = (h + grad v^) (x) (grad phi_i + e_i).
inline DerivativeField malliavin_derivative(const CoefficientField& a, const CorrectorSet& corr,
                                            const FunctionalSpec& spec, const SolveOptions& opts = {})
{
    require(a.grid() == corr.grid, "malliavin_derivative: grid mismatch");
    require(all_converged(corr), "malliavin_derivative: corrector not converged");
    spec.validate(corr.grid);
    const CoefficientField at = a.transposed();
    const VectorField shifted = shifted_gradient(corr.phi[static_cast<std::size_t>(spec.i)], spec.i);
    DerivativeField out;
    if (spec.kind == FunctionalKind::Phi) {
        auto [v, rep] = solve_divform(at, spec.weight, 0.0, opts);
        detail::require_converged(rep, "malliavin_derivative");
        out.dF_da = detail::outer_product(grad(v), shifted);
        out.v_tilde = std::move(v);
        out.reports.push_back(rep);
        return out;
    }
    ScalarField vb = poisson_solve(div(spec.weight));
    const VectorField h = detail::sigma_adjoint_flux(vb, spec.j, spec.k);
    auto [vh, rep] = solve_divform(at, apply_coefficients(at, h), 0.0, opts);
    detail::require_converged(rep, "malliavin_derivative");
    VectorField lhs = grad(vh);
    for (int m = 0; m < corr.d(); ++m) {
        lhs[m] += h[m];
    }
    out.dF_da = detail::outer_product(lhs, shifted);
    out.v_bar = std::move(vb);
    out.v_hat = std::move(vh);
    out.reports.push_back(rep);
    return out;
}

/// First variation of F in the direction delta_a, from the linearized corrector
/// equation -div(a grad dphi) = div(delta_a (grad phi + e)) solved directly.
inline double direct_variation(const CoefficientField& a, const CorrectorSet& corr, const FunctionalSpec& spec,
                               const CoefficientField& delta_a, const SolveOptions& opts = {})
{
    spec.validate(corr.grid);
    const VectorField shifted = shifted_gradient(corr.phi[static_cast<std::size_t>(spec.i)], spec.i);
    const VectorField src = apply_coefficients(delta_a, shifted);
    auto [dphi, rep] = solve_divform(a, src, 0.0, opts);
    detail::require_converged(rep, "direct_variation");
    if (spec.kind == FunctionalKind::Phi) {
        return inner(grad(dphi), spec.weight);
    }
    VectorField dq = apply_coefficients(a, grad(dphi));
    for (int m = 0; m < corr.d(); ++m) {
        dq[m] += src[m];
    }
    const ScalarField ds = poisson_solve(antisymmetric_difference(dq, spec.j, spec.k));
    return inner(grad(ds), spec.weight);
}

/// Labeling of torus cells into groups.
struct CellPartition {
    GridSpec grid;
    std::vector<int> label;
    int groups = 0;

    void validate() const
    {
        require(static_cast<Index>(label.size()) == grid.cells(), "CellPartition: label count mismatch");
        for (int l : label) {
            if (l < 0 || l >= groups) {
                throw InvalidArgument("CellPartition: gap, a cell has no group");
            }
        }
    }

    static CellPartition from_labels(const GridSpec& g, std::vector<int> labels)
    {
        require(static_cast<Index>(labels.size()) == g.cells(), "CellPartition: label count mismatch");
        CellPartition p{g, std::move(labels), 0};
        for (int l : p.label) {
            if (l < 0) {
                throw InvalidArgument("CellPartition: gap, a cell has no group");
            }
            p.groups = std::max(p.groups, l + 1);
        }
        return p;
    }

    static CellPartition single(const GridSpec& g)
    {
        return CellPartition{g, std::vector<int>(static_cast<std::size_t>(g.cells()), 0), 1};
    }

    /// Cubic blocks of the given side; side must divide N.
    static CellPartition blocks(const GridSpec& g, Index side)
    {
        require(side >= 1 && g.n() % side == 0, "CellPartition: block side must divide N");
        const Index nb = g.n() / side;
        CellPartition p{g, std::vector<int>(static_cast<std::size_t>(g.cells())), 1};
        for (int a = 0; a < g.d(); ++a) {
            p.groups *= static_cast<int>(nb);
        }
        for (Index c = 0; c < g.cells(); ++c) {
            const Coord x = g.coord(c);
            Index l = 0;
            for (int a = 0; a < g.d(); ++a) {
                l = l * nb + x[static_cast<std::size_t>(a)] / side;
            }
            p.label[static_cast<std::size_t>(c)] = static_cast<int>(l);
        }
        return p;
    }

    /// Groups from a geometric partition: the torus cell with centered coordinate
    /// y in [-N/2, N/2)^d joins the partition cell containing the point y.
    /// Partition cells without lattice points are dropped.
    static CellPartition from_partition(const GridSpec& g, const Partition& part)
    {
        require(part.d == g.d(), "CellPartition: dimension mismatch");
        require(static_cast<double>(g.n()) / 2.0 <= part.half_width, "CellPartition: partition does not cover the torus");
        const detail::CellTree tree(part.cells, part.d);
        std::vector<int> raw(static_cast<std::size_t>(g.cells()));
        std::vector<int> compact(part.cells.size(), -1);
        int groups = 0;
        for (Index c = 0; c < g.cells(); ++c) {
            const Coord x = g.coord(c);
            Point p{0.0, 0.0, 0.0};
            for (int a = 0; a < g.d(); ++a) {
                p[static_cast<std::size_t>(a)] = static_cast<double>(g.displacement(0, x[static_cast<std::size_t>(a)]));
            }
            const auto hits = tree.containing(p);
            if (hits.empty()) {
                throw InvalidArgument("CellPartition: gap in partition");
            }
            if (hits.size() > 1) {
                throw InvalidArgument("CellPartition: overlapping partition cells");
            }
            int& l = compact[hits.front()];
            if (l < 0) {
                l = groups++;
            }
            raw[static_cast<std::size_t>(c)] = l;
        }
        return CellPartition{g, std::move(raw), groups};
    }

    /// Union of groups a and b; the result keeps consecutive labels.
    CellPartition merged(int a, int b) const
    {
        require(a >= 0 && b >= 0 && a < groups && b < groups && a != b, "CellPartition: invalid merge");
        const int keep = std::min(a, b), drop = std::max(a, b);
        CellPartition p = *this;
        for (int& l : p.label) {
            if (l == drop) {
                l = keep;
            } else if (l > drop) {
                --l;
            }
        }
        p.groups = groups - 1;
        return p;
    }
};

/// sum_D (sum_{x in D} |dF/da(x)|_1)^2
inline double carre_du_champ(const DerivativeField& deriv, const CellPartition& part)
{
    part.validate();
    require(part.grid == deriv.dF_da.grid(), "carre_du_champ: grid mismatch");
    std::vector<double> mass(static_cast<std::size_t>(part.groups), 0.0);
    for (Index c = 0; c < part.grid.cells(); ++c) {
        mass[static_cast<std::size_t>(part.label[static_cast<std::size_t>(c)])] += deriv.l1_at(c);
    }
    double s = 0.0;
    for (double m : mass) {
        s += m * m;
    }
    return s;
}

struct FdCheckReport {
    double adjoint = 0.0;        // sum_{D0} dF/da : delta_a
    double fd = 0.0;             // (F(a + t delta_a) - F(a)) / t
    double fd_half = 0.0;        // same at t/2
    double richardson = 0.0;     // 2 fd_half - fd
    double rel_error = 0.0;
    double rel_error_half = 0.0;
    double rel_error_richardson = 0.0;

    /// err(t) / err(t/2), close to 2 for a first-order remainder.
    double halving_ratio() const { return rel_error_half > 0.0 ? rel_error / rel_error_half : 0.0; }
};

/// (F(a + t delta_a) - F(a)) / t with the difference phi_t - phi solved from
/// -div(a_t grad w) = div(t delta_a (grad phi + e)).
inline double finite_difference(const CoefficientField& a, const CorrectorSet& corr, const FunctionalSpec& spec,
                                const CoefficientField& delta_a, double t, const SolveOptions& opts = {})
{
    require(t > 0.0, "finite_difference: t must be positive");
    spec.validate(corr.grid);
    CoefficientField at = a;
    for (std::size_t n = 0; n < at.raw().size(); ++n) {
        at.raw()[n] += t * delta_a.raw()[n];
    }
    const VectorField shifted = shifted_gradient(corr.phi[static_cast<std::size_t>(spec.i)], spec.i);
    VectorField src = apply_coefficients(delta_a, shifted);
    for (int m = 0; m < corr.d(); ++m) {
        src[m] *= t;
    }
    auto [w, rep] = solve_divform(at, src, 0.0, opts);
    detail::require_converged(rep, "finite_difference");
    if (spec.kind == FunctionalKind::Phi) {
        return inner(grad(w), spec.weight) / t;
    }
    VectorField dq = apply_coefficients(at, grad(w));
    for (int m = 0; m < corr.d(); ++m) {
        dq[m] += src[m];
    }
    const ScalarField ds = poisson_solve(antisymmetric_difference(dq, spec.j, spec.k));
    return inner(grad(ds), spec.weight) / t;
}

/// Perturbation t * direction supported on the single cell d0.
inline CoefficientField cell_perturbation(const GridSpec& g, Index d0, const Matrix& direction)
{
    CoefficientField da(g);
    da.set(d0, direction);
    return da;
}

/// Cell maximizing |dF/da : direction|.
inline Index most_sensitive_cell(const DerivativeField& deriv, const Matrix& direction)
{
    const CoefficientField& f = deriv.dF_da;
    const int d = f.d();
    Index best = 0;
    double best_v = -1.0;
    for (Index c = 0; c < f.grid().cells(); ++c) {
        double s = 0.0;
        for (int m = 0; m < d; ++m) {
            for (int n = 0; n < d; ++n) {
                s += f(c, m, n) * direction[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)];
            }
        }
        if (std::abs(s) > best_v) {
            best_v = std::abs(s);
            best = c;
        }
    }
    return best;
}

/// Adjoint derivative on a one-cell perturbation against finite differences at t and t/2.
inline FdCheckReport fd_check(const CoefficientField& a, const CorrectorSet& corr, const DerivativeField& deriv,
                              const FunctionalSpec& spec, Index d0, const Matrix& direction, double t,
                              const SolveOptions& opts = {})
{
    const CoefficientField da = cell_perturbation(a.grid(), d0, direction);
    FdCheckReport r;
    r.adjoint = deriv.pair(da);
    r.fd = finite_difference(a, corr, spec, da, t, opts);
    r.fd_half = finite_difference(a, corr, spec, da, 0.5 * t, opts);
    r.richardson = 2.0 * r.fd_half - r.fd;
    const double scale = std::max(std::abs(r.adjoint), 1e-300);
    r.rel_error = std::abs(r.fd - r.adjoint) / scale;
    r.rel_error_half = std::abs(r.fd_half - r.adjoint) / scale;
    r.rel_error_richardson = std::abs(r.richardson - r.adjoint) / scale;
    return r;
}

}  // namespace homlab
