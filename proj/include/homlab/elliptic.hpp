#pragma once

#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

#include "homlab/krylov.hpp"
#include "homlab/lattice.hpp"

namespace homlab {

// u |-> mass*u - div(a grad u) with cell-wise a(x) acting on the forward-difference
// gradient at x. For symmetric a this equals grad^T a grad + mass, hence symmetric.
class DivFormOperator {
public:
    DivFormOperator(const CoefficientField& a, double mass)
        : a_(&a), mass_(mass), grads_(static_cast<std::size_t>(a.d()), Vec(static_cast<std::size_t>(a.grid().cells()))),
          flux_(static_cast<std::size_t>(a.d()), Vec(static_cast<std::size_t>(a.grid().cells())))
    {
    }

    const GridSpec& grid() const { return a_->grid(); }
    double mass() const { return mass_; }

    void apply(const Vec& u, Vec& out)
    {
        const GridSpec& g = grid();
        const int d = g.d();
        const Index cells = g.cells();
        for (int i = 0; i < d; ++i) {
            Vec& gi = grads_[static_cast<std::size_t>(i)];
            for_each_forward(g, i, [&](Index x, Index xp) {
                gi[static_cast<std::size_t>(x)] = u[static_cast<std::size_t>(xp)] - u[static_cast<std::size_t>(x)];
            });
        }
        const double* A = a_->data();
        for (Index c = 0; c < cells; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            const double* m = A + c * d * d;
            for (int i = 0; i < d; ++i) {
                double s = 0.0;
                for (int j = 0; j < d; ++j) {
                    s += m[i * d + j] * grads_[static_cast<std::size_t>(j)][cu];
                }
                flux_[static_cast<std::size_t>(i)][cu] = s;
            }
        }
        out.resize(u.size());
        for (std::size_t c = 0; c < u.size(); ++c) {
            out[c] = mass_ * u[c];
        }
        for (int i = 0; i < d; ++i) {
            const Vec& fi = flux_[static_cast<std::size_t>(i)];
            for_each_forward(g, i, [&](Index x, Index xp) {
                out[static_cast<std::size_t>(xp)] -= fi[static_cast<std::size_t>(xp)] - fi[static_cast<std::size_t>(x)];
            });
        }
    }

private:
    const CoefficientField* a_;
    double mass_;
    std::vector<Vec> grads_;
    std::vector<Vec> flux_;
};

/// Cell-wise product a(x) v(x).
inline VectorField apply_coefficients(const CoefficientField& a, const VectorField& v)
{
    const GridSpec& g = a.grid();
    const int d = g.d();
    VectorField out(g);
    for (Index c = 0; c < g.cells(); ++c) {
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                s += a(c, i, j) * v[j][c];
            }
            out[i][c] = s;
        }
    }
    return out;
}

/// Mean of tr(a)/d, the scalar of the constant-coefficient preconditioner.
inline double mean_isotropic_part(const CoefficientField& a)
{
    double s = 0.0;
    for (Index c = 0; c < a.grid().cells(); ++c) {
        for (int i = 0; i < a.d(); ++i) {
            s += a(c, i, i);
        }
    }
    return s / static_cast<double>(a.grid().cells() * a.d());
}

namespace detail {

inline LinearMap spectral_preconditioner(const GridSpec& g, double scale, double mass)
{
    return [g, scale, mass](const Vec& r, Vec& z) {
        ScalarField rf(g, r);
        ScalarField zf = spectral_filter(rf, [&](const Coord& k) {
            const double s = mass + scale * laplacian_symbol(g, k);
            return s > 0.0 ? 1.0 / s : 0.0;
        });
        z = std::move(zf.raw());
    };
}

inline LinearMap identity_map()
{
    return [](const Vec& r, Vec& z) { z = r; };
}

}  // namespace detail

/// Solve mass*u - div(a grad u) = rhs on the torus. With mass == 0 the mean of
/// rhs is projected out and the zero-mean solution is returned.
inline std::pair<ScalarField, SolveReport> solve_operator(const CoefficientField& a, const ScalarField& rhs,
                                                          double mass, const SolveOptions& opts,
                                                          const ScalarField* initial = nullptr)
{
    opts.validate();
    require(mass >= 0.0, "solve: inv_T must be nonnegative");
    require(rhs.grid() == a.grid(), "solve: grid mismatch");
    const GridSpec& g = a.grid();
    Vec b = rhs.raw();
    if (mass == 0.0) {
        const double m = rhs.mean();
        for (double& v : b) {
            v -= m;
        }
    }
    Vec x = initial ? initial->raw() : Vec(b.size(), 0.0);
    DivFormOperator op(a, mass);
    LinearMap apply = [&op](const Vec& u, Vec& out) { op.apply(u, out); };
    LinearMap precond = opts.preconditioner == Preconditioner::Spectral
                            ? detail::spectral_preconditioner(g, mean_isotropic_part(a), mass)
                            : detail::identity_map();
    SolveReport rep = a.is_symmetric() ? krylov::pcg(apply, precond, b, x, opts)
                                       : krylov::gmres(apply, precond, b, x, opts);
    ScalarField u(g, std::move(x));
    if (mass == 0.0) {
        u.subtract_mean();
    }
    return {std::move(u), rep};
}

/// inv_T*u - div(a grad u) = div g on the torus; zero-mean u when inv_T == 0.
inline std::pair<ScalarField, SolveReport> solve_divform(const CoefficientField& a, const VectorField& gfield,
                                                         double inv_T, const SolveOptions& opts = {})
{
    return solve_operator(a, div(gfield), inv_T, opts);
}

/// Discrete a-harmonic extension into a ball. Cells outside the ball keep the
/// boundary values; the equation div(a grad u) = 0 holds at every ball cell.
class BallDirichletProblem {
public:
    BallDirichletProblem(const CoefficientField& a, const Ball& ball) : a_(&a), ball_(ball)
    {
        const GridSpec& g = a.grid();
        interior_ = ball_cells(g, ball);
        std::sort(interior_.begin(), interior_.end());
        slot_.assign(static_cast<std::size_t>(g.cells()), -1);
        for (std::size_t i = 0; i < interior_.size(); ++i) {
            slot_[static_cast<std::size_t>(interior_[i])] = static_cast<Index>(i);
        }
        // Cells whose forward gradient enters the residual at some ball cell.
        std::vector<char> mark(static_cast<std::size_t>(g.cells()), 0);
        for (Index c : interior_) {
            mark[static_cast<std::size_t>(c)] = 1;
            for (int i = 0; i < g.d(); ++i) {
                mark[static_cast<std::size_t>(g.shifted(c, i, -1))] = 1;
            }
        }
        for (Index c = 0; c < g.cells(); ++c) {
            if (mark[static_cast<std::size_t>(c)]) {
                flux_cells_.push_back(c);
            }
        }
        neighbours_.resize(flux_cells_.size() * static_cast<std::size_t>(g.d()));
        for (std::size_t k = 0; k < flux_cells_.size(); ++k) {
            for (int i = 0; i < g.d(); ++i) {
                neighbours_[k * static_cast<std::size_t>(g.d()) + static_cast<std::size_t>(i)] =
                    g.shifted(flux_cells_[k], i, 1);
            }
        }
        back_.resize(interior_.size() * static_cast<std::size_t>(g.d()));
        for (std::size_t k = 0; k < interior_.size(); ++k) {
            for (int i = 0; i < g.d(); ++i) {
                back_[k * static_cast<std::size_t>(g.d()) + static_cast<std::size_t>(i)] =
                    g.shifted(interior_[k], i, -1);
            }
        }
        full_.assign(static_cast<std::size_t>(g.cells()), 0.0);
        flux_.assign(static_cast<std::size_t>(g.cells() * g.d()), 0.0);
    }

    const std::vector<Index>& interior() const { return interior_; }
    const std::vector<Index>& flux_cells() const { return flux_cells_; }

    // -div(a grad u) at the ball cells for a full-grid u.
    void residual_operator(const Vec& full, Vec& out)
    {
        const GridSpec& g = a_->grid();
        const int d = g.d();
        for (std::size_t k = 0; k < flux_cells_.size(); ++k) {
            const Index c = flux_cells_[k];
            const double uc = full[static_cast<std::size_t>(c)];
            double gr[3];
            for (int j = 0; j < d; ++j) {
                gr[j] = full[static_cast<std::size_t>(neighbours_[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)])] - uc;
            }
            for (int i = 0; i < d; ++i) {
                double s = 0.0;
                for (int j = 0; j < d; ++j) {
                    s += (*a_)(c, i, j) * gr[j];
                }
                flux_[static_cast<std::size_t>(c * d + i)] = s;
            }
        }
        out.assign(interior_.size(), 0.0);
        for (std::size_t k = 0; k < interior_.size(); ++k) {
            const Index c = interior_[k];
            double s = 0.0;
            for (int i = 0; i < d; ++i) {
                const Index b = back_[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)];
                s += flux_[static_cast<std::size_t>(c * d + i)] - flux_[static_cast<std::size_t>(b * d + i)];
            }
            out[k] = -s;
        }
    }

    std::pair<ScalarField, SolveReport> solve(const ScalarField& boundary, const SolveOptions& opts)
    {
        opts.validate();
        const GridSpec& g = a_->grid();
        require(boundary.grid() == g, "dirichlet: grid mismatch");
        const int d = g.d();
        // b = -A_IB u_B
        full_ = boundary.raw();
        for (Index c : interior_) {
            full_[static_cast<std::size_t>(c)] = 0.0;
        }
        Vec b;
        residual_operator(full_, b);
        for (double& v : b) {
            v = -v;
        }
        LinearMap apply = [this](const Vec& v, Vec& out) {
            std::fill(full_.begin(), full_.end(), 0.0);
            for (std::size_t k = 0; k < interior_.size(); ++k) {
                full_[static_cast<std::size_t>(interior_[k])] = v[k];
            }
            residual_operator(full_, out);
        };
        Vec diag(interior_.size(), 0.0);
        for (std::size_t k = 0; k < interior_.size(); ++k) {
            const Index c = interior_[k];
            double s = 0.0;
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    s += (*a_)(c, i, j);
                }
                s += (*a_)(back_[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)], i, i);
            }
            diag[k] = s;
        }
        LinearMap precond = [diag](const Vec& r, Vec& z) {
            z.resize(r.size());
            for (std::size_t k = 0; k < r.size(); ++k) {
                z[k] = r[k] / diag[k];
            }
        };
        Vec x(interior_.size(), 0.0);
        for (std::size_t k = 0; k < interior_.size(); ++k) {
            x[k] = boundary[interior_[k]];
        }
        SolveOptions o = opts;
        const SolveReport rep = a_->is_symmetric() ? krylov::pcg(apply, precond, b, x, o)
                                                   : krylov::gmres(apply, precond, b, x, o);
        ScalarField u = boundary;
        for (std::size_t k = 0; k < interior_.size(); ++k) {
            u[interior_[k]] = x[k];
        }
        return {std::move(u), rep};
    }

    /// Sum over the flux cells of grad u . a grad u (the energy the ball cells control).
    double energy(const ScalarField& u) const
    {
        const GridSpec& g = a_->grid();
        const int d = g.d();
        double e = 0.0;
        for (std::size_t k = 0; k < flux_cells_.size(); ++k) {
            const Index c = flux_cells_[k];
            double gr[3];
            for (int j = 0; j < d; ++j) {
                gr[j] = u[neighbours_[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)]] - u[c];
            }
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    e += gr[i] * 0.5 * ((*a_)(c, i, j) + (*a_)(c, j, i)) * gr[j];
                }
            }
        }
        return e;
    }

private:
    const CoefficientField* a_;
    Ball ball_;
    std::vector<Index> interior_;
    std::vector<Index> slot_;
    std::vector<Index> flux_cells_;
    std::vector<Index> neighbours_;
    std::vector<Index> back_;
    Vec full_;
    Vec flux_;
};

inline std::pair<ScalarField, SolveReport> solve_dirichlet_ball(const CoefficientField& a, const Ball& ball,
                                                                const ScalarField& boundary,
                                                                const SolveOptions& opts = {})
{
    BallDirichletProblem problem(a, ball);
    return problem.solve(boundary, opts);
}

/// Measured constant C in int_{B_{R/2}} |grad u|^2 <= C R^-2 int_{B_R} |u - mean|^2.
inline double caccioppoli_constant(const ScalarField& u, const Ball& ball)
{
    const GridSpec& g = u.grid();
    const VectorField gu = grad(u);
    Ball inner = ball;
    inner.radius = ball.radius / 2.0;
    double lhs = 0.0;
    for (Index c : ball_cells(g, inner)) {
        for (int i = 0; i < g.d(); ++i) {
            lhs += gu[i][c] * gu[i][c];
        }
    }
    const auto cells = ball_cells(g, ball);
    double mean = 0.0;
    for (Index c : cells) {
        mean += u[c];
    }
    mean /= static_cast<double>(cells.size());
    double rhs = 0.0;
    for (Index c : cells) {
        rhs += (u[c] - mean) * (u[c] - mean);
    }
    rhs /= ball.radius * ball.radius;
    return rhs > 0.0 ? lhs / rhs : 0.0;
}

}  // namespace homlab
