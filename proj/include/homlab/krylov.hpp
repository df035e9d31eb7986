#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "homlab/grid.hpp"

namespace homlab {

enum class Preconditioner { None, Spectral };

struct SolveOptions {
    double tol = 1e-9;
    int max_iter = 2000;
    Preconditioner preconditioner = Preconditioner::Spectral;
    int restart = 40;  // GMRES only

    void validate() const
    {
        require(tol > 0.0 && tol <= 1e-3, "SolveOptions: tol must lie in (0, 1e-3]");
        require(max_iter >= 1, "SolveOptions: max_iter must be >= 1");
        require(restart >= 2, "SolveOptions: restart must be >= 2");
    }
};

struct SolveReport {
    int iterations = 0;
    double residual = 0.0;  // relative, recomputed from scratch
    bool converged = false;
};

using Vec = std::vector<double>;
using LinearMap = std::function<void(const Vec&, Vec&)>;

namespace krylov {

inline void axpy(double alpha, const Vec& x, Vec& y)
{
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

inline double true_residual(const LinearMap& apply, const Vec& b, const Vec& x, Vec& scratch)
{
    apply(x, scratch);
    double rr = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double r = b[i] - scratch[i];
        rr += r * r;
    }
    const double bn = norm2(b);
    return bn > 0.0 ? std::sqrt(rr) / bn : std::sqrt(rr);
}

/// Preconditioned conjugate gradients for symmetric positive (semi)definite maps.
inline SolveReport pcg(const LinearMap& apply, const LinearMap& precond, const Vec& b, Vec& x,
                       const SolveOptions& opts)
{
    SolveReport rep;
    const std::size_t n = b.size();
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        x.assign(n, 0.0);
        rep.converged = true;
        return rep;
    }
    Vec r(n), z(n), p(n), ap(n);
    apply(x, ap);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = b[i] - ap[i];
    }
    precond(r, z);
    p = z;
    double rz = dot(r, z);
    // Stop a little below tol on the recurrence so the recomputed residual meets it.
    const double target = 0.5 * opts.tol * bnorm;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        if (norm2(r) <= target) {
            break;
        }
        apply(p, ap);
        const double pap = dot(p, ap);
        if (pap <= 0.0) {
            break;
        }
        const double alpha = rz / pap;
        axpy(alpha, p, x);
        axpy(-alpha, ap, r);
        precond(r, z);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = z[i] + beta * p[i];
        }
    }
    rep.iterations = it;
    rep.residual = true_residual(apply, b, x, ap);
    rep.converged = rep.residual <= opts.tol;
    return rep;
}

/// Right-preconditioned restarted GMRES; minimizes the true residual norm per cycle.
inline SolveReport gmres(const LinearMap& apply, const LinearMap& precond, const Vec& b, Vec& x,
                         const SolveOptions& opts)
{
    SolveReport rep;
    const std::size_t n = b.size();
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        x.assign(n, 0.0);
        rep.converged = true;
        return rep;
    }
    const int m = opts.restart;
    std::vector<Vec> v(static_cast<std::size_t>(m + 1), Vec(n));
    std::vector<Vec> zs(static_cast<std::size_t>(m), Vec(n));
    std::vector<std::vector<double>> h(static_cast<std::size_t>(m + 1), std::vector<double>(static_cast<std::size_t>(m), 0.0));
    std::vector<double> cs(static_cast<std::size_t>(m)), sn(static_cast<std::size_t>(m)), gvec(static_cast<std::size_t>(m + 1));
    Vec w(n);
    const double target = 0.5 * opts.tol * bnorm;
    int total = 0;
    while (total < opts.max_iter) {
        apply(x, w);
        for (std::size_t i = 0; i < n; ++i) {
            v[0][i] = b[i] - w[i];
        }
        double beta = norm2(v[0]);
        if (beta <= target) {
            break;
        }
        for (double& e : v[0]) {
            e /= beta;
        }
        std::fill(gvec.begin(), gvec.end(), 0.0);
        gvec[0] = beta;
        int k = 0;
        for (; k < m && total < opts.max_iter; ++k, ++total) {
            const auto ku = static_cast<std::size_t>(k);
            precond(v[ku], zs[ku]);
            apply(zs[ku], w);
            for (int j = 0; j <= k; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                h[ju][ku] = dot(w, v[ju]);
                axpy(-h[ju][ku], v[ju], w);
            }
            const double hn = norm2(w);
            h[ku + 1][ku] = hn;
            if (hn > 0.0) {
                for (std::size_t i = 0; i < n; ++i) {
                    v[ku + 1][i] = w[i] / hn;
                }
            }
            for (int j = 0; j < k; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                const double t = cs[ju] * h[ju][ku] + sn[ju] * h[ju + 1][ku];
                h[ju + 1][ku] = -sn[ju] * h[ju][ku] + cs[ju] * h[ju + 1][ku];
                h[ju][ku] = t;
            }
            const double den = std::hypot(h[ku][ku], h[ku + 1][ku]);
            cs[ku] = den > 0.0 ? h[ku][ku] / den : 1.0;
            sn[ku] = den > 0.0 ? h[ku + 1][ku] / den : 0.0;
            h[ku][ku] = den;
            h[ku + 1][ku] = 0.0;
            gvec[ku + 1] = -sn[ku] * gvec[ku];
            gvec[ku] = cs[ku] * gvec[ku];
            if (std::abs(gvec[ku + 1]) <= target || hn == 0.0) {
                ++k;
                ++total;
                break;
            }
        }
        // back substitution on the k x k triangle
        std::vector<double> y(static_cast<std::size_t>(k), 0.0);
        for (int i = k - 1; i >= 0; --i) {
            const auto iu = static_cast<std::size_t>(i);
            double s = gvec[iu];
            for (int j = i + 1; j < k; ++j) {
                s -= h[iu][static_cast<std::size_t>(j)] * y[static_cast<std::size_t>(j)];
            }
            y[iu] = s / h[iu][iu];
        }
        for (int j = 0; j < k; ++j) {
            axpy(y[static_cast<std::size_t>(j)], zs[static_cast<std::size_t>(j)], x);
        }
        if (std::abs(gvec[static_cast<std::size_t>(k)]) <= target) {
            break;
        }
    }
    rep.iterations = total;
    rep.residual = true_residual(apply, b, x, w);
    rep.converged = rep.residual <= opts.tol;
    return rep;
}

}  // namespace krylov

}  // namespace homlab
