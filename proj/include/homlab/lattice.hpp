#pragma once

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "homlab/fft.hpp"
#include "homlab/grid.hpp"

namespace homlab {

/// Forward differences with periodic wrap: (grad u)_i(x) = u(x + e_i) - u(x).
inline VectorField grad(const ScalarField& u)
{
    const GridSpec& g = u.grid();
    VectorField out(g);
    for (int a = 0; a < g.d(); ++a) {
        ScalarField& c = out[a];
        for_each_forward(g, a, [&](Index x, Index xp) { c[x] = u[xp] - u[x]; });
    }
    return out;
}

/// Backward differences with periodic wrap; the exact negative adjoint of grad.
inline ScalarField div(const VectorField& f)
{
    const GridSpec& g = f.grid();
    ScalarField out(g);
    for (int a = 0; a < g.d(); ++a) {
        const ScalarField& c = f[a];
        for_each_forward(g, a, [&](Index x, Index xp) { out[xp] += c[xp] - c[x]; });
    }
    return out;
}

inline ScalarField forward_difference(const ScalarField& u, int axis)
{
    ScalarField out(u.grid());
    for_each_forward(u.grid(), axis, [&](Index x, Index xp) { out[x] = u[xp] - u[x]; });
    return out;
}

inline ScalarField backward_difference(const ScalarField& u, int axis)
{
    ScalarField out(u.grid());
    for_each_forward(u.grid(), axis, [&](Index x, Index xp) { out[xp] = u[xp] - u[x]; });
    return out;
}

/// div(grad u): the (2d+1)-point stencil.
inline ScalarField laplacian(const ScalarField& u) { return div(grad(u)); }

/// Zero-mean u with mass*u - div(grad u) = rhs - mean(rhs) when mass == 0,
/// and mass*u - div(grad u) = rhs when mass > 0.
inline ScalarField massive_poisson_solve(const ScalarField& rhs, double mass)
{
    const GridSpec& g = rhs.grid();
    return spectral_filter(rhs, [&](const Coord& k) {
        const double s = mass + laplacian_symbol(g, k);
        return s > 0.0 ? 1.0 / s : 0.0;
    });
}

inline ScalarField poisson_solve(const ScalarField& rhs) { return massive_poisson_solve(rhs, 0.0); }

struct Ball {
    Coord center{0, 0, 0};
    double radius = 1.0;
};

/// Integer offsets o with |o| <= radius, lexicographic order.
inline std::vector<Coord> ball_offsets(int d, double radius)
{
    std::vector<Coord> out;
    const Index r = static_cast<Index>(std::floor(radius + 1e-12));
    const double r2 = radius * radius + 1e-9;
    const Index zlo = d == 3 ? -r : 0;
    const Index zhi = d == 3 ? r : 0;
    for (Index i = -r; i <= r; ++i) {
        for (Index j = -r; j <= r; ++j) {
            for (Index k = zlo; k <= zhi; ++k) {
                const double q = static_cast<double>(i * i + j * j + k * k);
                if (q <= r2) {
                    out.push_back({i, j, k});
                }
            }
        }
    }
    return out;
}

inline void check_ball(const GridSpec& g, const Ball& b)
{
    require(b.radius >= 0.5, "ball: radius below half a cell leaves the ball empty");
    require(b.radius <= g.side_length() / 4.0 + 1e-12, "ball: radius exceeds L/4");
}

/// Linear indices of the cells of b (center-inclusion under the periodic metric).
inline std::vector<Index> ball_cells(const GridSpec& g, const Ball& b)
{
    check_ball(g, b);
    const auto offs = ball_offsets(g.d(), b.radius);
    std::vector<Index> cells;
    cells.reserve(offs.size());
    for (const Coord& o : offs) {
        cells.push_back(g.index({b.center[0] + o[0], b.center[1] + o[1], b.center[2] + o[2]}));
    }
    return cells;
}

inline double ball_average(const ScalarField& u, const Ball& b)
{
    const auto cells = ball_cells(u.grid(), b);
    double s = 0.0;
    for (Index c : cells) {
        s += u[c];
    }
    return s / static_cast<double>(cells.size());
}

inline std::vector<double> ball_average(const VectorField& u, const Ball& b)
{
    const auto cells = ball_cells(u.grid(), b);
    std::vector<double> out(static_cast<std::size_t>(u.dim()), 0.0);
    for (int i = 0; i < u.dim(); ++i) {
        for (Index c : cells) {
            out[static_cast<std::size_t>(i)] += u[i][c];
        }
        out[static_cast<std::size_t>(i)] /= static_cast<double>(cells.size());
    }
    return out;
}

/// Moving ball average on the given scale, computed as a periodic convolution.
inline ScalarField box_mollify(const ScalarField& u, double scale)
{
    const GridSpec& g = u.grid();
    check_ball(g, Ball{{0, 0, 0}, scale});
    const auto offs = ball_offsets(g.d(), scale);
    if (offs.size() == 1) {
        return u;
    }
    ScalarField kernel(g);
    const double w = 1.0 / static_cast<double>(offs.size());
    for (const Coord& o : offs) {
        kernel[g.index(o)] += w;
    }
    // Averaging over x + o equals convolving with the reflected kernel.
    Spectrum ku = forward_fft(u);
    const Spectrum kk = forward_fft(kernel);
    for (Index i = 0; i < ku.size(); ++i) {
        ku[i] *= std::conj(kk[i]);
    }
    return inverse_fft(std::move(ku));
}

inline VectorField box_mollify(const VectorField& u, double scale)
{
    VectorField out(u.grid());
    for (int i = 0; i < u.dim(); ++i) {
        out[i] = box_mollify(u[i], scale);
    }
    return out;
}

// Binary field layout: int64 LE header (d, N, components) then the values as
// float64 LE, row-major over cells with the components of a cell contiguous.
namespace io {

inline void write_u64(std::ostream& os, std::uint64_t v)
{
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    }
    os.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64(std::istream& is)
{
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) {
        throw InvalidArgument("field file: truncated header");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    return v;
}

inline void write_f64(std::ostream& os, double x) { write_u64(os, std::bit_cast<std::uint64_t>(x)); }

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

struct RawField {
    int d = 0;
    Index n = 0;
    int components = 0;
    std::vector<double> values;  // cell-major

    double at(Index cell, int comp) const
    {
        return values[static_cast<std::size_t>(cell * components + comp)];
    }
};

inline void write_raw(std::ostream& os, const GridSpec& g, int components,
                      const std::function<double(Index, int)>& value)
{
    write_u64(os, static_cast<std::uint64_t>(g.d()));
    write_u64(os, static_cast<std::uint64_t>(g.n()));
    write_u64(os, static_cast<std::uint64_t>(components));
    for (Index c = 0; c < g.cells(); ++c) {
        for (int k = 0; k < components; ++k) {
            write_f64(os, value(c, k));
        }
    }
}

inline RawField read_raw(std::istream& is)
{
    RawField r;
    r.d = static_cast<int>(read_u64(is));
    r.n = static_cast<Index>(read_u64(is));
    r.components = static_cast<int>(read_u64(is));
    const GridSpec g(r.d, r.n);
    r.values.resize(static_cast<std::size_t>(g.cells() * r.components));
    for (double& v : r.values) {
        v = read_f64(is);
    }
    return r;
}

inline std::ofstream open_out(const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw InvalidArgument("cannot open " + path + " for writing");
    }
    return os;
}

inline std::ifstream open_in(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw InvalidArgument("cannot open " + path);
    }
    return is;
}

inline void save(const std::string& path, const ScalarField& u)
{
    auto os = open_out(path);
    write_raw(os, u.grid(), 1, [&](Index c, int) { return u[c]; });
}

inline void save(const std::string& path, const VectorField& u)
{
    auto os = open_out(path);
    write_raw(os, u.grid(), u.dim(), [&](Index c, int k) { return u[k][c]; });
}

inline void save(const std::string& path, const SkewTensorField& s)
{
    auto os = open_out(path);
    write_raw(os, s.grid(), s.stored_components(), [&](Index c, int k) { return s.stored_flat(k)[c]; });
}

inline void save(const std::string& path, const CoefficientField& a)
{
    auto os = open_out(path);
    const int d = a.d();
    write_raw(os, a.grid(), d * d, [&](Index c, int k) { return a(c, k / d, k % d); });
}

inline ScalarField load_scalar(const std::string& path)
{
    auto is = open_in(path);
    RawField r = read_raw(is);
    require(r.components == 1, "load_scalar: expected one component");
    return ScalarField(GridSpec(r.d, r.n), std::move(r.values));
}

inline CoefficientField load_coefficients(const std::string& path)
{
    auto is = open_in(path);
    const RawField r = read_raw(is);
    require(r.components == r.d * r.d, "load_coefficients: expected d*d components");
    CoefficientField a(GridSpec(r.d, r.n));
    a.raw() = r.values;
    return a;
}

}  // namespace io

}  // namespace homlab
