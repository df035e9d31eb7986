#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "homlab/error.hpp"

namespace homlab {

using Index = std::int64_t;
using Coord = std::array<Index, 3>;

// Periodic lattice of N^d unit cells. Cell centers sit at integer coordinates,
// linear index is row-major with axis 0 slowest.
class GridSpec {
public:
    GridSpec() = default;

    GridSpec(int dim, Index cells_per_axis) : d_(dim), n_(cells_per_axis)
    {
        require(dim == 2 || dim == 3, "GridSpec: dimension must be 2 or 3");
        require(cells_per_axis >= 4 && cells_per_axis % 2 == 0,
                "GridSpec: cells per axis must be even and >= 4");
        total_ = 1;
        for (int a = 0; a < d_; ++a) {
            total_ *= n_;
        }
        Index s = 1;
        for (int a = d_ - 1; a >= 0; --a) {
            stride_[a] = s;
            s *= n_;
        }
    }

    int d() const { return d_; }
    Index n() const { return n_; }
    double spacing() const { return 1.0; }
    double side_length() const { return static_cast<double>(n_); }
    Index cells() const { return total_; }
    Index stride(int axis) const { return stride_[axis]; }

    Index index(const Coord& x) const
    {
        Index idx = 0;
        for (int a = 0; a < d_; ++a) {
            idx += wrap(x[a]) * stride_[a];
        }
        return idx;
    }

    Coord coord(Index idx) const
    {
        Coord x{0, 0, 0};
        for (int a = 0; a < d_; ++a) {
            x[a] = (idx / stride_[a]) % n_;
        }
        return x;
    }

    Index wrap(Index c) const
    {
        const Index r = c % n_;
        return r < 0 ? r + n_ : r;
    }

    // Signed minimal-image displacement in (-N/2, N/2].
    Index displacement(Index from, Index to) const
    {
        Index dlt = wrap(to - from);
        if (dlt > n_ / 2) {
            dlt -= n_;
        }
        return dlt;
    }

    Index shifted(Index idx, int axis, Index by) const
    {
        Coord x = coord(idx);
        x[axis] += by;
        return index(x);
    }

    bool operator==(const GridSpec& o) const { return d_ == o.d_ && n_ == o.n_; }
    bool operator!=(const GridSpec& o) const { return !(*this == o); }

private:
    int d_ = 2;
    Index n_ = 0;
    Index total_ = 0;
    std::array<Index, 3> stride_{0, 0, 0};
};

// Visit every (cell, forward neighbour along axis) pair with the periodic seam
// handled by a single branch per line.
template <class Fn>
inline void for_each_forward(const GridSpec& g, int axis, Fn&& fn)
{
    const Index n = g.n();
    const Index s = g.stride(axis);
    const Index block = n * s;
    const Index outer = g.cells() / block;
    for (Index o = 0; o < outer; ++o) {
        const Index base = o * block;
        for (Index c = 0; c < n; ++c) {
            const Index row = base + c * s;
            const Index nb = (c + 1 < n) ? row + s : base;
            for (Index in = 0; in < s; ++in) {
                fn(row + in, nb + in);
            }
        }
    }
}

class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const GridSpec& g, double value = 0.0)
        : grid_(g), values_(static_cast<std::size_t>(g.cells()), value)
    {
    }
    ScalarField(const GridSpec& g, std::vector<double> values) : grid_(g), values_(std::move(values))
    {
        require(static_cast<Index>(values_.size()) == g.cells(), "ScalarField: size mismatch");
    }

    const GridSpec& grid() const { return grid_; }
    Index size() const { return static_cast<Index>(values_.size()); }
    double& operator[](Index i) { return values_[static_cast<std::size_t>(i)]; }
    double operator[](Index i) const { return values_[static_cast<std::size_t>(i)]; }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& raw() { return values_; }
    const std::vector<double>& raw() const { return values_; }

    double mean() const
    {
        return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
    }

    void subtract_mean()
    {
        const double m = mean();
        for (double& v : values_) {
            v -= m;
        }
    }

    ScalarField& operator+=(const ScalarField& o)
    {
        for (std::size_t i = 0; i < values_.size(); ++i) {
            values_[i] += o.values_[i];
        }
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o)
    {
        for (std::size_t i = 0; i < values_.size(); ++i) {
            values_[i] -= o.values_[i];
        }
        return *this;
    }
    ScalarField& operator*=(double s)
    {
        for (double& v : values_) {
            v *= s;
        }
        return *this;
    }

private:
    GridSpec grid_;
    std::vector<double> values_;
};

class VectorField {
public:
    VectorField() = default;
    explicit VectorField(const GridSpec& g, double value = 0.0)
        : grid_(g), comps_(static_cast<std::size_t>(g.d()), ScalarField(g, value))
    {
    }

    const GridSpec& grid() const { return grid_; }
    int dim() const { return static_cast<int>(comps_.size()); }
    ScalarField& operator[](int i) { return comps_[static_cast<std::size_t>(i)]; }
    const ScalarField& operator[](int i) const { return comps_[static_cast<std::size_t>(i)]; }

    double mean(int i) const { return comps_[static_cast<std::size_t>(i)].mean(); }

private:
    GridSpec grid_;
    std::vector<ScalarField> comps_;
};

// Rank-3 field sigma(i,j,k) skew in (j,k); only j<k is stored.
class SkewTensorField {
public:
    SkewTensorField() = default;
    explicit SkewTensorField(const GridSpec& g) : grid_(g)
    {
        const int d = g.d();
        comps_.assign(static_cast<std::size_t>(d * pairs(d)), ScalarField(g));
    }

    static int pairs(int d) { return d * (d - 1) / 2; }

    static int pair_index(int d, int j, int k)
    {
        // j < k
        int p = 0;
        for (int a = 0; a < j; ++a) {
            p += d - 1 - a;
        }
        return p + (k - j - 1);
    }

    const GridSpec& grid() const { return grid_; }
    int stored_components() const { return static_cast<int>(comps_.size()); }

    ScalarField& stored(int i, int j, int k)
    {
        return comps_[static_cast<std::size_t>(i * pairs(grid_.d()) + pair_index(grid_.d(), j, k))];
    }
    const ScalarField& stored(int i, int j, int k) const
    {
        return comps_[static_cast<std::size_t>(i * pairs(grid_.d()) + pair_index(grid_.d(), j, k))];
    }
    ScalarField& stored_flat(int c) { return comps_[static_cast<std::size_t>(c)]; }
    const ScalarField& stored_flat(int c) const { return comps_[static_cast<std::size_t>(c)]; }

    double value(int i, int j, int k, Index cell) const
    {
        if (j == k) {
            return 0.0;
        }
        return j < k ? stored(i, j, k)[cell] : -stored(i, k, j)[cell];
    }

private:
    GridSpec grid_;
    std::vector<ScalarField> comps_;
};

using Matrix = std::array<std::array<double, 3>, 3>;

inline Matrix identity_matrix(int d)
{
    Matrix m{};
    for (int i = 0; i < d; ++i) {
        m[i][i] = 1.0;
    }
    return m;
}

// Per-cell d x d coefficient matrices, cell-major with row-major entries.
class CoefficientField {
public:
    CoefficientField() = default;
    explicit CoefficientField(const GridSpec& g)
        : grid_(g), entries_(static_cast<std::size_t>(g.cells() * g.d() * g.d()), 0.0)
    {
    }

    static CoefficientField constant(const GridSpec& g, const Matrix& m)
    {
        CoefficientField a(g);
        for (Index c = 0; c < g.cells(); ++c) {
            a.set(c, m);
        }
        return a;
    }

    const GridSpec& grid() const { return grid_; }
    int d() const { return grid_.d(); }

    double operator()(Index cell, int i, int j) const
    {
        return entries_[static_cast<std::size_t>((cell * d() + i) * d() + j)];
    }
    double& operator()(Index cell, int i, int j)
    {
        return entries_[static_cast<std::size_t>((cell * d() + i) * d() + j)];
    }

    Matrix at(Index cell) const
    {
        Matrix m{};
        for (int i = 0; i < d(); ++i) {
            for (int j = 0; j < d(); ++j) {
                m[i][j] = (*this)(cell, i, j);
            }
        }
        return m;
    }

    void set(Index cell, const Matrix& m)
    {
        for (int i = 0; i < d(); ++i) {
            for (int j = 0; j < d(); ++j) {
                (*this)(cell, i, j) = m[i][j];
            }
        }
    }

    const double* data() const { return entries_.data(); }
    std::vector<double>& raw() { return entries_; }
    const std::vector<double>& raw() const { return entries_; }

    bool is_symmetric() const
    {
        for (Index c = 0; c < grid_.cells(); ++c) {
            for (int i = 0; i < d(); ++i) {
                for (int j = i + 1; j < d(); ++j) {
                    if ((*this)(c, i, j) != (*this)(c, j, i)) {
                        return false;
                    }
                }
            }
        }
        return true;
    }

    CoefficientField transposed() const
    {
        CoefficientField t(grid_);
        for (Index c = 0; c < grid_.cells(); ++c) {
            for (int i = 0; i < d(); ++i) {
                for (int j = 0; j < d(); ++j) {
                    t(c, i, j) = (*this)(c, j, i);
                }
            }
        }
        return t;
    }

private:
    GridSpec grid_;
    std::vector<double> entries_;
};

inline double dot(std::span<const double> x, std::span<const double> y)
{
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += x[i] * y[i];
    }
    return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline double inner(const ScalarField& u, const ScalarField& v) { return dot(u.values(), v.values()); }

inline double inner(const VectorField& u, const VectorField& v)
{
    double s = 0.0;
    for (int i = 0; i < u.dim(); ++i) {
        s += inner(u[i], v[i]);
    }
    return s;
}

inline double l2_norm(const ScalarField& u) { return norm2(u.values()); }

inline double l2_norm(const VectorField& u) { return std::sqrt(inner(u, u)); }

}  // namespace homlab
