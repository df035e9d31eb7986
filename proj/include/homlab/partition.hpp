#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <limits>
#include <ostream>
#include <random>
#include <vector>

#include "homlab/error.hpp"

namespace homlab {

using Point = std::array<double, 3>;

struct PartitionCell {
    Point corner{0.0, 0.0, 0.0};
    double side = 0.0;
    double diam = 0.0;  // Euclidean diameter sqrt(d) * side
    double dist = 0.0;  // distance of the closed cube to the origin
    int n_Q = 1;
    int parent = 0;     // index into Partition::parents
};

struct TriadicCube {
    Point corner{0.0, 0.0, 0.0};
    double side = 1.0;
    int level = -1;     // -1 for the central unit cube
    double diam = 0.0;
    double dist = 0.0;
    int n_Q = 1;
};

struct Partition {
    int d = 2;
    double beta = 0.0;
    double half_width = 0.5;
    std::vector<TriadicCube> parents;
    std::vector<PartitionCell> cells;

    double region_volume() const { return std::pow(2.0 * half_width, d); }
};

/// Euclidean distance from the origin to the closed box [lo, lo + side]^d.
inline double box_distance_to_origin(const Point& lo, double side, int d)
{
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double hi = lo[static_cast<std::size_t>(i)] + side;
        const double g = std::max({0.0, lo[static_cast<std::size_t>(i)], -hi});
        s += g * g;
    }
    return std::sqrt(s);
}

/// Unique n with diam/n <= (dist+1)^beta < diam/(n-1).
inline int subdivision_count(double diam, double dist, double beta)
{
    const double target = std::pow(dist + 1.0, beta);
    auto n = static_cast<int>(std::ceil(diam / target));
    // guard the ceiling against round-off at exact multiples
    while (n > 1 && diam / (n - 1) <= target) {
        --n;
    }
    while (diam / n > target) {
        ++n;
    }
    return std::max(n, 1);
}

/// Number of triadic levels K with W = 3^K / 2; rejects other half-widths.
inline int triadic_levels(double half_width)
{
    int K = 0;
    for (double w = 0.5; w <= half_width * (1.0 + 1e-12); w *= 3.0, ++K) {
        if (std::abs(w - half_width) <= 1e-9 * half_width) {
            return K;
        }
    }
    throw InvalidArgument("build_partition: half-width must be 3^K / 2");
}

/// Triadic cubes 3^k([-1/2,1/2)^d + tau) covering [-W, W)^d, each split into n_Q^d subcubes.
inline Partition build_partition(double half_width, double beta, int d)
{
    require(d == 2 || d == 3, "build_partition: d must be 2 or 3");
    require(beta >= 0.0 && beta < 1.0, "build_partition: beta must lie in [0,1)");
    const int K = triadic_levels(half_width);
    Partition part;
    part.d = d;
    part.beta = beta;
    part.half_width = half_width;
    const double sd = std::sqrt(static_cast<double>(d));
    auto add_parent = [&](const Point& corner, double side, int level) {
        TriadicCube q;
        q.corner = corner;
        q.side = side;
        q.level = level;
        q.diam = sd * side;
        q.dist = box_distance_to_origin(corner, side, d);
        q.n_Q = subdivision_count(q.diam, q.dist, beta);
        part.parents.push_back(q);
    };
    add_parent({-0.5, -0.5, d == 3 ? -0.5 : 0.0}, 1.0, -1);
    for (int k = 0; k < K; ++k) {
        const double s = std::pow(3.0, k);
        const int tz = d == 3 ? 1 : 0;
        for (int t0 = -1; t0 <= 1; ++t0) {
            for (int t1 = -1; t1 <= 1; ++t1) {
                for (int t2 = -tz; t2 <= tz; ++t2) {
                    if (t0 == 0 && t1 == 0 && t2 == 0) {
                        continue;
                    }
                    add_parent({s * (t0 - 0.5), s * (t1 - 0.5), d == 3 ? s * (t2 - 0.5) : 0.0}, s, k);
                }
            }
        }
    }
    for (std::size_t p = 0; p < part.parents.size(); ++p) {
        const TriadicCube& q = part.parents[p];
        const int n = q.n_Q;
        const double side = q.side / n;
        const int nz = d == 3 ? n : 1;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < nz; ++k) {
                    PartitionCell c;
                    c.corner = {q.corner[0] + i * side, q.corner[1] + j * side, d == 3 ? q.corner[2] + k * side : 0.0};
                    c.side = side;
                    c.diam = sd * side;
                    c.dist = box_distance_to_origin(c.corner, side, d);
                    c.n_Q = n;
                    c.parent = static_cast<int>(p);
                    part.cells.push_back(c);
                }
            }
        }
    }
    return part;
}

/// Verifies diam D <= (dist D + 1)^beta for every cell and returns the smallest C
/// with (dist D + 1)^beta <= C diam D.
inline double check_refinement(const Partition& part)
{
    double C = 0.0;
    for (const PartitionCell& c : part.cells) {
        const double rhs = std::pow(c.dist + 1.0, part.beta);
        if (c.diam > rhs * (1.0 + 1e-12)) {
            throw std::logic_error("check_refinement: diam(D) exceeds (dist(D)+1)^beta");
        }
        C = std::max(C, rhs / c.diam);
    }
    return C;
}

struct TilingReport {
    double volume_sum = 0.0;
    double region_volume = 0.0;
    std::size_t cells = 0;
    std::size_t samples = 0;
    std::size_t uncovered = 0;
    std::size_t overlapping = 0;

    /// Volume match up to the recursive summation bound (cells + 3) eps.
    bool exact() const
    {
        const double tol = (static_cast<double>(cells) + 3.0) * std::numeric_limits<double>::epsilon();
        return std::abs(volume_sum - region_volume) <= tol * region_volume && uncovered == 0 && overlapping == 0;
    }
};

namespace detail {

// kd-tree over partition cells, with the bounding box of every node.
class CellTree {
public:
    struct Node {
        Point lo, hi;
        std::uint32_t begin = 0, end = 0;  // range in order_
        std::int32_t left = -1, right = -1;
    };

    CellTree(const std::vector<PartitionCell>& cells, int d) : cells_(&cells), d_(d)
    {
        order_.resize(cells.size());
        std::iota(order_.begin(), order_.end(), 0u);
        if (!cells.empty()) {
            build(0, static_cast<std::uint32_t>(cells.size()));
        }
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<std::uint32_t>& order() const { return order_; }
    int d() const { return d_; }

    /// Cells whose half-open cube contains p.
    std::vector<std::uint32_t> containing(const Point& p) const
    {
        std::vector<std::uint32_t> out;
        if (nodes_.empty()) {
            return out;
        }
        std::vector<std::int32_t> stack{0};
        while (!stack.empty()) {
            const Node& n = nodes_[static_cast<std::size_t>(stack.back())];
            stack.pop_back();
            bool inside = true;
            for (int i = 0; i < d_; ++i) {
                const auto iu = static_cast<std::size_t>(i);
                inside = inside && p[iu] >= n.lo[iu] && p[iu] <= n.hi[iu];
            }
            if (!inside) {
                continue;
            }
            if (n.left < 0) {
                for (std::uint32_t k = n.begin; k < n.end; ++k) {
                    const PartitionCell& c = (*cells_)[order_[k]];
                    bool in = true;
                    for (int i = 0; i < d_; ++i) {
                        const auto iu = static_cast<std::size_t>(i);
                        in = in && p[iu] >= c.corner[iu] && p[iu] < c.corner[iu] + c.side;
                    }
                    if (in) {
                        out.push_back(order_[k]);
                    }
                }
            } else {
                stack.push_back(n.left);
                stack.push_back(n.right);
            }
        }
        return out;
    }

private:
    static constexpr std::uint32_t leaf_size = 8;

    std::int32_t build(std::uint32_t begin, std::uint32_t end)
    {
        Node n;
        n.begin = begin;
        n.end = end;
        n.lo = {1e300, 1e300, 1e300};
        n.hi = {-1e300, -1e300, -1e300};
        for (std::uint32_t k = begin; k < end; ++k) {
            const PartitionCell& c = (*cells_)[order_[k]];
            for (int i = 0; i < d_; ++i) {
                const auto iu = static_cast<std::size_t>(i);
                n.lo[iu] = std::min(n.lo[iu], c.corner[iu]);
                n.hi[iu] = std::max(n.hi[iu], c.corner[iu] + c.side);
            }
        }
        const auto id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back(n);
        if (end - begin > leaf_size) {
            int axis = 0;
            for (int i = 1; i < d_; ++i) {
                const auto iu = static_cast<std::size_t>(i);
                const auto au = static_cast<std::size_t>(axis);
                if (n.hi[iu] - n.lo[iu] > n.hi[au] - n.lo[au]) {
                    axis = i;
                }
            }
            const std::uint32_t mid = begin + (end - begin) / 2;
            const auto au = static_cast<std::size_t>(axis);
            std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                             [&](std::uint32_t x, std::uint32_t y) {
                                 const PartitionCell& a = (*cells_)[x];
                                 const PartitionCell& b = (*cells_)[y];
                                 return a.corner[au] + 0.5 * a.side < b.corner[au] + 0.5 * b.side;
                             });
            const std::int32_t l = build(begin, mid);
            const std::int32_t r = build(mid, end);
            nodes_[static_cast<std::size_t>(id)].left = l;
            nodes_[static_cast<std::size_t>(id)].right = r;
        }
        return id;
    }

    const std::vector<PartitionCell>* cells_;
    int d_;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> order_;
};

inline double box_gap(const Point& alo, const Point& ahi, const Point& blo, const Point& bhi, int d)
{
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        const double g = std::max({0.0, blo[iu] - ahi[iu], alo[iu] - bhi[iu]});
        s += g * g;
    }
    return std::sqrt(s);
}

// Largest possible gap between box a and any box contained in b.
inline double box_gap_max(const Point& alo, const Point& ahi, const Point& blo, const Point& bhi, int d)
{
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        const double g = std::max({0.0, bhi[iu] - ahi[iu], alo[iu] - blo[iu]});
        s += g * g;
    }
    return std::sqrt(s);
}

}  // namespace detail

/// Volume sum plus point-membership sampling: every sample must lie in exactly one cell.
inline TilingReport check_tiling(const Partition& part, std::size_t samples = 20000, std::uint64_t seed = 1)
{
    TilingReport rep;
    rep.region_volume = part.region_volume();
    rep.cells = part.cells.size();
    for (const PartitionCell& c : part.cells) {
        rep.volume_sum += std::pow(c.side, part.d);
    }
    const detail::CellTree tree(part.cells, part.d);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-part.half_width, part.half_width);
    rep.samples = samples;
    for (std::size_t s = 0; s < samples; ++s) {
        Point p{0.0, 0.0, 0.0};
        for (int i = 0; i < part.d; ++i) {
            p[static_cast<std::size_t>(i)] = u(rng);
        }
        const std::size_t hits = tree.containing(p).size();
        rep.uncovered += hits == 0 ? 1 : 0;
        rep.overlapping += hits > 1 ? 1 : 0;
    }
    return rep;
}

struct InteractionSumReport {
    double value = 0.0;          // sup_D sum_D' (1 + dist(D, D'))^-gamma
    std::size_t argmax = 0;
    std::size_t exact_evaluations = 0;
};

namespace detail {

inline double node_diagonal(const CellTree::Node& n, int d)
{
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double w = n.hi[static_cast<std::size_t>(i)] - n.lo[static_cast<std::size_t>(i)];
        s += w * w;
    }
    return std::sqrt(s);
}

inline void cell_box(const PartitionCell& c, int d, Point& lo, Point& hi)
{
    lo = c.corner;
    hi = c.corner;
    for (int i = 0; i < d; ++i) {
        hi[static_cast<std::size_t>(i)] += c.side;
    }
}

}  // namespace detail

/// Exact supremum over D of sum_{D'} (1 + dist(D,D'))^-gamma. The partition is
/// invariant under coordinate reflections and permutations, so only cells whose
/// center has sorted nonnegative coordinates are candidates. A dual-tree pass over
/// candidates and sources gives an upper bound for every candidate (well-separated
/// node pairs contribute count * Gamma(gap)); exact sums are then evaluated in
/// order of decreasing bound until the bound drops below the best exact value.
inline InteractionSumReport interaction_sum(const Partition& part, double gamma, double theta = 0.5)
{
    require(gamma > part.d * (1.0 - part.beta), "interaction_sum: need gamma > d(1 - beta)");
    InteractionSumReport rep;
    if (part.cells.empty()) {
        return rep;
    }
    const int d = part.d;
    auto Gamma = [gamma](double r) { return std::pow(1.0 + r, -gamma); };

    std::vector<PartitionCell> targets;
    std::vector<std::size_t> target_index;
    for (std::size_t k = 0; k < part.cells.size(); ++k) {
        const PartitionCell& c = part.cells[k];
        bool fundamental = true;
        double prev = 1e300;
        for (int i = 0; i < d; ++i) {
            const double x = c.corner[static_cast<std::size_t>(i)] + 0.5 * c.side;
            const double tol = 1e-9 * c.side;
            fundamental = fundamental && x >= -tol && x <= prev + tol;
            prev = x;
        }
        if (fundamental) {
            targets.push_back(c);
            target_index.push_back(k);
        }
    }
    const detail::CellTree ttree(targets, d);
    const detail::CellTree stree(part.cells, d);
    const auto& tn = ttree.nodes();
    const auto& sn = stree.nodes();
    const auto& torder = ttree.order();
    const auto& sorder = stree.order();
    std::vector<double> tdiag(tn.size()), sdiag(sn.size());
    for (std::size_t k = 0; k < tn.size(); ++k) {
        tdiag[k] = detail::node_diagonal(tn[k], d);
    }
    for (std::size_t k = 0; k < sn.size(); ++k) {
        sdiag[k] = detail::node_diagonal(sn[k], d);
    }

    std::vector<double> far(tn.size(), 0.0);
    std::vector<double> near(targets.size(), 0.0);
    std::vector<std::pair<std::int32_t, std::int32_t>> stack{{0, 0}};
    Point alo, ahi, blo, bhi;
    while (!stack.empty()) {
        const auto [gi, si] = stack.back();
        stack.pop_back();
        const auto gu = static_cast<std::size_t>(gi), su = static_cast<std::size_t>(si);
        const auto& G = tn[gu];
        const auto& S = sn[su];
        const double gap = detail::box_gap(G.lo, G.hi, S.lo, S.hi, d);
        if (tdiag[gu] + sdiag[su] <= theta * (1.0 + gap)) {
            far[gu] += static_cast<double>(S.end - S.begin) * Gamma(gap);
            continue;
        }
        const bool gleaf = G.left < 0, sleaf = S.left < 0;
        if (gleaf && sleaf) {
            for (std::uint32_t a = G.begin; a < G.end; ++a) {
                detail::cell_box(targets[torder[a]], d, alo, ahi);
                double s = 0.0;
                for (std::uint32_t b = S.begin; b < S.end; ++b) {
                    detail::cell_box(part.cells[sorder[b]], d, blo, bhi);
                    s += Gamma(detail::box_gap(alo, ahi, blo, bhi, d));
                }
                near[torder[a]] += s;
            }
        } else if (sleaf || (!gleaf && tdiag[gu] >= sdiag[su])) {
            stack.emplace_back(G.left, si);
            stack.emplace_back(G.right, si);
        } else {
            stack.emplace_back(gi, S.left);
            stack.emplace_back(gi, S.right);
        }
    }
    // push shared far-field bounds down to the candidates
    std::vector<double> upper(targets.size(), 0.0);
    std::vector<std::pair<std::int32_t, double>> down{{0, 0.0}};
    while (!down.empty()) {
        const auto [ni, acc] = down.back();
        down.pop_back();
        const auto& n = tn[static_cast<std::size_t>(ni)];
        const double total = acc + far[static_cast<std::size_t>(ni)];
        if (n.left < 0) {
            for (std::uint32_t k = n.begin; k < n.end; ++k) {
                upper[torder[k]] = near[torder[k]] + total;
            }
        } else {
            down.emplace_back(n.left, total);
            down.emplace_back(n.right, total);
        }
    }
    std::vector<std::size_t> visit(targets.size());
    std::iota(visit.begin(), visit.end(), std::size_t{0});
    std::sort(visit.begin(), visit.end(), [&](std::size_t x, std::size_t y) {
        return upper[x] != upper[y] ? upper[x] > upper[y] : x < y;
    });
    double best = -1.0;
    for (std::size_t t : visit) {
        if (upper[t] * (1.0 + 1e-12) < best) {
            break;
        }
        detail::cell_box(targets[t], d, alo, ahi);
        double s = 0.0;
        for (const PartitionCell& c : part.cells) {
            detail::cell_box(c, d, blo, bhi);
            s += Gamma(detail::box_gap(alo, ahi, blo, bhi, d));
        }
        ++rep.exact_evaluations;
        if (s > best) {
            best = s;
            rep.argmax = target_index[t];
        }
    }
    rep.value = best;
    return rep;
}

inline void write_partition_csv(std::ostream& os, const Partition& part)
{
    os << "corner_x,corner_y,corner_z,side,diam,dist,n_Q\n";
    os.precision(17);
    for (const PartitionCell& c : part.cells) {
        os << c.corner[0] << ',' << c.corner[1] << ',' << c.corner[2] << ',' << c.side << ',' << c.diam << ','
           << c.dist << ',' << c.n_Q << '\n';
    }
}

}  // namespace homlab
