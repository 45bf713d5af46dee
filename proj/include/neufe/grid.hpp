#pragma once

/**
 * @file grid.hpp
 * @brief Uniform structured grid over the unit square/cube, nodal fields and
 *        boundary masks.
 *
 * Nodes are stored row-major with x fastest:
 *   index = i + j * n + k * n * n,   n = nel + 1
 * and the coordinate of node index i along an axis is i * h.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace neufe {

/// Raised when a computation produces non-finite values or fails to converge.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Point = std::array<double, 3>;
using NodeIndex = std::array<int, 3>;

class Grid {
public:
    Grid() = default;

    int ndim() const { return ndim_; }
    int nel_per_axis() const { return nel_; }
    int nodes_per_axis() const { return nel_ + 1; }
    double h() const { return 1.0 / static_cast<double>(nel_); }

    std::size_t node_count() const {
        std::size_t n = 1;
        for (int d = 0; d < ndim_; ++d) n *= static_cast<std::size_t>(nodes_per_axis());
        return n;
    }

    std::size_t element_count() const {
        std::size_t n = 1;
        for (int d = 0; d < ndim_; ++d) n *= static_cast<std::size_t>(nel_);
        return n;
    }

    /// Stride of axis k in the linear node index.
    std::size_t stride(int axis) const {
        std::size_t s = 1;
        for (int d = 0; d < axis; ++d) s *= static_cast<std::size_t>(nodes_per_axis());
        return s;
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    friend Grid make_grid(int ndim, int nel_per_axis);
    Grid(int ndim, int nel) : ndim_(ndim), nel_(nel) {}

    int ndim_ = 2;
    int nel_ = 2;
};

inline Grid make_grid(int ndim, int nel_per_axis) {
    if (ndim != 2 && ndim != 3) {
        throw std::invalid_argument("grid: ndim must be 2 or 3, got " + std::to_string(ndim));
    }
    if (nel_per_axis < 2) {
        throw std::invalid_argument("grid: need at least 2 elements per axis, got " +
                                    std::to_string(nel_per_axis));
    }
    return Grid(ndim, nel_per_axis);
}

/// Decode a linear node index into per-axis integer indices (unused axes are 0).
inline NodeIndex node_ijk(const Grid& grid, std::size_t linear_index) {
    if (linear_index >= grid.node_count()) {
        throw std::out_of_range("grid: node index " + std::to_string(linear_index) +
                                " out of range");
    }
    const auto n = static_cast<std::size_t>(grid.nodes_per_axis());
    NodeIndex ijk{0, 0, 0};
    for (int d = 0; d < grid.ndim(); ++d) {
        ijk[static_cast<std::size_t>(d)] = static_cast<int>(linear_index % n);
        linear_index /= n;
    }
    return ijk;
}

inline std::size_t linear_index(const Grid& grid, const NodeIndex& ijk) {
    const int n = grid.nodes_per_axis();
    std::size_t idx = 0;
    for (int d = grid.ndim() - 1; d >= 0; --d) {
        const int v = ijk[static_cast<std::size_t>(d)];
        if (v < 0 || v >= n) throw std::out_of_range("grid: node coordinate index out of range");
        idx = idx * static_cast<std::size_t>(n) + static_cast<std::size_t>(v);
    }
    return idx;
}

/// Physical coordinate of a node; components beyond ndim are 0.
inline Point node_coord(const Grid& grid, std::size_t linear_index) {
    const NodeIndex ijk = node_ijk(grid, linear_index);
    const double h = grid.h();
    Point x{0.0, 0.0, 0.0};
    for (int d = 0; d < grid.ndim(); ++d) {
        const auto k = static_cast<std::size_t>(d);
        // the last node sits exactly on 1
        x[k] = ijk[k] == grid.nel_per_axis() ? 1.0 : ijk[k] * h;
    }
    return x;
}

/// One 64-bit value per grid node.
class NodalField {
public:
    NodalField() = default;
    explicit NodalField(const Grid& grid, double fill = 0.0)
        : grid_(grid), values_(grid.node_count(), fill) {}
    NodalField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.node_count()) {
            throw std::invalid_argument("field: value count does not match grid node count");
        }
    }

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& data() { return values_; }
    const std::vector<double>& data() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool all_finite() const {
        for (double v : values_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

private:
    Grid grid_;
    std::vector<double> values_;
};

/// Nodal interpolant of a point function.
template <typename Fn>
NodalField interpolate(const Grid& grid, Fn&& fn) {
    NodalField out(grid);
    for (std::size_t i = 0; i < grid.node_count(); ++i) out[i] = fn(node_coord(grid, i));
    return out;
}

enum class NodeKind : std::uint8_t { interior, dirichlet, neumann_zero };

enum class BoundaryPreset { mms, kl };

class BoundaryMask {
public:
    BoundaryMask() = default;
    BoundaryMask(const Grid& grid, std::vector<NodeKind> kinds, std::vector<double> values)
        : grid_(grid), kinds_(std::move(kinds)), values_(std::move(values)) {}

    const Grid& grid() const { return grid_; }
    NodeKind kind(std::size_t i) const { return kinds_[i]; }
    bool is_dirichlet(std::size_t i) const { return kinds_[i] == NodeKind::dirichlet; }
    /// Prescribed value at a Dirichlet node (0 elsewhere).
    double dirichlet_value(std::size_t i) const { return values_[i]; }
    std::span<const NodeKind> kinds() const { return kinds_; }

    std::size_t count(NodeKind k) const {
        std::size_t n = 0;
        for (auto v : kinds_) n += v == k ? 1 : 0;
        return n;
    }

private:
    Grid grid_;
    std::vector<NodeKind> kinds_;
    std::vector<double> values_;
};

inline BoundaryMask make_boundary_mask(const Grid& grid, BoundaryPreset problem) {
    const std::size_t n = grid.node_count();
    const int last = grid.nel_per_axis();
    std::vector<NodeKind> kinds(n, NodeKind::interior);
    std::vector<double> values(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const NodeIndex ijk = node_ijk(grid, i);
        bool on_boundary = false;
        for (int d = 0; d < grid.ndim(); ++d) {
            const int v = ijk[static_cast<std::size_t>(d)];
            on_boundary = on_boundary || v == 0 || v == last;
        }
        if (!on_boundary) continue;
        if (problem == BoundaryPreset::mms) {
            kinds[i] = NodeKind::dirichlet;
        } else if (ijk[0] == 0) {
            kinds[i] = NodeKind::dirichlet;
            values[i] = 1.0;
        } else if (ijk[0] == last) {
            kinds[i] = NodeKind::dirichlet;
        } else {
            kinds[i] = NodeKind::neumann_zero;
        }
    }
    return BoundaryMask(grid, std::move(kinds), std::move(values));
}

/// Overwrite Dirichlet nodes with their prescribed values.
inline NodalField apply_dirichlet(NodalField field, const BoundaryMask& mask) {
    if (!(field.grid() == mask.grid())) {
        throw std::invalid_argument("apply_dirichlet: field and mask live on different grids");
    }
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (mask.is_dirichlet(i)) field[i] = mask.dirichlet_value(i);
    }
    return field;
}

/// Zero the Dirichlet components in place (derivative of the overwrite).
inline void zero_dirichlet(std::span<double> values, const BoundaryMask& mask) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (mask.is_dirichlet(i)) values[i] = 0.0;
    }
}

/// Multilinear interpolation of a nodal field at an arbitrary point in [0,1]^ndim.
inline double sample_field(const NodalField& field, const Point& x) {
    const Grid& g = field.grid();
    const int nel = g.nel_per_axis();
    std::array<int, 3> base{0, 0, 0};
    std::array<double, 3> t{0.0, 0.0, 0.0};
    for (int d = 0; d < g.ndim(); ++d) {
        const auto k = static_cast<std::size_t>(d);
        const double s = std::clamp(x[k], 0.0, 1.0) * nel;
        int e = static_cast<int>(std::floor(s));
        e = std::clamp(e, 0, nel - 1);
        base[k] = e;
        t[k] = s - e;
    }
    double acc = 0.0;
    const int corners = 1 << g.ndim();
    for (int c = 0; c < corners; ++c) {
        double w = 1.0;
        NodeIndex ijk{0, 0, 0};
        for (int d = 0; d < g.ndim(); ++d) {
            const auto k = static_cast<std::size_t>(d);
            const int bit = (c >> d) & 1;
            ijk[k] = base[k] + bit;
            w *= bit ? t[k] : 1.0 - t[k];
        }
        if (w != 0.0) acc += w * field[linear_index(g, ijk)];
    }
    return acc;
}

}  // namespace neufe
