#pragma once

/**
 * @file quadrature.hpp
 * @brief Multilinear reference-element basis with 2-point-per-axis Gauss rule.
 *
 * Local element nodes and Gauss points are both ordered lexicographically with
 * x fastest: local index i has bits (bx, by[, bz]) and sits at reference
 * coordinate (2b - 1) on [-1, 1]. Gauss point g with bits (b...) sits at
 * (2b - 1) / sqrt(3).
 *
 * Evaluating a nodal field at Gauss point g of every element is a fixed
 * 2^ndim-tap stencil applied at each element origin, so the tables below are
 * exactly the convolution kernels of the assembly-free formulation.
 */

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "neufe/grid.hpp"

namespace neufe {

inline constexpr int kMaxElementNodes = 8;

struct QuadratureTable {
    int ndim = 2;
    int n_gp = 4;
    int n_nodes = 4;
    double h = 0.5;
    /// |J| of the map from reference to physical element: (h/2)^ndim.
    double jacobian_det = 0.0;
    /// Reference-to-physical derivative scale 2/h.
    double grad_scale = 0.0;
    std::vector<std::array<double, 3>> points;  // [g] reference coordinates
    std::vector<double> weights;                // [g]
    std::vector<double> basis;                  // [g * n_nodes + i]
    std::vector<double> ref_grad;               // [(g * n_nodes + i) * ndim + k]

    double N(int g, int i) const { return basis[static_cast<std::size_t>(g * n_nodes + i)]; }
    double dN(int g, int i, int k) const {
        return ref_grad[static_cast<std::size_t>((g * n_nodes + i) * ndim + k)];
    }
    /// Physical gradient of local basis i at Gauss point g along axis k.
    double dN_phys(int g, int i, int k) const { return grad_scale * dN(g, i, k); }
};

inline QuadratureTable build_table(int ndim, double h) {
    if (ndim != 2 && ndim != 3) throw std::invalid_argument("quadrature: ndim must be 2 or 3");
    if (!(h > 0.0)) throw std::invalid_argument("quadrature: element size must be positive");

    QuadratureTable t;
    t.ndim = ndim;
    t.n_gp = 1 << ndim;
    t.n_nodes = 1 << ndim;
    t.h = h;
    t.jacobian_det = std::pow(h / 2.0, ndim);
    t.grad_scale = 2.0 / h;

    const double gp = 1.0 / std::sqrt(3.0);
    t.points.resize(static_cast<std::size_t>(t.n_gp));
    t.weights.assign(static_cast<std::size_t>(t.n_gp), 1.0);
    t.basis.resize(static_cast<std::size_t>(t.n_gp * t.n_nodes));
    t.ref_grad.resize(static_cast<std::size_t>(t.n_gp * t.n_nodes * ndim));

    for (int g = 0; g < t.n_gp; ++g) {
        auto& xi = t.points[static_cast<std::size_t>(g)];
        xi = {0.0, 0.0, 0.0};
        for (int k = 0; k < ndim; ++k) xi[static_cast<std::size_t>(k)] = ((g >> k) & 1) ? gp : -gp;

        for (int i = 0; i < t.n_nodes; ++i) {
            std::array<double, 3> factor{};
            std::array<double, 3> dfactor{};
            for (int k = 0; k < ndim; ++k) {
                const double s = ((i >> k) & 1) ? 1.0 : -1.0;
                factor[static_cast<std::size_t>(k)] = 0.5 * (1.0 + s * xi[static_cast<std::size_t>(k)]);
                dfactor[static_cast<std::size_t>(k)] = 0.5 * s;
            }
            double n = 1.0;
            for (int k = 0; k < ndim; ++k) n *= factor[static_cast<std::size_t>(k)];
            t.basis[static_cast<std::size_t>(g * t.n_nodes + i)] = n;
            for (int k = 0; k < ndim; ++k) {
                double d = dfactor[static_cast<std::size_t>(k)];
                for (int m = 0; m < ndim; ++m) {
                    if (m != k) d *= factor[static_cast<std::size_t>(m)];
                }
                t.ref_grad[static_cast<std::size_t>((g * t.n_nodes + i) * ndim + k)] = d;
            }
        }
    }
    return t;
}

/// Node bookkeeping for the elements of a grid.
class ElementLayout {
public:
    explicit ElementLayout(const Grid& grid) : grid_(grid) {
        const int n_local = 1 << grid.ndim();
        for (int i = 0; i < n_local; ++i) {
            std::size_t off = 0;
            for (int k = 0; k < grid.ndim(); ++k) {
                if ((i >> k) & 1) off += grid.stride(k);
            }
            offsets_[static_cast<std::size_t>(i)] = off;
        }
    }

    const Grid& grid() const { return grid_; }
    std::size_t count() const { return grid_.element_count(); }
    int nodes_per_element() const { return 1 << grid_.ndim(); }

    /// Linear node index of the lowest corner of element e (x fastest).
    std::size_t origin(std::size_t e) const {
        const auto nel = static_cast<std::size_t>(grid_.nel_per_axis());
        std::size_t idx = 0;
        std::size_t rem = e;
        for (int k = 0; k < grid_.ndim(); ++k) {
            idx += (rem % nel) * grid_.stride(k);
            rem /= nel;
        }
        return idx;
    }

    std::size_t node(std::size_t e, int local) const {
        return origin(e) + offsets_[static_cast<std::size_t>(local)];
    }

    const std::array<std::size_t, kMaxElementNodes>& offsets() const { return offsets_; }

    /// Physical coordinates of Gauss point g of element e.
    Point gauss_point(std::size_t e, const QuadratureTable& t, int g) const {
        const Point o = node_coord(grid_, origin(e));
        Point x{0.0, 0.0, 0.0};
        for (int k = 0; k < grid_.ndim(); ++k) {
            const auto kk = static_cast<std::size_t>(k);
            x[kk] = o[kk] + 0.5 * t.h * (1.0 + t.points[static_cast<std::size_t>(g)][kk]);
        }
        return x;
    }

private:
    Grid grid_;
    std::array<std::size_t, kMaxElementNodes> offsets_{};
};

/// Values of a quantity at every Gauss point of every element: [e * n_gp + g].
struct GaussValues {
    std::size_t n_el = 0;
    int n_gp = 0;
    std::vector<double> values;
    double operator()(std::size_t e, int g) const {
        return values[e * static_cast<std::size_t>(n_gp) + static_cast<std::size_t>(g)];
    }
};

/// Gradients at every Gauss point: [(e * n_gp + g) * ndim + k].
struct GaussGradients {
    std::size_t n_el = 0;
    int n_gp = 0;
    int ndim = 0;
    std::vector<double> values;
    double operator()(std::size_t e, int g, int k) const {
        return values[(e * static_cast<std::size_t>(n_gp) + static_cast<std::size_t>(g)) *
                          static_cast<std::size_t>(ndim) +
                      static_cast<std::size_t>(k)];
    }
};

namespace detail {
inline void check_compatible(const NodalField& field, const QuadratureTable& table) {
    if (field.grid().ndim() != table.ndim) {
        throw std::invalid_argument("quadrature: field dimension does not match table");
    }
    if (std::abs(field.grid().h() - table.h) > 1e-14 * table.h) {
        throw std::invalid_argument("quadrature: field grid spacing does not match table");
    }
}
}  // namespace detail

inline GaussValues eval_at_gauss(const NodalField& field, const QuadratureTable& table) {
    detail::check_compatible(field, table);
    const ElementLayout layout(field.grid());
    GaussValues out;
    out.n_el = layout.count();
    out.n_gp = table.n_gp;
    out.values.assign(out.n_el * static_cast<std::size_t>(table.n_gp), 0.0);
    const auto& off = layout.offsets();
    for (std::size_t e = 0; e < out.n_el; ++e) {
        const std::size_t o = layout.origin(e);
        for (int g = 0; g < table.n_gp; ++g) {
            double v = 0.0;
            for (int i = 0; i < table.n_nodes; ++i) v += table.N(g, i) * field[o + off[static_cast<std::size_t>(i)]];
            out.values[e * static_cast<std::size_t>(table.n_gp) + static_cast<std::size_t>(g)] = v;
        }
    }
    return out;
}

inline GaussGradients grad_at_gauss(const NodalField& field, const QuadratureTable& table) {
    detail::check_compatible(field, table);
    const ElementLayout layout(field.grid());
    GaussGradients out;
    out.n_el = layout.count();
    out.n_gp = table.n_gp;
    out.ndim = table.ndim;
    out.values.assign(out.n_el * static_cast<std::size_t>(table.n_gp * table.ndim), 0.0);
    const auto& off = layout.offsets();
    for (std::size_t e = 0; e < out.n_el; ++e) {
        const std::size_t o = layout.origin(e);
        for (int g = 0; g < table.n_gp; ++g) {
            for (int k = 0; k < table.ndim; ++k) {
                double v = 0.0;
                for (int i = 0; i < table.n_nodes; ++i) {
                    v += table.dN(g, i, k) * field[o + off[static_cast<std::size_t>(i)]];
                }
                out.values[(e * static_cast<std::size_t>(table.n_gp) + static_cast<std::size_t>(g)) *
                               static_cast<std::size_t>(table.ndim) +
                           static_cast<std::size_t>(k)] = table.grad_scale * v;
            }
        }
    }
    return out;
}

}  // namespace neufe
