#pragma once

/**
 * @file energy.hpp
 * @brief Assembly-free Rayleigh-Ritz energy J(u) = 1/2 int nu |grad u|^2 - int f u,
 *        its nodal gradient, and the L2 / energy norms.
 *
 * nu and f are nodal fields interpolated to the Gauss points with the same
 * multilinear basis as u, so with the 2-point rule every quantity here is an
 * exact quadratic form in the nodal values.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neufe/grid.hpp"
#include "neufe/quadrature.hpp"

namespace neufe {

enum class ProblemKind { mms, kl };

struct EnergyProblem {
    ProblemKind kind = ProblemKind::mms;
    Grid grid;
    BoundaryMask mask;
    std::optional<NodalField> nu;  ///< absent means nu = 1
    std::optional<NodalField> f;   ///< absent means f = 0
    QuadratureTable table;
};

/// u = sin(pi x) sin(pi y) [sin(pi z)], the manufactured solution.
inline double mms_exact(const Point& x, int ndim = 2) {
    double v = 1.0;
    for (int k = 0; k < ndim; ++k) v *= std::sin(std::numbers::pi * x[static_cast<std::size_t>(k)]);
    return v;
}

inline EnergyProblem make_mms_problem(const Grid& grid) {
    EnergyProblem p;
    p.kind = ProblemKind::mms;
    p.grid = grid;
    p.mask = make_boundary_mask(grid, BoundaryPreset::mms);
    const int nd = grid.ndim();
    const double scale = nd * std::numbers::pi * std::numbers::pi;
    p.f = interpolate(grid, [&](const Point& x) { return scale * mms_exact(x, nd); });
    p.table = build_table(grid.ndim(), grid.h());
    return p;
}

inline EnergyProblem make_kl_problem(NodalField nu) {
    for (double v : nu.values()) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("kl problem: diffusivity must be finite and strictly positive");
        }
    }
    EnergyProblem p;
    p.kind = ProblemKind::kl;
    p.grid = nu.grid();
    p.mask = make_boundary_mask(p.grid, BoundaryPreset::kl);
    p.table = build_table(p.grid.ndim(), p.grid.h());
    p.nu = std::move(nu);
    return p;
}

namespace detail {

inline void check_same_grid(const EnergyProblem& p, const NodalField& u) {
    if (!(p.grid == u.grid())) throw std::invalid_argument("energy: field grid does not match problem grid");
}

/// One pass over all elements. Returns J(u) (or the pure stiffness energy when
/// with_load is false) and, if grad is non-empty, accumulates dJ/dU into it.
template <int Dim>
double energy_pass_dim(const EnergyProblem& p, std::span<const double> u, bool with_load, std::span<double> grad) {
    constexpr int nn = 1 << Dim;
    constexpr int ng = 1 << Dim;
    const QuadratureTable& t = p.table;
    const ElementLayout layout(p.grid);
    const auto& off = layout.offsets();
    const double wj = t.jacobian_det;
    const bool have_nu = p.nu.has_value();
    const bool have_f = with_load && p.f.has_value();
    const bool want_grad = !grad.empty();

    double N[ng][nn];
    double G[ng][nn][Dim];
    double W[ng];
    for (int g = 0; g < ng; ++g) {
        W[g] = t.weights[static_cast<std::size_t>(g)] * wj;
        for (int i = 0; i < nn; ++i) {
            N[g][i] = t.N(g, i);
            for (int k = 0; k < Dim; ++k) G[g][i][k] = t.dN_phys(g, i, k);
        }
    }

    const int nel = p.grid.nel_per_axis();
    const std::size_t sy = p.grid.stride(1);
    const std::size_t sz = Dim == 3 ? p.grid.stride(2) : 0;
    const int nz = Dim == 3 ? nel : 1;
    double total = 0.0;
    double ue[nn], nue[nn], fe[nn], ge[nn];
    for (int ez = 0; ez < nz; ++ez) {
        for (int ey = 0; ey < nel; ++ey) {
            double row_total = 0.0;
            for (int ex = 0; ex < nel; ++ex) {
                const std::size_t o = static_cast<std::size_t>(ex) + static_cast<std::size_t>(ey) * sy +
                                      static_cast<std::size_t>(ez) * sz;
                for (int i = 0; i < nn; ++i) {
                    const std::size_t idx = o + off[static_cast<std::size_t>(i)];
                    ue[i] = u[idx];
                    nue[i] = have_nu ? (*p.nu)[idx] : 1.0;
                    fe[i] = have_f ? (*p.f)[idx] : 0.0;
                    ge[i] = 0.0;
                }
                double elem = 0.0;
                for (int g = 0; g < ng; ++g) {
                    double nu_g = 0.0, f_g = 0.0, u_g = 0.0;
                    double du[Dim] = {};
                    for (int i = 0; i < nn; ++i) {
                        nu_g += N[g][i] * nue[i];
                        f_g += N[g][i] * fe[i];
                        u_g += N[g][i] * ue[i];
                        for (int k = 0; k < Dim; ++k) du[k] += G[g][i][k] * ue[i];
                    }
                    double grad2 = 0.0;
                    for (int k = 0; k < Dim; ++k) grad2 += du[k] * du[k];
                    elem += W[g] * (0.5 * nu_g * grad2 - f_g * u_g);
                    if (want_grad) {
                        for (int i = 0; i < nn; ++i) {
                            double dot = 0.0;
                            for (int k = 0; k < Dim; ++k) dot += G[g][i][k] * du[k];
                            ge[i] += W[g] * (nu_g * dot - f_g * N[g][i]);
                        }
                    }
                }
                row_total += elem;
                if (want_grad) {
                    for (int i = 0; i < nn; ++i) grad[o + off[static_cast<std::size_t>(i)]] += ge[i];
                }
            }
            total += row_total;
        }
    }
    return total;
}

inline double energy_pass(const EnergyProblem& p, std::span<const double> u, bool with_load, std::span<double> grad) {
    return p.grid.ndim() == 3 ? energy_pass_dim<3>(p, u, with_load, grad) : energy_pass_dim<2>(p, u, with_load, grad);
}

}  // namespace detail

inline double energy(const EnergyProblem& problem, const NodalField& u) {
    detail::check_same_grid(problem, u);
    const double j = detail::energy_pass(problem, u.values(), true, {});
    if (!std::isfinite(j)) throw NumericalError("energy: non-finite value (invalid input field)");
    return j;
}

/// dJ/dU with Dirichlet rows zeroed.
inline NodalField energy_gradient(const EnergyProblem& problem, const NodalField& u) {
    detail::check_same_grid(problem, u);
    NodalField g(problem.grid);
    const double j = detail::energy_pass(problem, u.values(), true, g.values());
    if (!std::isfinite(j)) throw NumericalError("energy_gradient: non-finite value (invalid input field)");
    zero_dirichlet(g.values(), problem.mask);
    return g;
}

/// J(u) and its masked gradient in a single pass.
inline double energy_and_gradient(const EnergyProblem& problem, const NodalField& u, NodalField& grad) {
    detail::check_same_grid(problem, u);
    if (!(grad.grid() == problem.grid)) grad = NodalField(problem.grid);
    std::fill(grad.data().begin(), grad.data().end(), 0.0);
    const double j = detail::energy_pass(problem, u.values(), true, grad.values());
    if (!std::isfinite(j)) throw NumericalError("energy: non-finite value (invalid input field)");
    zero_dirichlet(grad.values(), problem.mask);
    return j;
}

inline double l2_norm(const NodalField& u) {
    const QuadratureTable t = build_table(u.grid().ndim(), u.grid().h());
    const GaussValues gv = eval_at_gauss(u, t);
    double acc = 0.0;
    for (std::size_t e = 0; e < gv.n_el; ++e) {
        for (int g = 0; g < gv.n_gp; ++g) acc += t.weights[static_cast<std::size_t>(g)] * gv(e, g) * gv(e, g);
    }
    return std::sqrt(acc * t.jacobian_det);
}

/// L2 distance to an analytic function evaluated at the Gauss points.
template <typename Fn>
double l2_error(const NodalField& u, Fn&& exact) {
    const Grid& grid = u.grid();
    const QuadratureTable t = build_table(grid.ndim(), grid.h());
    const ElementLayout layout(grid);
    const GaussValues gv = eval_at_gauss(u, t);
    double acc = 0.0;
    for (std::size_t e = 0; e < gv.n_el; ++e) {
        for (int g = 0; g < gv.n_gp; ++g) {
            const double d = gv(e, g) - exact(layout.gauss_point(e, t, g));
            acc += t.weights[static_cast<std::size_t>(g)] * d * d;
        }
    }
    return std::sqrt(acc * t.jacobian_det);
}

/// sqrt(int nu |grad v|^2).
inline double energy_norm(const EnergyProblem& problem, const NodalField& v) {
    detail::check_same_grid(problem, v);
    const double b = 2.0 * detail::energy_pass(problem, v.values(), false, {});
    return std::sqrt(std::max(b, 0.0));
}

/// Root-mean over samples of the squared per-sample energy norms.
inline double parametric_energy_norm(std::span<const EnergyProblem> problems, std::span<const NodalField> vs) {
    if (problems.size() != vs.size() || problems.empty()) {
        throw std::invalid_argument("parametric_energy_norm: need equal, non-empty lists");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        const double n = energy_norm(problems[i], vs[i]);
        acc += n * n;
    }
    return std::sqrt(acc / static_cast<double>(problems.size()));
}

inline double parametric_loss(std::span<const EnergyProblem> problems, std::span<const NodalField> us) {
    if (problems.size() != us.size()) {
        throw std::invalid_argument("parametric_loss: " + std::to_string(problems.size()) + " problems but " +
                                    std::to_string(us.size()) + " fields");
    }
    if (problems.empty()) throw std::invalid_argument("parametric_loss: empty sample list");
    double acc = 0.0;
    for (std::size_t i = 0; i < problems.size(); ++i) acc += energy(problems[i], us[i]);
    return acc / static_cast<double>(problems.size());
}

}  // namespace neufe
