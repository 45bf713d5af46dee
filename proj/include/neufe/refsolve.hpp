#pragma once

/**
 * @file refsolve.hpp
 * @brief Matrix-free reference FEM solver: stiffness action by element-loop
 *        scatter, Dirichlet elimination with lifting, Jacobi-preconditioned CG.
 *
 * Vectors are full nodal fields; Dirichlet entries of the unknown are kept at
 * zero and the operator zeroes Dirichlet rows, so the CG iteration lives on
 * the free nodes only.
 */

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "neufe/energy.hpp"
#include "neufe/grid.hpp"

namespace neufe {

class LinearSystem {
public:
    explicit LinearSystem(EnergyProblem problem) : problem_(std::move(problem)) {
        if (problem_.nu) {
            for (double v : problem_.nu->values()) {
                if (!(v > 0.0)) throw std::invalid_argument("refsolve: diffusivity must be strictly positive");
            }
        }
        build_rhs();
        build_diagonal();
    }

    const EnergyProblem& problem() const { return problem_; }
    const NodalField& rhs() const { return rhs_; }
    const NodalField& diagonal() const { return diag_; }

    /// K v on free rows; Dirichlet entries of v are treated as zero.
    NodalField apply(const NodalField& v) const {
        NodalField masked = v;
        zero_dirichlet(masked.values(), problem_.mask);
        NodalField out(problem_.grid);
        detail::energy_pass(problem_, masked.values(), false, out.values());
        zero_dirichlet(out.values(), problem_.mask);
        return out;
    }

    double dot(const NodalField& a, const NodalField& b) const {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }

private:
    void build_rhs() {
        // F = int f phi_i - K g on free rows, g = Dirichlet lifting
        NodalField lift(problem_.grid);
        for (std::size_t i = 0; i < lift.size(); ++i) {
            if (problem_.mask.is_dirichlet(i)) lift[i] = problem_.mask.dirichlet_value(i);
        }
        NodalField grad(problem_.grid);
        detail::energy_pass(problem_, lift.values(), true, grad.values());
        rhs_ = NodalField(problem_.grid);
        for (std::size_t i = 0; i < rhs_.size(); ++i) rhs_[i] = problem_.mask.is_dirichlet(i) ? 0.0 : -grad[i];
    }

    void build_diagonal() {
        const QuadratureTable& t = problem_.table;
        const ElementLayout layout(problem_.grid);
        diag_ = NodalField(problem_.grid);
        for (std::size_t e = 0; e < layout.count(); ++e) {
            for (int g = 0; g < t.n_gp; ++g) {
                double nu_g = 1.0;
                if (problem_.nu) {
                    nu_g = 0.0;
                    for (int i = 0; i < t.n_nodes; ++i) nu_g += t.N(g, i) * (*problem_.nu)[layout.node(e, i)];
                }
                const double w = t.weights[static_cast<std::size_t>(g)] * t.jacobian_det * nu_g;
                for (int i = 0; i < t.n_nodes; ++i) {
                    double s = 0.0;
                    for (int k = 0; k < t.ndim; ++k) s += t.dN_phys(g, i, k) * t.dN_phys(g, i, k);
                    diag_[layout.node(e, i)] += w * s;
                }
            }
        }
        for (std::size_t i = 0; i < diag_.size(); ++i) {
            if (problem_.mask.is_dirichlet(i)) diag_[i] = 1.0;
        }
    }

    EnergyProblem problem_;
    NodalField rhs_;
    NodalField diag_;
};

inline LinearSystem build_system(const EnergyProblem& problem) { return LinearSystem(problem); }

struct CgResult {
    NodalField u;        ///< free-node solution with Dirichlet values written back
    double residual = 0.0;  ///< final relative residual ||K u - F|| / ||F||
    int iterations = 0;
    std::vector<double> energies;  ///< J(u_k) per iterate, only when tracked
};

/// Jacobi-preconditioned conjugate gradient on the free nodes.
inline CgResult cg_solve(const LinearSystem& system, double tol = 1e-8, int max_iter = 100000,
                         bool track_energy = false) {
    const EnergyProblem& p = system.problem();
    const NodalField& F = system.rhs();
    const NodalField& D = system.diagonal();
    const double fnorm = std::sqrt(system.dot(F, F));

    auto with_bc = [&](const NodalField& x) { return apply_dirichlet(x, p.mask); };

    CgResult res;
    NodalField x(p.grid);
    if (fnorm == 0.0) {
        res.u = with_bc(x);
        return res;
    }
    NodalField r = F;
    NodalField z(p.grid);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = p.mask.is_dirichlet(i) ? 0.0 : r[i] / D[i];
    NodalField d = z;
    double rz = system.dot(r, z);
    if (track_energy) res.energies.push_back(energy(p, with_bc(x)));

    double rel = 1.0;
    int it = 0;
    while (it < max_iter) {
        const NodalField q = system.apply(d);
        const double dq = system.dot(d, q);
        if (!(dq > 0.0)) throw NumericalError("cg: operator is not positive definite along search direction");
        const double alpha = rz / dq;
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += alpha * d[i];
            r[i] -= alpha * q[i];
        }
        ++it;
        if (track_energy) res.energies.push_back(energy(p, with_bc(x)));
        rel = std::sqrt(system.dot(r, r)) / fnorm;
        if (rel <= tol) {
            // confirm against the true residual; recursion drift can fool the update
            const NodalField kx = system.apply(x);
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                r[i] = F[i] - kx[i];
                s += r[i] * r[i];
            }
            rel = std::sqrt(s) / fnorm;
            if (rel <= tol) break;
            for (std::size_t i = 0; i < z.size(); ++i) z[i] = p.mask.is_dirichlet(i) ? 0.0 : r[i] / D[i];
            d = z;
            rz = system.dot(r, z);
            continue;
        }
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = p.mask.is_dirichlet(i) ? 0.0 : r[i] / D[i];
        const double rz_new = system.dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = z[i] + beta * d[i];
    }
    if (rel > tol) {
        std::ostringstream msg;
        msg << "cg: no convergence after " << it << " iterations, relative residual " << rel;
        throw NumericalError(msg.str());
    }
    res.u = with_bc(x);
    res.residual = rel;
    res.iterations = it;
    return res;
}

/// build_system + cg_solve + apply_dirichlet.
inline NodalField reference_solution(const EnergyProblem& problem, double tol = 1e-12) {
    return cg_solve(build_system(problem), tol).u;
}

}  // namespace neufe
