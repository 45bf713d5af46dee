#pragma once

/**
 * @file klrf.hpp
 * @brief Truncated Karhunen-Loeve representation of a log-normal diffusivity
 *        with exponential covariance sigma * exp(-|s - t| / eta) on [0, 1].
 *
 * With t = x - 1/2 on [-a, a], a = 1/2 and c = 1/eta the eigenfunctions are
 *   cos(w t)  with  c cos(w a) - w sin(w a) = 0   (even family)
 *   sin(w t)  with  w cos(w a) + c sin(w a) = 0   (odd family)
 * and the k-th root overall lies in ((k-1) pi, k pi), alternating even/odd.
 * Eigenvalues are 2 eta sigma / (1 + eta^2 w^2).
 */

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "neufe/grid.hpp"

namespace neufe::kl {

enum class Parity { even, odd };

struct Mode {
    double omega = 0.0;
    double lambda = 0.0;
    Parity parity = Parity::even;
    double amplitude = 1.0;  ///< L2 normalisation on [0, 1]

    double operator()(double x) const {
        const double t = x - 0.5;
        return parity == Parity::even ? amplitude * std::cos(omega * t) : amplitude * std::sin(omega * t);
    }
};

struct KLBasis {
    int m = 6;
    double eta = 0.5;
    double sigma = 1.0;
    std::vector<Mode> modes;
};

struct KLSample {
    std::vector<double> a;
};

/// Defining equation of root k (1-based), written without tan() poles.
inline double root_residual(double omega, double eta, int k) {
    const double c = 1.0 / eta;
    const double half = 0.5 * omega;
    if (k % 2 == 1) return c * std::cos(half) - omega * std::sin(half);
    return omega * std::cos(half) + c * std::sin(half);
}

inline std::vector<double> solve_roots(double eta, int m) {
    if (!(eta > 0.0)) throw std::invalid_argument("kl: correlation length must be positive");
    if (m < 1) throw std::invalid_argument("kl: need at least one mode");
    std::vector<double> roots;
    roots.reserve(static_cast<std::size_t>(m));
    for (int k = 1; k <= m; ++k) {
        double lo = (k - 1) * std::numbers::pi;
        double hi = k * std::numbers::pi;
        double flo = root_residual(lo, eta, k);
        const double fhi = root_residual(hi, eta, k);
        if (flo == 0.0 && lo > 0.0) {
            roots.push_back(lo);
            continue;
        }
        if (flo * fhi > 0.0) {
            std::ostringstream msg;
            msg << "kl: root " << k << " not bracketed in [" << lo << ", " << hi << "]";
            throw NumericalError(msg.str());
        }
        while (hi - lo > 1e-12) {
            const double mid = 0.5 * (lo + hi);
            const double fm = root_residual(mid, eta, k);
            if (fm == 0.0) {
                lo = hi = mid;
                break;
            }
            if ((fm < 0.0) == (flo < 0.0)) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        roots.push_back(0.5 * (lo + hi));
    }
    return roots;
}

inline KLBasis eigenpairs(double eta, double sigma, int m) {
    if (!(sigma > 0.0)) throw std::invalid_argument("kl: sigma must be positive");
    KLBasis basis;
    basis.m = m;
    basis.eta = eta;
    basis.sigma = sigma;
    const std::vector<double> roots = solve_roots(eta, m);
    const double a = 0.5;
    for (int k = 1; k <= m; ++k) {
        Mode mode;
        mode.omega = roots[static_cast<std::size_t>(k - 1)];
        mode.lambda = 2.0 * eta * sigma / (1.0 + eta * eta * mode.omega * mode.omega);
        mode.parity = k % 2 == 1 ? Parity::even : Parity::odd;
        const double s = std::sin(2.0 * mode.omega * a) / (2.0 * mode.omega);
        const double norm2 = mode.parity == Parity::even ? a + s : a - s;
        mode.amplitude = 1.0 / std::sqrt(norm2);
        basis.modes.push_back(mode);
    }
    for (std::size_t i = 1; i < basis.modes.size(); ++i) {
        if (!(basis.modes[i].omega > basis.modes[i - 1].omega) || !(basis.modes[i].lambda < basis.modes[i - 1].lambda)) {
            throw NumericalError("kl: eigenvalues are not strictly decreasing");
        }
    }
    return basis;
}

/// Exponent of the diffusivity: sum_i a_i sqrt(prod lambda_i) prod phi_i(x_k).
inline double log_nu_at(const KLBasis& basis, const KLSample& sample, const Point& x, int ndim) {
    double z = 0.0;
    for (std::size_t i = 0; i < basis.modes.size(); ++i) {
        const Mode& mode = basis.modes[i];
        double term = sample.a[i] * std::pow(mode.lambda, 0.5 * ndim);
        for (int k = 0; k < ndim; ++k) term *= mode(x[static_cast<std::size_t>(k)]);
        z += term;
    }
    return z;
}

inline NodalField build_nu(const KLBasis& basis, const KLSample& sample, const Grid& grid) {
    if (sample.a.size() != basis.modes.size()) {
        throw std::invalid_argument("kl: sample has " + std::to_string(sample.a.size()) + " coefficients, basis has " +
                                    std::to_string(basis.modes.size()) + " modes");
    }
    // separable: tabulate each 1D mode on the node lattice once
    const int n = grid.nodes_per_axis();
    const std::size_t m = basis.modes.size();
    std::vector<double> phi(m * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            const double x = j == grid.nel_per_axis() ? 1.0 : j * grid.h();
            phi[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] = basis.modes[i](x);
        }
    }
    std::vector<double> coef(m);
    for (std::size_t i = 0; i < m; ++i) coef[i] = sample.a[i] * std::pow(basis.modes[i].lambda, 0.5 * grid.ndim());

    NodalField nu(grid);
    for (std::size_t idx = 0; idx < nu.size(); ++idx) {
        const NodeIndex ijk = node_ijk(grid, idx);
        double z = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double term = coef[i];
            for (int k = 0; k < grid.ndim(); ++k) {
                term *= phi[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(ijk[static_cast<std::size_t>(k)])];
            }
            z += term;
        }
        nu[idx] = std::exp(z);
    }
    return nu;
}

/// n i.i.d. uniform coefficient tuples of length m from a seeded generator.
inline std::vector<KLSample> sample_coeffs(int n, int m, double lo, double hi, std::uint64_t seed) {
    if (!(lo < hi)) throw std::invalid_argument("kl: sample bounds must satisfy lo < hi");
    if (n < 1 || m < 1) throw std::invalid_argument("kl: sample count and mode count must be positive");
    std::mt19937_64 rng(seed);
    std::vector<KLSample> out(static_cast<std::size_t>(n));
    for (auto& s : out) {
        s.a.resize(static_cast<std::size_t>(m));
        for (auto& v : s.a) {
            // 53-bit uniform in [0, 1); stable across standard libraries
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            v = lo + (hi - lo) * u;
        }
    }
    return out;
}

}  // namespace neufe::kl
