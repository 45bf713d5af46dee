#pragma once

// Finite-difference oracle for end-to-end network gradients of
// energy(apply_dirichlet(forward(params))). Probes whose +-eps perturbation
// flips the sign of any LeakyReLU input are skipped: central differences
// across a kink do not approximate the one-sided derivative.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "neufe/energy.hpp"
#include "neufe/nnet/unet.hpp"

namespace neufe::testing {

inline std::vector<bool> kink_signature(const nnet::ForwardCache& c) {
    std::vector<bool> s;
    auto add = [&](const nnet::BlockCache& b) {
        for (double v : b.pre.data) s.push_back(v > 0);
    };
    add(c.enc0);
    for (const auto* list : {&c.down, &c.conv, &c.up, &c.merge}) {
        for (const auto& b : *list) add(b);
    }
    return s;
}

inline double composite_loss(const nnet::NetParams& p, const nnet::NetConfig& c, const EnergyProblem& prob,
                             const NodalField& input, std::vector<bool>* sig = nullptr) {
    nnet::ForwardCache cache;
    const NodalField u = apply_dirichlet(nnet::forward(p, c, input, cache), prob.mask);
    if (sig) *sig = kink_signature(cache);
    return energy(prob, u);
}

struct FdReport {
    int checked = 0;
    int skipped = 0;
    double worst = 0.0;  ///< max relative error with a 1e-6 denominator floor
};

inline FdReport fd_check_params(const nnet::NetConfig& c, const EnergyProblem& prob, const NodalField& input,
                                int wanted, std::uint64_t seed, double eps = 1e-4) {
    const nnet::NetParams p = nnet::init(c);
    nnet::ForwardCache cache;
    const NodalField u = apply_dirichlet(nnet::forward(p, c, input, cache), prob.mask);
    const nnet::NetParams g = nnet::backward(p, c, cache, energy_gradient(prob, u));
    const std::vector<bool> base = kink_signature(cache);
    std::mt19937_64 rng(seed);
    FdReport rep;
    for (int tries = 0; rep.checked < wanted && tries < 20 * wanted; ++tries) {
        const std::size_t t = rng() % p.tensors.size();
        const std::size_t j = rng() % p.tensors[t].data.size();
        nnet::NetParams q = p;
        std::vector<bool> sp, sm;
        q.tensors[t].data[j] += eps;
        const double lp = composite_loss(q, c, prob, input, &sp);
        q.tensors[t].data[j] -= 2 * eps;
        const double lm = composite_loss(q, c, prob, input, &sm);
        if (sp != base || sm != base) {
            ++rep.skipped;
            continue;
        }
        const double fd = (lp - lm) / (2 * eps), ad = g.tensors[t].data[j];
        const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-6});
        rep.worst = std::max(rep.worst, rel);
        ++rep.checked;
    }
    return rep;
}

/// Central differences of energy() against energy_gradient() on every free node.
inline double fd_check_nodal(const EnergyProblem& prob, const NodalField& u, double eps = 1e-3) {
    const NodalField g = energy_gradient(prob, u);
    double worst = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (prob.mask.is_dirichlet(i)) continue;
        NodalField v = u;
        v[i] = u[i] + eps;
        const double jp = energy(prob, v);
        v[i] = u[i] - eps;
        const double jm = energy(prob, v);
        const double fd = (jp - jm) / (2 * eps);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
    }
    return worst;
}

}  // namespace neufe::testing
