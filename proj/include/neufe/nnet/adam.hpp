#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "neufe/nnet/unet.hpp"

namespace neufe::nnet {

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

/// One bias-corrected Adam update of a flat parameter block; step is 1-based.
inline void adam_update(std::span<double> x, std::span<const double> g, AdamMoments& mom, std::int64_t step,
                        double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (mom.m.size() != x.size()) {
        mom.m.assign(x.size(), 0.0);
        mom.v.assign(x.size(), 0.0);
    }
    if (g.size() != x.size()) throw std::invalid_argument("adam: gradient size mismatch");
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < x.size(); ++i) {
        mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g[i];
        mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mh = mom.m[i] / c1;
        const double vh = mom.v[i] / c2;
        x[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

struct AdamState {
    std::vector<AdamMoments> moments;  // one per parameter tensor
    std::int64_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam(const NetParams& params, double lr) {
    AdamState s;
    s.lr = lr;
    s.moments.resize(params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        s.moments[i].m.assign(params.tensors[i].data.size(), 0.0);
        s.moments[i].v.assign(params.tensors[i].data.size(), 0.0);
    }
    return s;
}

/// Updates every non-frozen tensor; frozen tensors keep values and moments.
inline void adam_step(NetParams& params, const NetParams& grads, AdamState& state) {
    if (grads.tensors.size() != params.tensors.size() || state.moments.size() != params.tensors.size()) {
        throw std::invalid_argument("adam: parameter/gradient/state layout mismatch");
    }
    ++state.step;
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        auto& t = params.tensors[i];
        if (t.frozen) continue;
        adam_update(t.data, grads.tensors[i].data, state.moments[i], state.step, state.lr, state.beta1, state.beta2,
                    state.eps);
    }
}

}  // namespace neufe::nnet
