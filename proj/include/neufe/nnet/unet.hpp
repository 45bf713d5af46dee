#pragma once

/**
 * @file unet.hpp
 * @brief Reduced convolutional encoder-decoder mapping a nodal input field to a
 *        nodal output field on the same grid.
 *
 * Architecture for depth D and base width C (channel width C_l = C * 2^l):
 *
 *   enc0      conv3(cin -> C_0) [-> InstanceNorm] -> LeakyReLU        skip_0
 *   for l = 1..D:
 *     down_l  conv3 stride 2 (C_{l-1} -> C_l) [-> IN] -> LeakyReLU
 *     conv_l  conv3 (C_l -> C_l) [-> IN] -> LeakyReLU                  skip_l
 *   for l = D..1:
 *     up_l    nearest upsample, conv3 (C_l -> C_{l-1}) [-> IN] -> LeakyReLU
 *     merge_l concat(up_l, skip_{l-1}) -> conv3 (2 C_{l-1} -> C_{l-1}) [-> IN] -> LeakyReLU
 *   final     conv1 (C_0 -> 1) -> sigmoid | identity
 *
 * cin = 1 + (coord_channels ? ndim : 0): the input field plus the node
 * coordinates. With K = 3^ndim taps the parameter count is
 *
 *   C_0 (cin K + 1)
 *   + sum_l [ C_l (C_{l-1} K + 1) + C_l (C_l K + 1)
 *             + C_{l-1} (C_l K + 1) + C_{l-1} (2 C_{l-1} K + 1) ]
 *   + C_0 + 1
 *
 * Tensor order: enc0.{w,b}, (down_l.{w,b}, conv_l.{w,b}) for l = 1..D,
 * (up_l.{w,b}, merge_l.{w,b}) for l = D..1, final.{w,b}.
 */

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "neufe/grid.hpp"
#include "neufe/nnet/tensor.hpp"

namespace neufe::nnet {

enum class Activation { sigmoid, identity };

inline const char* to_string(Activation a) { return a == Activation::sigmoid ? "sigmoid" : "identity"; }

inline Activation parse_activation(const std::string& s) {
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity") return Activation::identity;
    throw std::invalid_argument("unknown final activation '" + s + "'");
}

struct NetConfig {
    int ndim = 2;
    int depth = 2;
    int base_channels = 16;
    int kernel_size = 3;
    double leaky_slope = 0.2;
    Activation final_activation = Activation::sigmoid;
    bool use_instance_norm = true;
    bool coord_channels = true;
    double norm_eps = 1e-5;
    std::uint64_t seed = 0;

    int input_channels() const { return 1 + (coord_channels ? ndim : 0); }
    int width(int level) const { return base_channels << level; }

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

inline void validate(const NetConfig& c) {
    if (c.ndim != 2 && c.ndim != 3) throw std::invalid_argument("net: ndim must be 2 or 3");
    if (c.depth < 1) throw std::invalid_argument("net: depth must be at least 1");
    if (c.base_channels < 4) throw std::invalid_argument("net: base_channels must be at least 4");
    if (c.kernel_size != 3) throw std::invalid_argument("net: only kernel_size 3 is supported");
}

/// The lattice must coarsen exactly depth times: elements per axis divisible by 2^depth.
inline void validate(const NetConfig& c, const Grid& grid) {
    validate(c);
    if (grid.ndim() != c.ndim) throw std::invalid_argument("net: grid dimension does not match network");
    const int factor = 1 << c.depth;
    if (grid.nel_per_axis() % factor != 0) {
        throw std::invalid_argument("net: depth " + std::to_string(c.depth) + " needs elements per axis divisible by " +
                                    std::to_string(factor) + ", grid has " + std::to_string(grid.nel_per_axis()));
    }
}

struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
    bool frozen = false;
};

struct NetParams {
    std::vector<ParamTensor> tensors;

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.data.size();
        return n;
    }

    /// Same layout, all zeros.
    NetParams zeros_like() const {
        NetParams z;
        z.tensors = tensors;
        for (auto& t : z.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
        return z;
    }
};

namespace slot {
inline std::size_t enc0() { return 0; }
inline std::size_t down(int l) { return 2 + 4 * static_cast<std::size_t>(l - 1); }
inline std::size_t conv(int l) { return 4 + 4 * static_cast<std::size_t>(l - 1); }
inline std::size_t up(int depth, int l) { return 2 + 4 * static_cast<std::size_t>(depth) + 4 * static_cast<std::size_t>(depth - l); }
inline std::size_t merge(int depth, int l) { return up(depth, l) + 2; }
inline std::size_t final_layer(int depth) { return 2 + 8 * static_cast<std::size_t>(depth); }
}  // namespace slot

inline NetParams init(const NetConfig& config) {
    validate(config);
    const int K = kernel_taps(config.ndim);
    NetParams p;
    auto add_conv = [&](const std::string& name, int cout, int cin, int taps) {
        ParamTensor w{name + ".w", {cout, cin, taps}, std::vector<double>(static_cast<std::size_t>(cout * cin * taps)), false};
        ParamTensor b{name + ".b", {cout}, std::vector<double>(static_cast<std::size_t>(cout), 0.0), false};
        p.tensors.push_back(std::move(w));
        p.tensors.push_back(std::move(b));
    };
    const int D = config.depth;
    add_conv("enc0", config.width(0), config.input_channels(), K);
    for (int l = 1; l <= D; ++l) {
        add_conv("down" + std::to_string(l), config.width(l), config.width(l - 1), K);
        add_conv("conv" + std::to_string(l), config.width(l), config.width(l), K);
    }
    for (int l = D; l >= 1; --l) {
        add_conv("up" + std::to_string(l), config.width(l - 1), config.width(l), K);
        add_conv("merge" + std::to_string(l), config.width(l - 1), 2 * config.width(l - 1), K);
    }
    add_conv("final", 1, config.width(0), 1);

    std::mt19937_64 rng(config.seed);
    for (auto& t : p.tensors) {
        if (t.shape.size() != 3) continue;  // biases stay zero
        const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2];
        const double bound = std::sqrt(2.0 / fan_in);
        for (auto& v : t.data) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            v = bound * (2.0 * u - 1.0);
        }
    }
    return p;
}

inline std::size_t parameter_count(const NetConfig& c) {
    const std::size_t K = static_cast<std::size_t>(kernel_taps(c.ndim));
    auto w = [&](int l) { return static_cast<std::size_t>(c.width(l)); };
    std::size_t n = w(0) * (static_cast<std::size_t>(c.input_channels()) * K + 1);
    for (int l = 1; l <= c.depth; ++l) {
        n += w(l) * (w(l - 1) * K + 1) + w(l) * (w(l) * K + 1);
        n += w(l - 1) * (w(l) * K + 1) + w(l - 1) * (2 * w(l - 1) * K + 1);
    }
    return n + w(0) + 1;
}

/// Input tensor: the field followed by the node coordinates (if enabled).
inline Tensor assemble_input(const NetConfig& config, const NodalField& field) {
    const Grid& g = field.grid();
    const int n = g.nodes_per_axis();
    const Shape s{config.ndim == 3 ? n : 1, n, n};
    Tensor t(config.input_channels(), s);
    std::copy(field.values().begin(), field.values().end(), t.channel(0));
    if (config.coord_channels) {
        for (std::size_t i = 0; i < field.size(); ++i) {
            const Point x = node_coord(g, i);
            for (int k = 0; k < config.ndim; ++k) t.channel(1 + k)[i] = x[static_cast<std::size_t>(k)];
        }
    }
    return t;
}

struct BlockCache {
    Tensor pre;                    ///< input to the activation (normalised if IN is on)
    std::vector<double> inv_std;   ///< instance-norm scales
    Tensor out;
};

struct ForwardCache {
    Tensor input;
    BlockCache enc0;
    std::vector<BlockCache> down;    // [l - 1]
    std::vector<BlockCache> conv;    // [l - 1]
    std::vector<Tensor> up_in;       // [l - 1], upsampled tensors
    std::vector<BlockCache> up;      // [l - 1]
    std::vector<Tensor> cat;         // [l - 1]
    std::vector<BlockCache> merge;   // [l - 1]
    Tensor final_pre;
    Tensor output;
};

namespace detail {

inline void block_forward(const Tensor& in, const NetParams& p, std::size_t slot_w, int stride,
                          const NetConfig& c, BlockCache& cache) {
    const ParamTensor& w = p.tensors[slot_w];
    const ParamTensor& b = p.tensors[slot_w + 1];
    cache.pre = conv3_forward(in, w.data.data(), b.data.data(), w.shape[0], stride, c.ndim);
    if (c.use_instance_norm) cache.inv_std = instance_norm_forward(cache.pre, c.norm_eps);
    else cache.inv_std.clear();
    leaky_relu_forward(cache.pre, cache.out, c.leaky_slope);
}

inline Tensor block_backward(const Tensor& in, const NetParams& p, std::size_t slot_w, int stride, const NetConfig& c,
                             const BlockCache& cache, Tensor dout, NetParams& grads, bool want_input_grad = true) {
    leaky_relu_backward(cache.pre, dout, c.leaky_slope);
    if (c.use_instance_norm) instance_norm_backward(cache.pre, cache.inv_std, dout);
    const ParamTensor& w = p.tensors[slot_w];
    return conv3_backward(in, w.data.data(), dout, stride, c.ndim, grads.tensors[slot_w].data.data(),
                          grads.tensors[slot_w + 1].data.data(), want_input_grad);
}

inline void add_into(Tensor& acc, const Tensor& v) {
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += v.data[i];
}

}  // namespace detail

inline void check_params(const NetParams& params, const NetConfig& config) {
    if (params.tensors.size() != slot::final_layer(config.depth) + 2) {
        throw std::invalid_argument("net: parameter list does not match configuration");
    }
}

/// Forward pass keeping every intermediate needed by backward().
inline NodalField forward(const NetParams& params, const NetConfig& config, const NodalField& input,
                          ForwardCache& cache) {
    validate(config, input.grid());
    check_params(params, config);
    const int D = config.depth;
    cache.input = assemble_input(config, input);
    cache.down.assign(static_cast<std::size_t>(D), {});
    cache.conv.assign(static_cast<std::size_t>(D), {});
    cache.up_in.assign(static_cast<std::size_t>(D), {});
    cache.up.assign(static_cast<std::size_t>(D), {});
    cache.cat.assign(static_cast<std::size_t>(D), {});
    cache.merge.assign(static_cast<std::size_t>(D), {});

    detail::block_forward(cache.input, params, slot::enc0(), 1, config, cache.enc0);
    const Tensor* cur = &cache.enc0.out;
    for (int l = 1; l <= D; ++l) {
        auto& dn = cache.down[static_cast<std::size_t>(l - 1)];
        detail::block_forward(*cur, params, slot::down(l), 2, config, dn);
        auto& cv = cache.conv[static_cast<std::size_t>(l - 1)];
        detail::block_forward(dn.out, params, slot::conv(l), 1, config, cv);
        cur = &cv.out;
    }
    for (int l = D; l >= 1; --l) {
        const auto k = static_cast<std::size_t>(l - 1);
        const Tensor& skip = l == 1 ? cache.enc0.out : cache.conv[k - 1].out;
        cache.up_in[k] = upsample_nearest(*cur, skip.shape, config.ndim);
        detail::block_forward(cache.up_in[k], params, slot::up(D, l), 1, config, cache.up[k]);
        cache.cat[k] = concat_channels(cache.up[k].out, skip);
        detail::block_forward(cache.cat[k], params, slot::merge(D, l), 1, config, cache.merge[k]);
        cur = &cache.merge[k].out;
    }
    const std::size_t fw = slot::final_layer(D);
    cache.final_pre = conv1_forward(*cur, params.tensors[fw].data.data(), params.tensors[fw + 1].data.data(), 1);
    cache.output = cache.final_pre;
    if (config.final_activation == Activation::sigmoid) {
        for (auto& v : cache.output.data) v = 1.0 / (1.0 + std::exp(-v));
    }
    return NodalField(input.grid(), cache.output.data);
}

inline NodalField forward(const NetParams& params, const NetConfig& config, const NodalField& input) {
    ForwardCache cache;
    return forward(params, config, input, cache);
}

/// Parameter gradients given d(loss)/d(output) and the cache of the matching forward pass.
inline NetParams backward(const NetParams& params, const NetConfig& config, const ForwardCache& cache,
                          const NodalField& upstream) {
    const int D = config.depth;
    if (upstream.size() != cache.output.data.size()) throw std::invalid_argument("net: upstream gradient shape mismatch");
    NetParams grads = params.zeros_like();

    Tensor d_out(1, cache.output.shape);
    for (std::size_t i = 0; i < d_out.data.size(); ++i) {
        double g = upstream[i];
        if (config.final_activation == Activation::sigmoid) {
            const double s = cache.output.data[i];
            g *= s * (1.0 - s);
        }
        d_out.data[i] = g;
    }
    const std::size_t fw = slot::final_layer(D);
    const Tensor& top = cache.merge[0].out;
    Tensor d_cur = conv1_backward(top, params.tensors[fw].data.data(), d_out, grads.tensors[fw].data.data(),
                                  grads.tensors[fw + 1].data.data());

    // decoder, walked from the finest level back to the bottleneck
    std::vector<Tensor> d_skip(static_cast<std::size_t>(D + 1));
    d_skip[0] = Tensor(cache.enc0.out.channels, cache.enc0.out.shape);
    for (int l = 1; l <= D; ++l) {
        d_skip[static_cast<std::size_t>(l)] =
            Tensor(cache.conv[static_cast<std::size_t>(l - 1)].out.channels, cache.conv[static_cast<std::size_t>(l - 1)].out.shape);
    }
    for (int l = 1; l <= D; ++l) {
        const auto k = static_cast<std::size_t>(l - 1);
        Tensor d_cat = detail::block_backward(cache.cat[k], params, slot::merge(D, l), 1, config, cache.merge[k],
                                              std::move(d_cur), grads);
        const int cu = cache.up[k].out.channels;
        Tensor d_up(cu, cache.up[k].out.shape);
        std::copy(d_cat.data.begin(), d_cat.data.begin() + static_cast<std::ptrdiff_t>(d_up.data.size()), d_up.data.begin());
        Tensor& ds = d_skip[k];
        for (std::size_t i = 0; i < ds.data.size(); ++i) ds.data[i] += d_cat.data[d_up.data.size() + i];
        Tensor d_up_in = detail::block_backward(cache.up_in[k], params, slot::up(D, l), 1, config, cache.up[k],
                                                std::move(d_up), grads);
        const Shape coarse = cache.conv[k].out.shape;
        d_cur = upsample_nearest_backward(d_up_in, coarse, config.ndim);
    }
    // encoder
    detail::add_into(d_skip[static_cast<std::size_t>(D)], d_cur);
    for (int l = D; l >= 1; --l) {
        const auto k = static_cast<std::size_t>(l - 1);
        Tensor d = detail::block_backward(cache.down[k].out, params, slot::conv(l), 1, config, cache.conv[k],
                                          std::move(d_skip[static_cast<std::size_t>(l)]), grads);
        const Tensor& below = l == 1 ? cache.enc0.out : cache.conv[k - 1].out;
        Tensor d_below = detail::block_backward(below, params, slot::down(l), 2, config, cache.down[k], std::move(d),
                                                grads);
        detail::add_into(d_skip[k], d_below);
    }
    detail::block_backward(cache.input, params, slot::enc0(), 1, config, cache.enc0, std::move(d_skip[0]), grads,
                           false);
    return grads;
}

/// Recomputes the forward pass, then returns exact parameter gradients.
inline NetParams backward(const NetParams& params, const NetConfig& config, const NodalField& input,
                          const NodalField& upstream) {
    if (!(upstream.grid() == input.grid())) throw std::invalid_argument("net: upstream gradient grid mismatch");
    ForwardCache cache;
    forward(params, config, input, cache);
    return backward(params, config, cache, upstream);
}

}  // namespace neufe::nnet
