#pragma once

// Dense channel-major tensors and the handful of layer primitives the
// encoder-decoder needs, each with a hand-written reverse pass.
//
// Layout: [channel][z][y][x], x fastest. 2D tensors have nz == 1 and use
// 3x3 kernels; 3D tensors use 3x3x3 kernels. Convolutions pad by edge
// replication, so a stride-1 conv keeps the node lattice and a stride-2 conv
// maps n nodes to (n - 1) / 2 + 1 nodes centred on the even fine nodes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace neufe::nnet {

struct Shape {
    int nz = 1;
    int ny = 1;
    int nx = 1;
    std::size_t volume() const {
        return static_cast<std::size_t>(nz) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nx);
    }
    friend bool operator==(const Shape&, const Shape&) = default;
};

inline Shape coarsen(const Shape& s, int ndim) {
    Shape c{s.nz, (s.ny - 1) / 2 + 1, (s.nx - 1) / 2 + 1};
    if (ndim == 3) c.nz = (s.nz - 1) / 2 + 1;
    return c;
}

struct Tensor {
    int channels = 0;
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, Shape s, double fill = 0.0)
        : channels(c), shape(s), data(static_cast<std::size_t>(c) * s.volume(), fill) {}

    std::size_t plane() const { return shape.volume(); }
    double* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
    const double* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }
};

inline int kernel_taps(int ndim) { return ndim == 3 ? 27 : 9; }

namespace detail {

inline Shape padded(const Shape& s, int ndim) {
    return Shape{ndim == 3 ? s.nz + 2 : 1, s.ny + 2, s.nx + 2};
}

/// Edge-replicated copy of one channel plane.
inline void pad_plane(const double* src, const Shape& s, int ndim, double* dst) {
    const Shape p = padded(s, ndim);
    const int oz = ndim == 3 ? 1 : 0;
    for (int z = 0; z < p.nz; ++z) {
        const int sz = std::clamp(z - oz, 0, s.nz - 1);
        for (int y = 0; y < p.ny; ++y) {
            const int sy = std::clamp(y - 1, 0, s.ny - 1);
            const double* row = src + (static_cast<std::size_t>(sz) * s.ny + sy) * s.nx;
            double* out = dst + (static_cast<std::size_t>(z) * p.ny + y) * p.nx;
            out[0] = row[0];
            std::copy(row, row + s.nx, out + 1);
            out[p.nx - 1] = row[s.nx - 1];
        }
    }
}

/// Adjoint of pad_plane: accumulate a padded gradient back onto the lattice.
inline void unpad_plane_add(const double* src, const Shape& s, int ndim, double* dst) {
    const Shape p = padded(s, ndim);
    const int oz = ndim == 3 ? 1 : 0;
    for (int z = 0; z < p.nz; ++z) {
        const int sz = std::clamp(z - oz, 0, s.nz - 1);
        for (int y = 0; y < p.ny; ++y) {
            const int sy = std::clamp(y - 1, 0, s.ny - 1);
            double* row = dst + (static_cast<std::size_t>(sz) * s.ny + sy) * s.nx;
            const double* in = src + (static_cast<std::size_t>(z) * p.ny + y) * p.nx;
            row[0] += in[0];
            for (int x = 0; x < s.nx; ++x) row[x] += in[x + 1];
            row[s.nx - 1] += in[p.nx - 1];
        }
    }
}

/// Gathers the 3^ndim padded neighbourhood of every output node into rows of
/// a [cin * taps][P] matrix (P output nodes), row index ci * taps + tap.
inline void im2col(const double* pad, int cin, const Shape& ps, const Shape& os, int stride, int ndim,
                   double* col) {
    const int taps = kernel_taps(ndim);
    const int kz_count = ndim == 3 ? 3 : 1;
    const std::size_t P = os.volume();
    for (int ci = 0; ci < cin; ++ci) {
        const double* src = pad + static_cast<std::size_t>(ci) * ps.volume();
        for (int kz = 0; kz < kz_count; ++kz) {
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    double* dst = col + (static_cast<std::size_t>(ci) * taps + 9 * kz + 3 * ky + kx) * P;
                    for (int z = 0; z < os.nz; ++z) {
                        for (int y = 0; y < os.ny; ++y) {
                            const double* r = src + (static_cast<std::size_t>(stride * z + kz) * ps.ny + stride * y + ky) * ps.nx + kx;
                            double* d = dst + (static_cast<std::size_t>(z) * os.ny + y) * os.nx;
                            if (stride == 1) std::copy(r, r + os.nx, d);
                            else for (int x = 0; x < os.nx; ++x) d[x] = r[2 * x];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatter-add the column matrix back onto the padded planes.
inline void col2im_add(const double* col, int cin, const Shape& ps, const Shape& os, int stride, int ndim,
                       double* dpad) {
    const int taps = kernel_taps(ndim);
    const int kz_count = ndim == 3 ? 3 : 1;
    const std::size_t P = os.volume();
    for (int ci = 0; ci < cin; ++ci) {
        double* dst = dpad + static_cast<std::size_t>(ci) * ps.volume();
        for (int kz = 0; kz < kz_count; ++kz) {
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double* src = col + (static_cast<std::size_t>(ci) * taps + 9 * kz + 3 * ky + kx) * P;
                    for (int z = 0; z < os.nz; ++z) {
                        for (int y = 0; y < os.ny; ++y) {
                            double* r = dst + (static_cast<std::size_t>(stride * z + kz) * ps.ny + stride * y + ky) * ps.nx + kx;
                            const double* g = src + (static_cast<std::size_t>(z) * os.ny + y) * os.nx;
                            for (int x = 0; x < os.nx; ++x) r[stride * x] += g[x];
                        }
                    }
                }
            }
        }
    }
}

/// Per-thread scratch that only grows, so the hot path does not zero-fill
/// buffers it is about to overwrite.
inline double* scratch(int slot, std::size_t n) {
    thread_local std::array<std::vector<double>, 2> buf;
    auto& b = buf[static_cast<std::size_t>(slot)];
    if (b.size() < n) b.resize(n);
    return b.data();
}

inline const double* padded_copy(const Tensor& in, int ndim) {
    const Shape ps = padded(in.shape, ndim);
    double* pad = scratch(0, static_cast<std::size_t>(in.channels) * ps.volume());
    for (int c = 0; c < in.channels; ++c) pad_plane(in.channel(c), in.shape, ndim, pad + c * ps.volume());
    return pad;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

}  // namespace detail

/// Output lattice of a 3^ndim convolution with the given stride.
inline Shape conv_output_shape(const Shape& in, int stride, int ndim) {
    if (stride == 1) return in;
    return coarsen(in, ndim);
}

/**
 * Replicate-padded 3^ndim convolution, evaluated as im2col followed by one GEMM.
 * weights: [cout][cin][taps] with tap = kx + 3 ky + 9 kz; bias: [cout].
 */
inline Tensor conv3_forward(const Tensor& in, const double* weights, const double* bias, int cout, int stride,
                            int ndim) {
    const int cin = in.channels;
    const int K = cin * kernel_taps(ndim);
    const Shape os = conv_output_shape(in.shape, stride, ndim);
    const Shape ps = detail::padded(in.shape, ndim);
    const auto P = static_cast<Eigen::Index>(os.volume());
    double* col = detail::scratch(1, static_cast<std::size_t>(K) * os.volume());
    detail::im2col(detail::padded_copy(in, ndim), cin, ps, os, stride, ndim, col);

    Tensor out(cout, os);
    detail::MatMap y(out.data.data(), cout, P);
    y.noalias() = detail::ConstMatMap(weights, cout, K) * detail::ConstMatMap(col, K, P);
    if (bias) {
        for (int co = 0; co < cout; ++co) y.row(co).array() += bias[co];
    }
    return out;
}

/// Reverse pass of conv3_forward. Accumulates into dweights/dbias; returns
/// d(in) unless want_input_grad is false (then an empty tensor).
inline Tensor conv3_backward(const Tensor& in, const double* weights, const Tensor& dout, int stride, int ndim,
                             double* dweights, double* dbias, bool want_input_grad = true) {
    const int cin = in.channels;
    const int cout = dout.channels;
    const int K = cin * kernel_taps(ndim);
    const Shape os = dout.shape;
    const Shape ps = detail::padded(in.shape, ndim);
    const auto P = static_cast<Eigen::Index>(os.volume());
    double* col = detail::scratch(1, static_cast<std::size_t>(K) * os.volume());
    detail::im2col(detail::padded_copy(in, ndim), cin, ps, os, stride, ndim, col);

    const detail::ConstMatMap g(dout.data.data(), cout, P);
    const detail::ConstMatMap c(col, K, P);
    if (dbias) {
        // plain loop: Eigen reductions peel by pointer alignment, which would
        // make the summation order depend on where the buffer landed
        for (int co = 0; co < cout; ++co) {
            const double* row = dout.channel(co);
            double s = 0.0;
            for (Eigen::Index i = 0; i < P; ++i) s += row[i];
            dbias[co] += s;
        }
    }
    detail::MatMap(dweights, cout, K).noalias() += g * c.transpose();
    if (!want_input_grad) return {};

    detail::MatMap(col, K, P).noalias() = detail::ConstMatMap(weights, cout, K).transpose() * g;
    double* dpad = detail::scratch(0, static_cast<std::size_t>(cin) * ps.volume());
    std::fill(dpad, dpad + static_cast<std::size_t>(cin) * ps.volume(), 0.0);
    detail::col2im_add(col, cin, ps, os, stride, ndim, dpad);
    Tensor din(cin, in.shape);
    for (int ch = 0; ch < cin; ++ch) {
        detail::unpad_plane_add(dpad + static_cast<std::size_t>(ch) * ps.volume(), in.shape, ndim,
                                din.channel(ch));
    }
    return din;
}

/// Pointwise (1x1) convolution. weights: [cout][cin].
inline Tensor conv1_forward(const Tensor& in, const double* weights, const double* bias, int cout) {
    Tensor out(cout, in.shape);
    const std::size_t n = in.plane();
    for (int co = 0; co < cout; ++co) {
        double* dst = out.channel(co);
        std::fill(dst, dst + n, bias ? bias[co] : 0.0);
        for (int ci = 0; ci < in.channels; ++ci) {
            const double w = weights[static_cast<std::size_t>(co) * in.channels + ci];
            const double* src = in.channel(ci);
            for (std::size_t i = 0; i < n; ++i) dst[i] += w * src[i];
        }
    }
    return out;
}

inline Tensor conv1_backward(const Tensor& in, const double* weights, const Tensor& dout, double* dweights,
                             double* dbias) {
    Tensor din(in.channels, in.shape);
    const std::size_t n = in.plane();
    for (int co = 0; co < dout.channels; ++co) {
        const double* g = dout.channel(co);
        if (dbias) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += g[i];
            dbias[co] += s;
        }
        for (int ci = 0; ci < in.channels; ++ci) {
            const double w = weights[static_cast<std::size_t>(co) * in.channels + ci];
            const double* src = in.channel(ci);
            double* d = din.channel(ci);
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += g[i] * src[i];
                d[i] += w * g[i];
            }
            dweights[static_cast<std::size_t>(co) * in.channels + ci] += acc;
        }
    }
    return din;
}

/// Per-channel normalisation to zero mean / unit variance (no affine).
/// Writes the normalised values into x and returns 1/sqrt(var + eps) per channel.
inline std::vector<double> instance_norm_forward(Tensor& x, double eps) {
    std::vector<double> inv_std(static_cast<std::size_t>(x.channels));
    const std::size_t n = x.plane();
    for (int c = 0; c < x.channels; ++c) {
        double* v = x.channel(c);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += v[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (v[i] - mean) * (v[i] - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < n; ++i) v[i] = (v[i] - mean) * inv;
        inv_std[static_cast<std::size_t>(c)] = inv;
    }
    return inv_std;
}

/// In-place reverse pass: dy becomes dx. xhat is the normalised forward output.
inline void instance_norm_backward(const Tensor& xhat, const std::vector<double>& inv_std, Tensor& dy) {
    const std::size_t n = xhat.plane();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int c = 0; c < xhat.channels; ++c) {
        const double* y = xhat.channel(c);
        double* g = dy.channel(c);
        double mg = 0.0;
        double mgy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mg += g[i];
            mgy += g[i] * y[i];
        }
        mg *= inv_n;
        mgy *= inv_n;
        const double inv = inv_std[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < n; ++i) g[i] = inv * (g[i] - mg - y[i] * mgy);
    }
}

inline void leaky_relu_forward(const Tensor& pre, Tensor& out, double slope) {
    out = Tensor(pre.channels, pre.shape);
    for (std::size_t i = 0; i < pre.data.size(); ++i) {
        const double v = pre.data[i];
        out.data[i] = v > 0.0 ? v : slope * v;
    }
}

inline void leaky_relu_backward(const Tensor& pre, Tensor& grad, double slope) {
    for (std::size_t i = 0; i < pre.data.size(); ++i) {
        if (!(pre.data[i] > 0.0)) grad.data[i] *= slope;
    }
}

/// Nearest-neighbour prolongation: fine node f reads coarse node f / 2.
inline Tensor upsample_nearest(const Tensor& coarse, const Shape& fine, int ndim) {
    Tensor out(coarse.channels, fine);
    for (int c = 0; c < coarse.channels; ++c) {
        const double* src = coarse.channel(c);
        double* dst = out.channel(c);
        for (int z = 0; z < fine.nz; ++z) {
            const int cz = ndim == 3 ? z / 2 : 0;
            for (int y = 0; y < fine.ny; ++y) {
                const double* srow = src + (static_cast<std::size_t>(cz) * coarse.shape.ny + y / 2) * coarse.shape.nx;
                double* drow = dst + (static_cast<std::size_t>(z) * fine.ny + y) * fine.nx;
                for (int x = 0; x < fine.nx; ++x) drow[x] = srow[x / 2];
            }
        }
    }
    return out;
}

inline Tensor upsample_nearest_backward(const Tensor& dfine, const Shape& coarse, int ndim) {
    Tensor out(dfine.channels, coarse);
    const Shape fine = dfine.shape;
    for (int c = 0; c < dfine.channels; ++c) {
        const double* src = dfine.channel(c);
        double* dst = out.channel(c);
        for (int z = 0; z < fine.nz; ++z) {
            const int cz = ndim == 3 ? z / 2 : 0;
            for (int y = 0; y < fine.ny; ++y) {
                double* drow = dst + (static_cast<std::size_t>(cz) * coarse.ny + y / 2) * coarse.nx;
                const double* srow = src + (static_cast<std::size_t>(z) * fine.ny + y) * fine.nx;
                for (int x = 0; x < fine.nx; ++x) drow[x / 2] += srow[x];
            }
        }
    }
    return out;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (!(a.shape == b.shape)) throw std::invalid_argument("concat: shape mismatch");
    Tensor out(a.channels + b.channels, a.shape);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return out;
}

}  // namespace neufe::nnet
