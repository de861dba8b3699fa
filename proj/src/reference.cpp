#include "aedes/reference.hpp"

#include <limits>

namespace aedes::reference {

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul shape mismatch: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    BasicTensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T acc{0};
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    return c;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                      std::size_t stride, kernels::Padding padding) {
    const std::size_t cout = weights.dim(0), cin = weights.dim(1), kh = weights.dim(2), kw = weights.dim(3);
    const auto g = kernels::conv_geometry(input.shape(), kh, kw, stride, padding);
    if (g.in_channels != cin) throw DimensionError("conv2d channel mismatch");
    BasicTensor<T> out({g.batch, g.out_h, g.out_w, cout});
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox)
                for (std::size_t o = 0; o < cout; ++o) {
                    T acc = bias[o];
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(g.pad_top);
                            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(g.pad_left);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) || ix >= static_cast<long>(g.width))
                                continue;
                            for (std::size_t c = 0; c < cin; ++c)
                                acc += input.at({n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), c}) *
                                       weights.at({o, c, ky, kx});
                        }
                    out.at({n, oy, ox, o}) = acc;
                }
    return out;
}

template <typename T>
BasicTensor<T> maxpool(const BasicTensor<T>& input, std::size_t window, std::size_t stride,
                       std::vector<std::size_t>* argmax) {
    const auto g = kernels::pool_geometry(input.shape(), window, stride);
    BasicTensor<T> out({g.batch, g.out_h, g.out_w, g.channels});
    if (argmax) argmax->assign(out.size(), 0);
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox)
                for (std::size_t c = 0; c < g.channels; ++c) {
                    T best = input.at({n, oy * stride, ox * stride, c});
                    std::size_t best_idx = input.flat_index(std::vector<std::size_t>{n, oy * stride, ox * stride, c});
                    for (std::size_t wy = 0; wy < window; ++wy)
                        for (std::size_t wx = 0; wx < window; ++wx) {
                            const T v = input.at({n, oy * stride + wy, ox * stride + wx, c});
                            if (v > best) {
                                best = v;
                                best_idx = input.flat_index(
                                    std::vector<std::size_t>{n, oy * stride + wy, ox * stride + wx, c});
                            }
                        }
                    out.at({n, oy, ox, c}) = best;
                    if (argmax) (*argmax)[out.flat_index(std::vector<std::size_t>{n, oy, ox, c})] = best_idx;
                }
    return out;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias) {
    const std::size_t n = input.dim(0), in = input.dim(1), out = weights.dim(1);
    if (weights.dim(0) != in) throw DimensionError("dense feature mismatch");
    BasicTensor<T> y({n, out});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) {
            T acc = bias[j];
            for (std::size_t p = 0; p < in; ++p) acc += input[i * in + p] * weights[p * out + j];
            y[i * out + j] = acc;
        }
    return y;
}

#define AEDES_INSTANTIATE(T)                                                                                 \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                   std::size_t, kernels::Padding);                                          \
    template BasicTensor<T> maxpool(const BasicTensor<T>&, std::size_t, std::size_t, std::vector<std::size_t>*); \
    template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);

AEDES_INSTANTIATE(float)
AEDES_INSTANTIATE(double)

#undef AEDES_INSTANTIATE

}  // namespace aedes::reference
