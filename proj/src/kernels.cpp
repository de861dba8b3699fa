#include "aedes/kernels.hpp"

#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace aedes::kernels {

namespace {

void require_nhwc(const Shape& s, const char* what) {
    if (s.size() != 4) {
        throw DimensionError(std::string(what) + " expects an NHWC tensor, got " + to_string(s));
    }
}

}  // namespace

ConvGeometry conv_geometry(const Shape& input, std::size_t kernel_h, std::size_t kernel_w,
                           std::size_t stride, Padding padding) {
    require_nhwc(input, "conv2d");
    if (kernel_h == 0 || kernel_w == 0 || stride == 0) throw ConfigError("conv2d kernel and stride must be positive");
    ConvGeometry g;
    g.batch = input[0];
    g.height = input[1];
    g.width = input[2];
    g.in_channels = input[3];
    g.kernel_h = kernel_h;
    g.kernel_w = kernel_w;
    g.stride = stride;
    if (padding == Padding::valid) {
        if (g.height < kernel_h || g.width < kernel_w) {
            throw DimensionError("conv2d kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                                 " larger than valid-padded input " + to_string(input));
        }
        g.out_h = (g.height - kernel_h) / stride + 1;
        g.out_w = (g.width - kernel_w) / stride + 1;
    } else {
        g.out_h = (g.height + stride - 1) / stride;
        g.out_w = (g.width + stride - 1) / stride;
        const std::size_t need_h = (g.out_h - 1) * stride + kernel_h;
        const std::size_t need_w = (g.out_w - 1) * stride + kernel_w;
        g.pad_top = need_h > g.height ? (need_h - g.height) / 2 : 0;
        g.pad_left = need_w > g.width ? (need_w - g.width) / 2 : 0;
    }
    return g;
}

template <typename T>
BasicTensor<T> im2col(const BasicTensor<T>& input, const ConvGeometry& g) {
    const std::size_t k = g.patch_size();
    BasicTensor<T> cols({g.rows(), k});
    const T* in = input.data().data();
    T* out = cols.data().data();
    const auto rows = static_cast<std::int64_t>(g.rows());
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::size_t row = static_cast<std::size_t>(r);
        const std::size_t n = row / (g.out_h * g.out_w);
        const std::size_t oy = (row / g.out_w) % g.out_h;
        const std::size_t ox = row % g.out_w;
        T* dst = out + row * k;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
                T* tap = dst + (ky * g.kernel_w + kx) * g.in_channels;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                    ix >= static_cast<std::ptrdiff_t>(g.width)) {
                    for (std::size_t c = 0; c < g.in_channels; ++c) tap[c] = T{0};
                    continue;
                }
                const T* src = in + ((n * g.height + static_cast<std::size_t>(iy)) * g.width +
                                     static_cast<std::size_t>(ix)) * g.in_channels;
                for (std::size_t c = 0; c < g.in_channels; ++c) tap[c] = src[c];
            }
        }
    }
    return cols;
}

template <typename T>
BasicTensor<T> col2im(const BasicTensor<T>& cols, const ConvGeometry& g) {
    BasicTensor<T> grad({g.batch, g.height, g.width, g.in_channels});
    const std::size_t k = g.patch_size();
    const T* src_all = cols.data().data();
    T* out = grad.data().data();
    const auto batch = static_cast<std::int64_t>(g.batch);
#pragma omp parallel for schedule(static)
    for (std::int64_t bn = 0; bn < batch; ++bn) {
        const std::size_t n = static_cast<std::size_t>(bn);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const T* src = src_all + ((n * g.out_h + oy) * g.out_w + ox) * k;
                for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                        const T* tap = src + (ky * g.kernel_w + kx) * g.in_channels;
                        T* dst = out + ((n * g.height + static_cast<std::size_t>(iy)) * g.width +
                                        static_cast<std::size_t>(ix)) * g.in_channels;
                        for (std::size_t c = 0; c < g.in_channels; ++c) dst[c] += tap[c];
                    }
                }
            }
        }
    }
    return grad;
}

template <typename T>
BasicTensor<T> pack_conv_weights(const BasicTensor<T>& w) {
    if (w.rank() != 4) throw DimensionError("conv weights must be [out,in,kh,kw], got " + to_string(w.shape()));
    const std::size_t out = w.dim(0), in = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    BasicTensor<T> packed({kh * kw * in, out});
    for (std::size_t o = 0; o < out; ++o)
        for (std::size_t c = 0; c < in; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx)
                    packed[((ky * kw + kx) * in + c) * out + o] = w[((o * in + c) * kh + ky) * kw + kx];
    return packed;
}

template <typename T>
BasicTensor<T> unpack_conv_weights(const BasicTensor<T>& packed, const Shape& shape) {
    const std::size_t out = shape.at(0), in = shape.at(1), kh = shape.at(2), kw = shape.at(3);
    if (packed.rank() != 2 || packed.dim(0) != kh * kw * in || packed.dim(1) != out) {
        throw DimensionError("packed conv weights " + to_string(packed.shape()) + " do not match " + to_string(shape));
    }
    BasicTensor<T> w(shape);
    for (std::size_t o = 0; o < out; ++o)
        for (std::size_t c = 0; c < in; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx)
                    w[((o * in + c) * kh + ky) * kw + kx] = packed[((ky * kw + kx) * in + c) * out + o];
    return w;
}

template <typename T>
void add_row_bias(BasicTensor<T>& m, const BasicTensor<T>& bias) {
    const std::size_t cols = m.dim(1);
    if (bias.size() != cols) {
        throw DimensionError("bias of " + std::to_string(bias.size()) + " entries cannot broadcast over " +
                             to_string(m.shape()));
    }
    const auto rows = static_cast<std::int64_t>(m.dim(0));
    T* p = m.data().data();
    const T* b = bias.data().data();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        T* row = p + static_cast<std::size_t>(r) * cols;
        for (std::size_t j = 0; j < cols; ++j) row[j] += b[j];
    }
}

template <typename T>
BasicTensor<T> column_sums(const BasicTensor<T>& m) {
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    BasicTensor<T> s({cols});
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = m.data().data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) s[j] += row[j];
    }
    return s;
}

PoolGeometry pool_geometry(const Shape& input, std::size_t window, std::size_t stride) {
    require_nhwc(input, "maxpool");
    if (window == 0 || stride == 0) throw ConfigError("maxpool window and stride must be positive");
    PoolGeometry g{input[0], input[1], input[2], input[3], window, stride, 0, 0};
    if (g.height < window || g.width < window) {
        throw DimensionError("maxpool window " + std::to_string(window) + " larger than input " + to_string(input));
    }
    g.out_h = (g.height - window) / stride + 1;
    g.out_w = (g.width - window) / stride + 1;
    return g;
}

template <typename T>
BasicTensor<T> maxpool(const BasicTensor<T>& input, const PoolGeometry& g, std::vector<std::size_t>& argmax) {
    BasicTensor<T> out({g.batch, g.out_h, g.out_w, g.channels});
    argmax.assign(out.size(), 0);
    const T* in = input.data().data();
    const auto planes = static_cast<std::int64_t>(g.batch * g.out_h);
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const std::size_t n = static_cast<std::size_t>(p) / g.out_h;
        const std::size_t oy = static_cast<std::size_t>(p) % g.out_h;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            for (std::size_t c = 0; c < g.channels; ++c) {
                std::size_t best_idx = 0;
                T best = -std::numeric_limits<T>::infinity();
                bool first = true;
                for (std::size_t wy = 0; wy < g.window; ++wy) {
                    for (std::size_t wx = 0; wx < g.window; ++wx) {
                        const std::size_t iy = oy * g.stride + wy, ix = ox * g.stride + wx;
                        const std::size_t idx = ((n * g.height + iy) * g.width + ix) * g.channels + c;
                        if (first || in[idx] > best) {
                            best = in[idx];
                            best_idx = idx;
                            first = false;
                        }
                    }
                }
                const std::size_t o = ((n * g.out_h + oy) * g.out_w + ox) * g.channels + c;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> maxpool_scatter(const BasicTensor<T>& grad_out, const Shape& input_shape,
                               const std::vector<std::size_t>& argmax) {
    if (argmax.size() != grad_out.size()) {
        throw DimensionError("maxpool gradient " + to_string(grad_out.shape()) + " does not match cached argmax");
    }
    BasicTensor<T> grad(input_shape);
    const std::size_t batch = input_shape.at(0);
    const std::size_t per_out = grad_out.size() / std::max<std::size_t>(batch, 1);
    const auto nb = static_cast<std::int64_t>(batch);
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < nb; ++n) {
        const std::size_t begin = static_cast<std::size_t>(n) * per_out;
        for (std::size_t o = begin; o < begin + per_out; ++o) grad[argmax[o]] += grad_out[o];
    }
    return grad;
}

void set_thread_count(int threads) {
#ifdef _OPENMP
    static const int default_threads = omp_get_max_threads();
    omp_set_num_threads(threads > 0 ? threads : default_threads);
#else
    (void)threads;
#endif
}

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

#define AEDES_INSTANTIATE(T)                                                                          \
    template BasicTensor<T> im2col(const BasicTensor<T>&, const ConvGeometry&);                      \
    template BasicTensor<T> col2im(const BasicTensor<T>&, const ConvGeometry&);                      \
    template BasicTensor<T> pack_conv_weights(const BasicTensor<T>&);                                \
    template BasicTensor<T> unpack_conv_weights(const BasicTensor<T>&, const Shape&);                \
    template void add_row_bias(BasicTensor<T>&, const BasicTensor<T>&);                              \
    template BasicTensor<T> column_sums(const BasicTensor<T>&);                                      \
    template BasicTensor<T> maxpool(const BasicTensor<T>&, const PoolGeometry&, std::vector<std::size_t>&); \
    template BasicTensor<T> maxpool_scatter(const BasicTensor<T>&, const Shape&, const std::vector<std::size_t>&);

AEDES_INSTANTIATE(float)
AEDES_INSTANTIATE(double)

#undef AEDES_INSTANTIATE

}  // namespace aedes::kernels
