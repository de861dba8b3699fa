#pragma once

// Parallel kernels behind the layer implementations. Every kernel splits
// work only along output elements (or batch samples), never along a
// reduction, so results are bit-identical for any OpenMP thread count.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "aedes/tensor.hpp"

namespace aedes::kernels {

enum class Padding : std::uint32_t { valid = 0, same = 1 };

struct ConvGeometry {
    std::size_t batch = 0, height = 0, width = 0, in_channels = 0;
    std::size_t kernel_h = 0, kernel_w = 0, stride = 1;
    std::size_t pad_top = 0, pad_left = 0;
    std::size_t out_h = 0, out_w = 0;

    std::size_t patch_size() const { return kernel_h * kernel_w * in_channels; }
    std::size_t rows() const { return batch * out_h * out_w; }
};

/// Output geometry for an NHWC input. `same` pads like the common
/// deep-learning convention: out = ceil(in / stride), extra padding on the
/// bottom/right when the total is odd.
ConvGeometry conv_geometry(const Shape& input_nhwc, std::size_t kernel_h, std::size_t kernel_w,
                           std::size_t stride, Padding padding);

/// Lowers NHWC input into a [batch*out_h*out_w, kh*kw*cin] patch matrix.
/// Column order is (ky, kx, c); padded taps are zero.
template <typename T>
BasicTensor<T> im2col(const BasicTensor<T>& input, const ConvGeometry& g);

/// Scatters a patch-matrix gradient back onto an NHWC tensor, summing
/// overlapping taps. Parallel over batch samples.
template <typename T>
BasicTensor<T> col2im(const BasicTensor<T>& cols, const ConvGeometry& g);

/// Packs [out, in, kh, kw] weights into the [kh*kw*in, out] matrix that
/// multiplies an im2col patch matrix, and back.
template <typename T>
BasicTensor<T> pack_conv_weights(const BasicTensor<T>& weights);
template <typename T>
BasicTensor<T> unpack_conv_weights(const BasicTensor<T>& packed, const Shape& weight_shape);

/// Adds bias[j] to every row of an [rows, cols] matrix in place.
template <typename T>
void add_row_bias(BasicTensor<T>& m, const BasicTensor<T>& bias);

/// Column sums of an [rows, cols] matrix, accumulated in row order.
template <typename T>
BasicTensor<T> column_sums(const BasicTensor<T>& m);

struct PoolGeometry {
    std::size_t batch = 0, height = 0, width = 0, channels = 0;
    std::size_t window = 0, stride = 0, out_h = 0, out_w = 0;
};

PoolGeometry pool_geometry(const Shape& input_nhwc, std::size_t window, std::size_t stride);

/// Max pooling over NHWC input. `argmax` receives, per output element, the
/// flat input index of the first maximum in row-major window order.
template <typename T>
BasicTensor<T> maxpool(const BasicTensor<T>& input, const PoolGeometry& g,
                       std::vector<std::size_t>& argmax);

/// Routes output gradients to their argmax positions, accumulating where
/// windows overlap.
template <typename T>
BasicTensor<T> maxpool_scatter(const BasicTensor<T>& grad_out, const Shape& input_shape,
                               const std::vector<std::size_t>& argmax);

/// Sets the OpenMP thread count; 0 restores the runtime default.
void set_thread_count(int threads);
int thread_count();

}  // namespace aedes::kernels
