#pragma once

// Serial loop implementations of the layer kernels. They are deliberately
// naive: no lowering, no packing, no OpenMP. Tests use them as oracles for
// the parallel kernels, and the benchmark target measures against them.

#include <vector>

#include "aedes/kernels.hpp"
#include "aedes/tensor.hpp"

namespace aedes::reference {

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Direct cross-correlation. input NHWC, weights [out,in,kh,kw], bias [out].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                      std::size_t stride, kernels::Padding padding);

template <typename T>
BasicTensor<T> maxpool(const BasicTensor<T>& input, std::size_t window, std::size_t stride,
                       std::vector<std::size_t>* argmax = nullptr);

/// input [n,in], weights [in,out], bias [out].
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias);

}  // namespace aedes::reference
