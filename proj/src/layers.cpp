#include "aedes/layers.hpp"

#include <cmath>

namespace aedes::nn {

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "Conv2D";
        case LayerKind::maxpool2d: return "MaxPool2D";
        case LayerKind::dense: return "Dense";
        case LayerKind::dropout: return "Dropout";
        case LayerKind::flatten: return "Flatten";
        case LayerKind::relu: return "ReLU";
        case LayerKind::sigmoid: return "Sigmoid";
    }
    return "Unknown(" + std::to_string(static_cast<std::uint32_t>(kind)) + ")";
}

LayerSpec LayerSpec::conv2d(std::size_t out_channels, std::size_t kernel, Padding padding, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.out_channels = out_channels;
    s.kernel_h = s.kernel_w = kernel;
    s.padding = padding;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::maxpool2d(std::size_t window, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::maxpool2d;
    s.window = window;
    s.stride = stride == 0 ? window : stride;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t out_features) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.out_features = out_features;
    return s;
}

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::flatten() { return LayerSpec{.kind = LayerKind::flatten}; }
LayerSpec LayerSpec::relu() { return LayerSpec{.kind = LayerKind::relu}; }
LayerSpec LayerSpec::sigmoid() { return LayerSpec{.kind = LayerKind::sigmoid}; }

void LayerSpec::validate() const {
    switch (kind) {
        case LayerKind::conv2d:
            if (out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0)
                throw ConfigError("Conv2D needs positive out_channels, kernel and stride");
            break;
        case LayerKind::maxpool2d:
            if (window == 0 || stride == 0) throw ConfigError("MaxPool2D needs positive window and stride");
            break;
        case LayerKind::dense:
            if (out_features == 0) throw ConfigError("Dense needs positive out_features");
            break;
        case LayerKind::dropout:
            if (!(rate >= 0.0 && rate < 1.0))
                throw ConfigError("Dropout rate must lie in [0, 1), got " + std::to_string(rate));
            break;
        case LayerKind::flatten:
        case LayerKind::relu:
        case LayerKind::sigmoid:
            break;
        default:
            throw ConfigError("unknown layer kind " + std::to_string(static_cast<std::uint32_t>(kind)));
    }
}

Shape LayerSpec::output_shape(const Shape& input) const {
    validate();
    switch (kind) {
        case LayerKind::conv2d: {
            if (input.size() != 3) throw DimensionError("Conv2D expects an HxWxC input, got " + aedes::to_string(input));
            const auto g = kernels::conv_geometry({1, input[0], input[1], input[2]}, kernel_h, kernel_w, stride, padding);
            return {g.out_h, g.out_w, out_channels};
        }
        case LayerKind::maxpool2d: {
            if (input.size() != 3) throw DimensionError("MaxPool2D expects an HxWxC input, got " + aedes::to_string(input));
            const auto g = kernels::pool_geometry({1, input[0], input[1], input[2]}, window, stride);
            return {g.out_h, g.out_w, input[2]};
        }
        case LayerKind::dense:
            if (input.size() != 1) throw DimensionError("Dense expects a flat input, got " + aedes::to_string(input));
            return {out_features};
        case LayerKind::flatten:
            return {element_count(input)};
        default:
            return input;
    }
}

std::size_t LayerSpec::parameter_count(const Shape& input) const {
    switch (kind) {
        case LayerKind::conv2d: return out_channels * input.at(2) * kernel_h * kernel_w + out_channels;
        case LayerKind::dense: return input.at(0) * out_features + out_features;
        default: return 0;
    }
}

template <typename T>
void Layer<T>::missing_cache() const {
    throw StateError(to_string(spec_.kind) + " backward called without a training-mode forward");
}

// ---------------------------------------------------------------------------
// Conv2D

template <typename T>
Conv2D<T>::Conv2D(const LayerSpec& spec, std::size_t in_channels)
    : Layer<T>(spec),
      in_channels_(in_channels),
      weights_{"weights", BasicTensor<T>({spec.out_channels, in_channels, spec.kernel_h, spec.kernel_w}),
               BasicTensor<T>({spec.out_channels, in_channels, spec.kernel_h, spec.kernel_w})},
      bias_{"bias", BasicTensor<T>({spec.out_channels}), BasicTensor<T>({spec.out_channels})} {
    spec.validate();
}

template <typename T>
BasicTensor<T> Conv2D<T>::run(const BasicTensor<T>& input, Cache* cache) const {
    const auto& s = this->spec_;
    const auto g = kernels::conv_geometry(input.shape(), s.kernel_h, s.kernel_w, s.stride, s.padding);
    if (g.in_channels != in_channels_) {
        throw DimensionError("Conv2D expects " + std::to_string(in_channels_) + " input channels, got " +
                             to_string(input.shape()));
    }
    auto cols = kernels::im2col(input, g);
    auto out = matmul(cols, kernels::pack_conv_weights(weights_.value));
    kernels::add_row_bias(out, bias_.value);
    if (cache) {
        cache->geometry = g;
        cache->cols = std::move(cols);
    }
    return std::move(out).reshaped({g.batch, g.out_h, g.out_w, s.out_channels});
}

template <typename T>
BasicTensor<T> Conv2D<T>::infer(const BasicTensor<T>& input) const {
    return run(input, nullptr);
}

template <typename T>
BasicTensor<T> Conv2D<T>::forward(const BasicTensor<T>& input, Mode mode) {
    if (mode == Mode::infer) return infer(input);
    Cache cache;
    auto out = run(input, &cache);
    cache_ = std::move(cache);
    return out;
}

template <typename T>
BasicTensor<T> Conv2D<T>::backward(const BasicTensor<T>& grad_out) {
    if (!cache_) this->missing_cache();
    Cache cache = std::move(*cache_);
    cache_.reset();
    const auto& g = cache.geometry;
    const std::size_t cout = this->spec_.out_channels;
    if (grad_out.size() != g.rows() * cout) {
        throw DimensionError("Conv2D gradient " + to_string(grad_out.shape()) + " does not match forward output");
    }
    const auto grad = grad_out.reshaped({g.rows(), cout});
    weights_.grad = kernels::unpack_conv_weights(matmul_tn(cache.cols, grad), weights_.value.shape());
    bias_.grad = kernels::column_sums(grad);
    const auto grad_cols = matmul_nt(grad, kernels::pack_conv_weights(weights_.value));
    return kernels::col2im(grad_cols, g);
}

// ---------------------------------------------------------------------------
// MaxPool2D

template <typename T>
BasicTensor<T> MaxPool2D<T>::infer(const BasicTensor<T>& input) const {
    std::vector<std::size_t> argmax;
    const auto g = kernels::pool_geometry(input.shape(), this->spec_.window, this->spec_.stride);
    return kernels::maxpool(input, g, argmax);
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::forward(const BasicTensor<T>& input, Mode mode) {
    if (mode == Mode::infer) return infer(input);
    Cache cache{input.shape(), {}};
    const auto g = kernels::pool_geometry(input.shape(), this->spec_.window, this->spec_.stride);
    auto out = kernels::maxpool(input, g, cache.argmax);
    cache_ = std::move(cache);
    return out;
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::backward(const BasicTensor<T>& grad_out) {
    if (!cache_) this->missing_cache();
    Cache cache = std::move(*cache_);
    cache_.reset();
    return kernels::maxpool_scatter(grad_out, cache.input_shape, cache.argmax);
}

template <typename T>
const std::vector<std::size_t>& MaxPool2D<T>::argmax() const {
    if (!cache_) this->missing_cache();
    return cache_->argmax;
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
Dense<T>::Dense(const LayerSpec& spec, std::size_t in_features)
    : Layer<T>(spec),
      in_features_(in_features),
      weights_{"weights", BasicTensor<T>({in_features, spec.out_features}),
               BasicTensor<T>({in_features, spec.out_features})},
      bias_{"bias", BasicTensor<T>({spec.out_features}), BasicTensor<T>({spec.out_features})} {
    spec.validate();
}

template <typename T>
BasicTensor<T> Dense<T>::infer(const BasicTensor<T>& input) const {
    if (input.rank() != 2 || input.dim(1) != in_features_) {
        throw DimensionError("Dense expects [N x " + std::to_string(in_features_) + "] input, got " +
                             to_string(input.shape()));
    }
    auto out = matmul(input, weights_.value);
    kernels::add_row_bias(out, bias_.value);
    return out;
}

template <typename T>
BasicTensor<T> Dense<T>::forward(const BasicTensor<T>& input, Mode mode) {
    auto out = infer(input);
    if (mode == Mode::train) cache_ = input;
    return out;
}

template <typename T>
BasicTensor<T> Dense<T>::backward(const BasicTensor<T>& grad_out) {
    if (!cache_) this->missing_cache();
    const BasicTensor<T> input = std::move(*cache_);
    cache_.reset();
    if (grad_out.rank() != 2 || grad_out.dim(0) != input.dim(0) || grad_out.dim(1) != this->spec_.out_features) {
        throw DimensionError("Dense gradient " + to_string(grad_out.shape()) + " does not match forward output");
    }
    weights_.grad = matmul_tn(input, grad_out);
    bias_.grad = kernels::column_sums(grad_out);
    return matmul_nt(grad_out, weights_.value);
}

// ---------------------------------------------------------------------------
// Dropout

template <typename T>
Dropout<T>::Dropout(const LayerSpec& spec, Rng rng) : Layer<T>(spec), rng_(std::move(rng)) {
    spec.validate();
}

template <typename T>
BasicTensor<T> Dropout<T>::forward(const BasicTensor<T>& input, Mode mode) {
    if (mode == Mode::infer) return input;
    const double keep = 1.0 - this->spec_.rate;
    const T scale = static_cast<T>(1.0 / keep);
    BasicTensor<T> mask(input.shape());
    for (auto& m : mask.data()) m = rng_.bernoulli(keep) ? scale : T{0};
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] * mask[i];
    cache_ = std::move(mask);
    return out;
}

template <typename T>
BasicTensor<T> Dropout<T>::backward(const BasicTensor<T>& grad_out) {
    if (!cache_) this->missing_cache();
    const BasicTensor<T> mask = std::move(*cache_);
    cache_.reset();
    if (mask.size() != grad_out.size()) throw DimensionError("Dropout gradient does not match cached mask");
    BasicTensor<T> grad(grad_out.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = grad_out[i] * mask[i];
    return grad;
}

// ---------------------------------------------------------------------------
// Flatten

template <typename T>
BasicTensor<T> Flatten<T>::infer(const BasicTensor<T>& input) const {
    if (input.rank() < 1) throw DimensionError("Flatten needs a batch axis");
    const std::size_t n = input.dim(0);
    return input.reshaped({n, n ? input.size() / n : 0});
}

template <typename T>
BasicTensor<T> Flatten<T>::forward(const BasicTensor<T>& input, Mode mode) {
    if (mode == Mode::train) cache_ = input.shape();
    return infer(input);
}

template <typename T>
BasicTensor<T> Flatten<T>::backward(const BasicTensor<T>& grad_out) {
    if (!cache_) this->missing_cache();
    Shape shape = std::move(*cache_);
    cache_.reset();
    return grad_out.reshaped(std::move(shape));
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
BasicTensor<T> ReLU<T>::infer(const BasicTensor<T>& input) const {
    return map_unary(input, [](T x) { return x > T{0} ? x : T{0}; });
}

template <typename T>
BasicTensor<T> ReLU<T>::forward(const BasicTensor<T>& input, Mode mode) {
    if (mode == Mode::train) cache_ = input;
    return infer(input);
}

template <typename T>
BasicTensor<T> ReLU<T>::backward(const BasicTensor<T>& grad_out) {
    if (!cache_) this->missing_cache();
    const BasicTensor<T> input = std::move(*cache_);
    cache_.reset();
    if (input.size() != grad_out.size()) throw DimensionError("ReLU gradient does not match cached input");
    BasicTensor<T> grad(grad_out.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = input[i] > T{0} ? grad_out[i] : T{0};
    return grad;
}

// ---------------------------------------------------------------------------
// Sigmoid

template <typename T>
BasicTensor<T> Sigmoid<T>::infer(const BasicTensor<T>& input) const {
    return map_unary(input, [](T x) { return sigmoid(x); });
}

template <typename T>
BasicTensor<T> Sigmoid<T>::forward(const BasicTensor<T>& input, Mode mode) {
    auto out = infer(input);
    if (mode == Mode::train) cache_ = out;
    return out;
}

template <typename T>
BasicTensor<T> Sigmoid<T>::backward(const BasicTensor<T>& grad_out) {
    if (!cache_) this->missing_cache();
    const BasicTensor<T> out = std::move(*cache_);
    cache_.reset();
    if (out.size() != grad_out.size()) throw DimensionError("Sigmoid gradient does not match cached output");
    BasicTensor<T> grad(grad_out.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = grad_out[i] * out[i] * (T{1} - out[i]);
    return grad;
}

// ---------------------------------------------------------------------------

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input_shape, Rng rng) {
    (void)spec.output_shape(input_shape);  // validates the chain
    switch (spec.kind) {
        case LayerKind::conv2d: return std::make_unique<Conv2D<T>>(spec, input_shape.at(2));
        case LayerKind::maxpool2d: return std::make_unique<MaxPool2D<T>>(spec);
        case LayerKind::dense: return std::make_unique<Dense<T>>(spec, input_shape.at(0));
        case LayerKind::dropout: return std::make_unique<Dropout<T>>(spec, std::move(rng));
        case LayerKind::flatten: return std::make_unique<Flatten<T>>();
        case LayerKind::relu: return std::make_unique<ReLU<T>>();
        case LayerKind::sigmoid: return std::make_unique<Sigmoid<T>>();
    }
    throw ConfigError("unknown layer kind");
}

template <typename T>
void he_uniform_init(Layer<T>& layer, Rng& rng) {
    auto params = layer.parameters();
    if (params.empty()) return;
    auto& w = params[0]->value;
    const std::size_t fan_in =
        layer.spec().kind == LayerKind::conv2d ? w.dim(1) * w.dim(2) * w.dim(3) : w.dim(0);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-limit, limit));
    for (std::size_t i = 1; i < params.size(); ++i) params[i]->value.fill(T{0});
}

#define AEDES_INSTANTIATE(T)                                                              \
    template class Layer<T>;                                                              \
    template class Conv2D<T>;                                                             \
    template class MaxPool2D<T>;                                                          \
    template class Dense<T>;                                                              \
    template class Dropout<T>;                                                            \
    template class Flatten<T>;                                                            \
    template class ReLU<T>;                                                               \
    template class Sigmoid<T>;                                                            \
    template std::unique_ptr<Layer<T>> make_layer<T>(const LayerSpec&, const Shape&, Rng); \
    template void he_uniform_init<T>(Layer<T>&, Rng&);

AEDES_INSTANTIATE(float)
AEDES_INSTANTIATE(double)

#undef AEDES_INSTANTIATE

}  // namespace aedes::nn
