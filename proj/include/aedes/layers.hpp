#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aedes/kernels.hpp"
#include "aedes/rng.hpp"
#include "aedes/tensor.hpp"

namespace aedes::nn {

using kernels::Padding;

enum class LayerKind : std::uint32_t {
    conv2d = 1,
    maxpool2d = 2,
    dense = 3,
    dropout = 4,
    flatten = 5,
    relu = 6,
    sigmoid = 7,
};

using aedes::to_string;
std::string to_string(LayerKind kind);

enum class Mode { train, infer };

/// Hyperparameters of one layer. Only the fields relevant to `kind` are used.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    Padding padding = Padding::valid;
    std::size_t window = 0;
    std::size_t out_features = 0;
    double rate = 0.0;

    static LayerSpec conv2d(std::size_t out_channels, std::size_t kernel, Padding padding = Padding::same,
                            std::size_t stride = 1);
    static LayerSpec maxpool2d(std::size_t window = 2, std::size_t stride = 0);
    static LayerSpec dense(std::size_t out_features);
    static LayerSpec dropout(double rate);
    static LayerSpec flatten();
    static LayerSpec relu();
    static LayerSpec sigmoid();

    void validate() const;
    /// Per-sample output shape for a per-sample input shape.
    Shape output_shape(const Shape& input) const;
    std::size_t parameter_count(const Shape& input) const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Numerically stable logistic function; exact 0 and 1 at -inf and +inf.
template <typename T>
T sigmoid(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <typename T>
struct Parameter {
    std::string name;
    BasicTensor<T> value;
    BasicTensor<T> grad;
};

/// One stage of a sequential network. Forward in training mode caches what
/// backward needs; backward consumes that cache exactly once. `infer` is
/// const and cache-free, so a shared network can serve concurrent requests.
template <typename T>
class Layer {
public:
    explicit Layer(LayerSpec spec) : spec_(spec) {}
    virtual ~Layer() = default;

    const LayerSpec& spec() const noexcept { return spec_; }

    virtual BasicTensor<T> infer(const BasicTensor<T>& input) const = 0;
    virtual BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) = 0;
    virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out) = 0;

    virtual std::vector<Parameter<T>*> parameters() { return {}; }
    virtual std::vector<const Parameter<T>*> parameters() const { return {}; }
    virtual bool has_cache() const = 0;

    virtual std::unique_ptr<Layer> clone() const = 0;

protected:
    [[noreturn]] void missing_cache() const;

    LayerSpec spec_;
};

template <typename T>
class Conv2D final : public Layer<T> {
public:
    Conv2D(const LayerSpec& spec, std::size_t in_channels);

    BasicTensor<T> infer(const BasicTensor<T>& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
    /// Returns grad_input; grad_weights and grad_bias land in parameters().
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

    std::vector<Parameter<T>*> parameters() override { return {&weights_, &bias_}; }
    std::vector<const Parameter<T>*> parameters() const override { return {&weights_, &bias_}; }
    bool has_cache() const override { return cache_.has_value(); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2D>(*this); }

    Parameter<T>& weights() { return weights_; }
    Parameter<T>& bias() { return bias_; }
    std::size_t in_channels() const { return in_channels_; }

private:
    struct Cache {
        kernels::ConvGeometry geometry;
        BasicTensor<T> cols;
    };

    BasicTensor<T> run(const BasicTensor<T>& input, Cache* cache) const;

    std::size_t in_channels_;
    Parameter<T> weights_;  // [out, in, kh, kw]
    Parameter<T> bias_;     // [out]
    std::optional<Cache> cache_;
};

template <typename T>
class MaxPool2D final : public Layer<T> {
public:
    explicit MaxPool2D(const LayerSpec& spec) : Layer<T>(spec) {}

    BasicTensor<T> infer(const BasicTensor<T>& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    bool has_cache() const override { return cache_.has_value(); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool2D>(*this); }

    /// Flat input index of the winning element for each output, from the
    /// last training-mode forward.
    const std::vector<std::size_t>& argmax() const;

private:
    struct Cache {
        Shape input_shape;
        std::vector<std::size_t> argmax;
    };
    std::optional<Cache> cache_;
};

template <typename T>
class Dense final : public Layer<T> {
public:
    Dense(const LayerSpec& spec, std::size_t in_features);

    BasicTensor<T> infer(const BasicTensor<T>& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

    std::vector<Parameter<T>*> parameters() override { return {&weights_, &bias_}; }
    std::vector<const Parameter<T>*> parameters() const override { return {&weights_, &bias_}; }
    bool has_cache() const override { return cache_.has_value(); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }

    Parameter<T>& weights() { return weights_; }
    Parameter<T>& bias() { return bias_; }

private:
    std::size_t in_features_;
    Parameter<T> weights_;  // [in, out]
    Parameter<T> bias_;     // [out]
    std::optional<BasicTensor<T>> cache_;
};

/// Inverted dropout. Masks come from the layer's own substream.
template <typename T>
class Dropout final : public Layer<T> {
public:
    Dropout(const LayerSpec& spec, Rng rng);

    BasicTensor<T> infer(const BasicTensor<T>& input) const override { return input; }
    BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    bool has_cache() const override { return cache_.has_value(); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }

    void reseed(Rng rng) { rng_ = std::move(rng); }

private:
    Rng rng_;
    std::optional<BasicTensor<T>> cache_;  // scaled keep mask
};

template <typename T>
class Flatten final : public Layer<T> {
public:
    Flatten() : Layer<T>(LayerSpec::flatten()) {}

    BasicTensor<T> infer(const BasicTensor<T>& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    bool has_cache() const override { return cache_.has_value(); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten>(*this); }

private:
    std::optional<Shape> cache_;
};

template <typename T>
class ReLU final : public Layer<T> {
public:
    ReLU() : Layer<T>(LayerSpec::relu()) {}

    BasicTensor<T> infer(const BasicTensor<T>& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
    /// Gradient passes where x > 0 only; the subgradient at 0 is 0.
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    bool has_cache() const override { return cache_.has_value(); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReLU>(*this); }

private:
    std::optional<BasicTensor<T>> cache_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
public:
    Sigmoid() : Layer<T>(LayerSpec::sigmoid()) {}

    BasicTensor<T> infer(const BasicTensor<T>& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    bool has_cache() const override { return cache_.has_value(); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Sigmoid>(*this); }

private:
    std::optional<BasicTensor<T>> cache_;  // forward output
};

/// Builds a layer for a per-sample input shape. Parameters start at zero;
/// call `he_uniform_init` to draw them.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input_shape, Rng rng);

/// He-uniform weights (limit sqrt(6 / fan_in)) and zero biases.
template <typename T>
void he_uniform_init(Layer<T>& layer, Rng& rng);

}  // namespace aedes::nn
