#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aedes/layers.hpp"

namespace aedes {

/// Default input shape, (height, width, channels).
inline const Shape kDefaultInputShape{180, 180, 3};

struct ModelSpec {
    std::string name;
    Shape input_shape = kDefaultInputShape;
    std::vector<nn::LayerSpec> layers;

    /// Per-sample output shape after each layer. Throws DimensionError naming
    /// the first layer that does not chain.
    std::vector<Shape> layer_output_shapes() const;

    /// Checks the chain and that the network ends in a single sigmoid unit.
    void validate() const;

    /// Layers between input and output. The output layer is the trailing
    /// Dense(1) + Sigmoid pair.
    std::size_t hidden_layer_count() const;

    std::size_t parameter_count() const;
};

/// Conv(16)-ReLU-Pool-Conv(32)-ReLU-Pool-Conv(64)-ReLU-Pool-Conv(128)-ReLU-
/// Dropout-Flatten-Dense(128)-ReLU-Dropout: sixteen hidden layers, followed
/// by Dense(1) and Sigmoid.
ModelSpec reference16(Shape input_shape = kDefaultInputShape, double conv_dropout = 0.2,
                      double dense_dropout = 0.5);

struct LayerSummary {
    std::string kind;
    Shape output_shape;
    std::size_t parameters = 0;
};

std::vector<LayerSummary> summarize(const ModelSpec& spec);

/// Text table: one row per layer plus a total-parameters footer.
std::string model_summary(const ModelSpec& spec);

/// Sequential network over batched NHWC tensors.
template <typename T>
class Network {
public:
    Network() = default;
    /// Builds layers with zero parameters. Dropout layers draw masks from
    /// substreams of `seed`.
    explicit Network(ModelSpec spec, std::uint64_t seed = 0);

    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    /// He-uniform weights from per-layer substreams of `seed`.
    void initialize(std::uint64_t seed);

    const ModelSpec& spec() const noexcept { return spec_; }
    std::size_t size() const noexcept { return layers_.size(); }
    nn::Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
    const nn::Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

    /// Thread-safe inference; returns one score per batch row.
    BasicTensor<T> infer(const BasicTensor<T>& batch) const;
    BasicTensor<T> forward(const BasicTensor<T>& batch, nn::Mode mode);
    /// Backpropagates d(loss)/d(output) and fills every parameter gradient.
    BasicTensor<T> backward(const BasicTensor<T>& grad_output);

    std::vector<nn::Parameter<T>*> parameters();
    std::vector<const nn::Parameter<T>*> parameters() const;

    /// Re-seeds dropout substreams (used when a loaded model is trained further).
    void reseed_dropout(std::uint64_t seed);

private:
    void build(std::uint64_t seed);

    ModelSpec spec_;
    std::vector<std::unique_ptr<nn::Layer<T>>> layers_;
};

/// Copies parameters between precisions; specs must match.
template <typename To, typename From>
Network<To> convert_network(const Network<From>& src);

}  // namespace aedes
