#include "aedes/model.hpp"

#include <iomanip>
#include <sstream>

namespace aedes {

using nn::LayerKind;
using nn::LayerSpec;

std::vector<Shape> ModelSpec::layer_output_shapes() const {
    std::vector<Shape> shapes;
    shapes.reserve(layers.size());
    Shape current = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        try {
            current = layers[i].output_shape(current);
        } catch (const Error& e) {
            throw DimensionError("layer " + std::to_string(i) + " (" + nn::to_string(layers[i].kind) +
                                 ") does not chain from " + to_string(current) + ": " + e.what());
        }
        shapes.push_back(current);
    }
    return shapes;
}

void ModelSpec::validate() const {
    if (input_shape.size() != 3 || element_count(input_shape) == 0) {
        throw DimensionError("model input must be a non-empty HxWxC shape, got " + to_string(input_shape));
    }
    if (layers.empty()) throw ConfigError("model has no layers");
    const auto shapes = layer_output_shapes();
    if (layers.back().kind != LayerKind::sigmoid) throw ConfigError("model must end in a Sigmoid output");
    if (shapes.back() != Shape{1}) {
        throw DimensionError("model output must be a single unit, got " + to_string(shapes.back()));
    }
}

std::size_t ModelSpec::hidden_layer_count() const {
    std::size_t output_layers = 0;
    if (!layers.empty() && layers.back().kind == LayerKind::sigmoid) {
        output_layers = 1;
        if (layers.size() >= 2 && layers[layers.size() - 2].kind == LayerKind::dense) output_layers = 2;
    }
    return layers.size() - output_layers;
}

std::size_t ModelSpec::parameter_count() const {
    std::size_t total = 0;
    for (const auto& row : summarize(*this)) total += row.parameters;
    return total;
}

ModelSpec reference16(Shape input_shape, double conv_dropout, double dense_dropout) {
    ModelSpec spec;
    spec.name = "reference-16";
    spec.input_shape = std::move(input_shape);
    spec.layers = {
        LayerSpec::conv2d(16, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2),
        LayerSpec::conv2d(32, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2),
        LayerSpec::conv2d(64, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2),
        LayerSpec::conv2d(128, 3), LayerSpec::relu(), LayerSpec::dropout(conv_dropout),
        LayerSpec::flatten(), LayerSpec::dense(128), LayerSpec::relu(), LayerSpec::dropout(dense_dropout),
        LayerSpec::dense(1), LayerSpec::sigmoid(),
    };
    return spec;
}

std::vector<LayerSummary> summarize(const ModelSpec& spec) {
    const auto shapes = spec.layer_output_shapes();
    std::vector<LayerSummary> rows;
    Shape in = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        rows.push_back({nn::to_string(spec.layers[i].kind), shapes[i], spec.layers[i].parameter_count(in)});
        in = shapes[i];
    }
    return rows;
}

std::string model_summary(const ModelSpec& spec) {
    const auto rows = summarize(spec);
    std::ostringstream out;
    out << "Model: " << (spec.name.empty() ? "sequential" : spec.name) << "  input " << to_string(spec.input_shape)
        << '\n';
    out << std::left << std::setw(4) << "#" << std::setw(12) << "Layer" << std::setw(18) << "Output shape"
        << std::right << std::setw(12) << "Params" << '\n';
    out << std::string(46, '-') << '\n';
    std::size_t total = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << std::left << std::setw(4) << i << std::setw(12) << rows[i].kind << std::setw(18)
            << to_string(rows[i].output_shape) << std::right << std::setw(12) << rows[i].parameters << '\n';
        total += rows[i].parameters;
    }
    out << std::string(46, '-') << '\n';
    out << "Total trainable params: " << total << '\n';
    out << "Hidden layers: " << spec.hidden_layer_count() << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------

template <typename T>
Network<T>::Network(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    build(seed);
}

template <typename T>
void Network<T>::build(std::uint64_t seed) {
    spec_.validate();
    const Rng dropout_root = Rng(seed).substream("dropout");
    layers_.clear();
    Shape in = spec_.input_shape;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        layers_.push_back(nn::make_layer<T>(spec_.layers[i], in, dropout_root.substream(i)));
        in = spec_.layers[i].output_shape(in);
    }
}

template <typename T>
Network<T>::Network(const Network& other) : spec_(other.spec_) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
    if (this != &other) {
        Network copy(other);
        *this = std::move(copy);
    }
    return *this;
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
    const Rng root = Rng(seed).substream("init");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Rng rng = root.substream(i);
        nn::he_uniform_init(*layers_[i], rng);
    }
    reseed_dropout(seed);
}

template <typename T>
void Network<T>::reseed_dropout(std::uint64_t seed) {
    const Rng root = Rng(seed).substream("dropout");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (auto* d = dynamic_cast<nn::Dropout<T>*>(layers_[i].get())) d->reseed(root.substream(i));
    }
}

namespace {

void check_batch(const Shape& batch, const Shape& input_shape) {
    if (batch.size() != input_shape.size() + 1 || !std::equal(input_shape.begin(), input_shape.end(), batch.begin() + 1)) {
        throw DimensionError("network expects batches of " + to_string(input_shape) + ", got " + to_string(batch));
    }
}

}  // namespace

template <typename T>
BasicTensor<T> Network<T>::infer(const BasicTensor<T>& batch) const {
    check_batch(batch.shape(), spec_.input_shape);
    BasicTensor<T> x = batch;
    for (const auto& l : layers_) x = l->infer(x);
    return std::move(x).reshaped({batch.dim(0)});
}

template <typename T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& batch, nn::Mode mode) {
    check_batch(batch.shape(), spec_.input_shape);
    BasicTensor<T> x = batch;
    for (auto& l : layers_) x = l->forward(x, mode);
    return std::move(x).reshaped({batch.dim(0)});
}

template <typename T>
BasicTensor<T> Network<T>::backward(const BasicTensor<T>& grad_output) {
    BasicTensor<T> g = grad_output.reshaped({grad_output.size(), 1});
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
    return g;
}

template <typename T>
std::vector<nn::Parameter<T>*> Network<T>::parameters() {
    std::vector<nn::Parameter<T>*> out;
    for (auto& l : layers_)
        for (auto* p : l->parameters()) out.push_back(p);
    return out;
}

template <typename T>
std::vector<const nn::Parameter<T>*> Network<T>::parameters() const {
    std::vector<const nn::Parameter<T>*> out;
    for (const auto& l : layers_)
        for (const auto* p : static_cast<const nn::Layer<T>&>(*l).parameters()) out.push_back(p);
    return out;
}

template <typename To, typename From>
Network<To> convert_network(const Network<From>& src) {
    Network<To> dst(src.spec());
    auto out = dst.parameters();
    const auto in = src.parameters();
    for (std::size_t i = 0; i < in.size(); ++i) out[i]->value = in[i]->value.template cast<To>();
    return dst;
}

template class Network<float>;
template class Network<double>;
template Network<double> convert_network<double, float>(const Network<float>&);
template Network<float> convert_network<float, double>(const Network<double>&);
template Network<float> convert_network<float, float>(const Network<float>&);
template Network<double> convert_network<double, double>(const Network<double>&);

}  // namespace aedes
