#include "aedes/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "aedes/kernels.hpp"

namespace aedes::train {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
    for (double r : {conv_dropout, dense_dropout})
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rates must lie in [0, 1)");
}

LossResult bce_loss(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("bce_loss: " + std::to_string(scores.size()) + " scores for " +
                             std::to_string(labels.size()) + " labels");
    }
    if (scores.empty()) throw ContractError("bce_loss needs at least one score");
    const double n = static_cast<double>(scores.size());
    LossResult r;
    r.grad.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double y = labels[i];
        if (y != 0.0 && y != 1.0) throw ContractError("bce_loss label must be 0 or 1, got " + std::to_string(y));
        const double p = std::clamp(scores[i], kScoreClamp, 1.0 - kScoreClamp);
        r.loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        r.grad[i] = (p - y) / (p * (1.0 - p) * n);
    }
    r.loss /= n;
    return r;
}

template <typename T>
void adam_step(BasicTensor<T>& param, const BasicTensor<T>& grad, AdamMoments<T>& moments, std::size_t t,
               const AdamConfig& c) {
    if (t < 1) throw ContractError("Adam step index starts at 1");
    if (moments.m.shape() != param.shape()) {
        if (moments.m.empty() && moments.v.empty()) {
            moments.m = BasicTensor<T>(param.shape());
            moments.v = BasicTensor<T>(param.shape());
        } else {
            throw DimensionError("Adam state " + to_string(moments.m.shape()) + " does not match parameter " +
                                 to_string(param.shape()));
        }
    }
    if (grad.shape() != param.shape()) {
        throw DimensionError("gradient " + to_string(grad.shape()) + " does not match parameter " +
                             to_string(param.shape()));
    }
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
    const T step = static_cast<T>(c.learning_rate / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(c.epsilon);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i];
        moments.m[i] = b1 * moments.m[i] + (T{1} - b1) * g;
        moments.v[i] = b2 * moments.v[i] + (T{1} - b2) * g * g;
        param[i] -= step * moments.m[i] / (std::sqrt(moments.v[i] * inv_bc2) + eps);
    }
}

template <typename T>
void AdamOptimizer<T>::step(const std::vector<nn::Parameter<T>*>& params) {
    if (moments_.empty()) moments_.resize(params.size());
    if (moments_.size() != params.size()) throw DimensionError("optimizer parameter list changed between steps");
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) adam_step(params[i]->value, params[i]->grad, moments_[i], t_, config_);
}

namespace {

template <typename T>
BasicTensor<T> gather_rows(const Tensor& images, const std::vector<std::size_t>& rows) {
    const std::size_t per = images.size() / images.dim(0);
    Shape shape = images.shape();
    shape[0] = rows.size();
    BasicTensor<T> out(shape);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const float* src = images.data().data() + rows[r] * per;
        T* dst = out.data().data() + r * per;
        for (std::size_t j = 0; j < per; ++j) dst[j] = static_cast<T>(src[j]);
    }
    return out;
}

class ThreadScope {
public:
    explicit ThreadScope(bool strict) : active_(strict) {
        if (active_) kernels::set_thread_count(1);
    }
    ~ThreadScope() {
        if (active_) kernels::set_thread_count(0);
    }
    ThreadScope(const ThreadScope&) = delete;
    ThreadScope& operator=(const ThreadScope&) = delete;

private:
    bool active_;
};

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

}  // namespace

template <typename T>
std::vector<double> predict(const Network<T>& network, const Tensor& images, std::size_t batch_size) {
    const std::size_t n = images.empty() ? 0 : images.dim(0);
    std::vector<double> scores;
    scores.reserve(n);
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < n; start += batch_size) {
        rows.resize(std::min(batch_size, n - start));
        std::iota(rows.begin(), rows.end(), start);
        const auto out = network.infer(gather_rows<T>(images, rows));
        for (T s : out.data()) scores.push_back(static_cast<double>(s));
    }
    return scores;
}

template <typename T>
std::vector<EpochMetrics> fit(Network<T>& network, const LabeledBatch& train, const LabeledBatch& validation,
                              const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (train.size() == 0) throw ConfigError("training split is empty");
    if (validation.size() == 0) throw ConfigError("validation split is empty");
    const bool has0 = std::find(train.labels.begin(), train.labels.end(), 0.0f) != train.labels.end();
    const bool has1 = std::find(train.labels.begin(), train.labels.end(), 1.0f) != train.labels.end();
    if (!has0 || !has1) throw ConfigError("training split must contain both classes");

    ThreadScope threads(config.strict);
    AdamOptimizer<T> optimizer(config.adam);
    const Rng shuffle_root = Rng(config.seed).substream("shuffle");
    const auto val_labels = to_double(validation.labels);

    std::vector<EpochMetrics> history;
    std::vector<std::size_t> order(train.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = shuffle_root.substream(epoch);
        shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(
                                                                    std::min(order.size(), start + config.batch_size)));
            const auto batch = gather_rows<T>(train.images, rows);
            const auto scores_t = network.forward(batch, nn::Mode::train);
            std::vector<double> scores(scores_t.data().begin(), scores_t.data().end());
            std::vector<double> labels;
            labels.reserve(rows.size());
            for (auto r : rows) labels.push_back(train.labels[r]);

            const auto loss = bce_loss(scores, labels);
            if (!std::isfinite(loss.loss)) {
                throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(batch_index + 1));
            }
            loss_sum += loss.loss * static_cast<double>(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) correct += decide(scores[i]) == static_cast<int>(labels[i]);

            BasicTensor<T> grad({rows.size()});
            for (std::size_t i = 0; i < rows.size(); ++i) grad[i] = static_cast<T>(loss.grad[i]);
            network.backward(grad);
            optimizer.step(network.parameters());
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(train.size());
        m.acc = static_cast<double>(correct) / static_cast<double>(train.size());
        const auto val_scores = predict(network, validation.images, config.batch_size);
        m.val_loss = bce_loss(val_scores, val_labels).loss;
        m.val_acc = evaluate_scores(val_scores, val_labels).accuracy;
        history.push_back(m);
        if (on_epoch) on_epoch(m);
    }
    return history;
}

LabeledBatch prepare(const imgpipe::Dataset& dataset, const std::vector<std::size_t>& indices,
                     const imgpipe::Preprocessing& prep) {
    if (indices.empty()) return {};
    return {prep.apply(imgpipe::stack_images(dataset, indices)), imgpipe::gather_labels(dataset, indices)};
}

TrainResult train(const ModelSpec& spec, const imgpipe::Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    spec.validate();
    const auto& split = dataset.split;
    if (split.train.empty() || split.validation.empty()) throw ConfigError("train and validation splits must be non-empty");
    if (!dataset.samples.empty() && dataset.samples.front().image.shape() != spec.input_shape) {
        throw DimensionError("dataset images " + to_string(dataset.samples.front().image.shape()) +
                             " do not match model input " + to_string(spec.input_shape));
    }

    TrainResult result;
    result.preprocessing = imgpipe::fit_preprocessing(imgpipe::stack_images(dataset, split.train), config.zca_epsilon,
                                                      config.zca_max_dimension);
    const auto train_batch = prepare(dataset, split.train, result.preprocessing);
    const auto val_batch = prepare(dataset, split.validation, result.preprocessing);

    if (config.precision == Precision::f64) {
        Network<double> net(spec, config.seed);
        net.initialize(config.seed);
        result.history = fit(net, train_batch, val_batch, config, on_epoch);
        result.network = convert_network<float>(net);
    } else {
        Network<float> net(spec, config.seed);
        net.initialize(config.seed);
        result.history = fit(net, train_batch, val_batch, config, on_epoch);
        result.network = std::move(net);
    }
    return result;
}

Evaluation evaluate_scores(std::span<const double> scores, std::span<const double> labels, double threshold) {
    if (scores.size() != labels.size()) throw DimensionError("evaluate: scores and labels differ in length");
    if (scores.empty()) throw ContractError("evaluate needs a non-empty sample set");
    Evaluation e;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int predicted = decide(scores[i], threshold);
        const int actual = labels[i] >= 0.5 ? 1 : 0;
        if (predicted == 1 && actual == 1) ++e.tp;
        else if (predicted == 0 && actual == 0) ++e.tn;
        else if (predicted == 1) ++e.fp;
        else ++e.fn;
    }
    e.accuracy = static_cast<double>(e.tp + e.tn) / static_cast<double>(e.total());
    return e;
}

template <typename T>
Evaluation evaluate(const Network<T>& network, const LabeledBatch& samples, double threshold) {
    if (samples.size() == 0) throw ContractError("evaluate needs a non-empty sample set");
    const auto scores = predict(network, samples.images);
    return evaluate_scores(scores, to_double(samples.labels), threshold);
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
    std::string out = "epoch,train_loss,acc,val_loss,val_acc\n";
    char line[160];
    for (const auto& m : history) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.train_loss, m.acc, m.val_loss,
                      m.val_acc);
        out += line;
    }
    return out;
}

std::string metrics_json(const std::vector<EpochMetrics>& history) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& m : history) {
        j.push_back({{"epoch", m.epoch},
                     {"train_loss", m.train_loss},
                     {"acc", m.acc},
                     {"val_loss", m.val_loss},
                     {"val_acc", m.val_acc}});
    }
    return j.dump(2) + "\n";
}

#define AEDES_INSTANTIATE(T)                                                                                     \
    template void adam_step<T>(BasicTensor<T>&, const BasicTensor<T>&, AdamMoments<T>&, std::size_t,            \
                               const AdamConfig&);                                                              \
    template class AdamOptimizer<T>;                                                                            \
    template std::vector<EpochMetrics> fit<T>(Network<T>&, const LabeledBatch&, const LabeledBatch&,            \
                                              const TrainConfig&, const EpochCallback&);                        \
    template std::vector<double> predict<T>(const Network<T>&, const Tensor&, std::size_t);                     \
    template Evaluation evaluate<T>(const Network<T>&, const LabeledBatch&, double);

AEDES_INSTANTIATE(float)
AEDES_INSTANTIATE(double)

#undef AEDES_INSTANTIATE

}  // namespace aedes::train
