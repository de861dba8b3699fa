#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aedes/dataset.hpp"
#include "aedes/model.hpp"
#include "aedes/preprocess.hpp"

namespace aedes::train {

inline constexpr double kDecisionThreshold = 0.5;
inline constexpr double kScoreClamp = 1e-7;

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    AdamConfig adam;
    std::uint64_t seed = 0;
    Precision precision = Precision::f32;
    double conv_dropout = 0.2;
    double dense_dropout = 0.5;
    imgpipe::SplitRatios split;
    std::optional<double> zca_epsilon;  // ZCA off unless set
    std::size_t zca_max_dimension = imgpipe::kZcaMaxDimension;
    bool strict = false;  // single-threaded kernels

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;  // d(loss)/d(score)
};

/// Mean binary cross-entropy over scores clamped to [1e-7, 1 - 1e-7].
/// Labels must be exactly 0 or 1.
LossResult bce_loss(std::span<const double> scores, std::span<const double> labels);

template <typename T>
struct AdamMoments {
    BasicTensor<T> m;
    BasicTensor<T> v;
};

/// One bias-corrected Adam update of `param` in place; `t` starts at 1.
template <typename T>
void adam_step(BasicTensor<T>& param, const BasicTensor<T>& grad, AdamMoments<T>& moments, std::size_t t,
               const AdamConfig& config);

/// Adam over every parameter of a network.
template <typename T>
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig config) : config_(config) {}

    void step(const std::vector<nn::Parameter<T>*>& params);
    std::size_t steps() const noexcept { return t_; }

private:
    AdamConfig config_;
    std::size_t t_ = 0;
    std::vector<AdamMoments<T>> moments_;
};

/// Preprocessed tensors for one split.
struct LabeledBatch {
    Tensor images;  // N x H x W x C
    std::vector<float> labels;

    std::size_t size() const noexcept { return labels.size(); }
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// The inner loop: shuffles the training set per epoch from a substream of
/// config.seed, runs forward -> loss -> backward -> Adam over mini-batches,
/// and records training and validation metrics at threshold 0.5.
template <typename T>
std::vector<EpochMetrics> fit(Network<T>& network, const LabeledBatch& train, const LabeledBatch& validation,
                              const TrainConfig& config, const EpochCallback& on_epoch = {});

struct TrainResult {
    Network<float> network;
    imgpipe::Preprocessing preprocessing;
    std::vector<EpochMetrics> history;
};

/// Fits preprocessing on the training split, builds and initializes the
/// network from `spec`, and runs `fit` in the configured precision.
TrainResult train(const ModelSpec& spec, const imgpipe::Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Applies preprocessing to the listed samples.
LabeledBatch prepare(const imgpipe::Dataset& dataset, const std::vector<std::size_t>& indices,
                     const imgpipe::Preprocessing& prep);

/// Predicted class for a score: 1 iff score >= threshold.
inline int decide(double score, double threshold = kDecisionThreshold) { return score >= threshold ? 1 : 0; }

struct Evaluation {
    double accuracy = 0.0;
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::size_t total() const noexcept { return tp + tn + fp + fn; }
};

/// Confusion counts with class 1 as positive.
Evaluation evaluate_scores(std::span<const double> scores, std::span<const double> labels,
                           double threshold = kDecisionThreshold);

/// Scores a preprocessed batch, in chunks of `batch_size`.
template <typename T>
std::vector<double> predict(const Network<T>& network, const Tensor& images, std::size_t batch_size = 64);

template <typename T>
Evaluation evaluate(const Network<T>& network, const LabeledBatch& samples, double threshold = kDecisionThreshold);

std::string metrics_csv(const std::vector<EpochMetrics>& history);
std::string metrics_json(const std::vector<EpochMetrics>& history);

}  // namespace aedes::train
