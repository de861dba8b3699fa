#pragma once

#include <optional>
#include <span>
#include <vector>

#include "aedes/tensor.hpp"

namespace aedes::imgpipe {

/// Per-channel statistics of the training split.
struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> std;

    friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

/// Fits mean and population std per channel over an [N x H x W x C] (or any
/// [..., C]) tensor, accumulating in double.
ChannelStats fit_channel_stats(const Tensor& images);

/// (x - mean) / std per channel, last axis = channel. A zero std is replaced
/// by 1 with a warning.
Tensor normalize(const Tensor& images, const ChannelStats& stats);

inline constexpr double kZcaEpsilon = 1e-6;
inline constexpr std::size_t kZcaMaxDimension = 4096;

struct ZcaTransform {
    std::vector<double> mean;       // d
    std::vector<double> whitening;  // d x d, row-major, symmetric
    double epsilon = kZcaEpsilon;

    std::size_t dimension() const noexcept { return mean.size(); }

    friend bool operator==(const ZcaTransform&, const ZcaTransform&) = default;
};

/// Fits W = E diag(1/sqrt(lambda + eps)) E^T from the eigendecomposition of
/// the centered covariance (1/N) X^T X. `data` is [N x d].
ZcaTransform zca_fit(const Tensor64& data, double epsilon = kZcaEpsilon,
                     std::size_t max_dimension = kZcaMaxDimension);

/// W (x - mean) for one flattened vector.
std::vector<double> zca_apply(const ZcaTransform& zca, std::span<const double> x);

/// Applies to every row of an [N x d] matrix.
Tensor64 zca_apply(const ZcaTransform& zca, const Tensor64& data);

/// Preprocessing fitted on the training split and persisted with the model:
/// per-channel normalization, then optional ZCA on the flattened image.
struct Preprocessing {
    ChannelStats stats;
    std::optional<ZcaTransform> zca;

    /// Applies to a batch [N x H x W x C] of rescaled images.
    Tensor apply(const Tensor& batch) const;

    friend bool operator==(const Preprocessing&, const Preprocessing&) = default;
};

/// Fits normalization on `train_batch`; when `zca_epsilon` is set, also fits
/// ZCA on the normalized, flattened images.
Preprocessing fit_preprocessing(const Tensor& train_batch, std::optional<double> zca_epsilon,
                                std::size_t zca_max_dimension = kZcaMaxDimension);

}  // namespace aedes::imgpipe
