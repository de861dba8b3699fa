#include "aedes/preprocess.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace aedes::imgpipe {

ChannelStats fit_channel_stats(const Tensor& images) {
    if (images.rank() < 1 || images.empty()) throw DataError("cannot fit channel statistics on an empty tensor");
    const std::size_t channels = images.shape().back();
    const std::size_t count = images.size() / channels;
    std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t c = 0; c < channels; ++c) sum[c] += images[i * channels + c];
    ChannelStats stats;
    stats.mean.resize(channels);
    stats.std.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) sum[c] /= static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t c = 0; c < channels; ++c) {
            const double d = images[i * channels + c] - sum[c];
            sq[c] += d * d;
        }
    for (std::size_t c = 0; c < channels; ++c) {
        stats.mean[c] = static_cast<float>(sum[c]);
        stats.std[c] = static_cast<float>(std::sqrt(sq[c] / static_cast<double>(count)));
    }
    return stats;
}

Tensor normalize(const Tensor& images, const ChannelStats& stats) {
    const std::size_t channels = stats.mean.size();
    if (images.rank() < 1 || images.shape().back() != channels || stats.std.size() != channels) {
        throw DimensionError("normalize: statistics for " + std::to_string(channels) +
                             " channels do not fit tensor " + to_string(images.shape()));
    }
    std::vector<float> divisor(stats.std);
    for (std::size_t c = 0; c < channels; ++c) {
        if (!(divisor[c] > 0.0f)) {
            warn("channel " + std::to_string(c) + " has zero standard deviation; dividing by 1");
            divisor[c] = 1.0f;
        }
    }
    Tensor out(images.shape());
    const std::size_t count = images.size() / std::max<std::size_t>(channels, 1);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t c = 0; c < channels; ++c)
            out[i * channels + c] = (images[i * channels + c] - stats.mean[c]) / divisor[c];
    return out;
}

ZcaTransform zca_fit(const Tensor64& data, double epsilon, std::size_t max_dimension) {
    if (data.rank() != 2) throw DimensionError("zca_fit expects an [N x d] matrix, got " + to_string(data.shape()));
    const std::size_t n = data.dim(0), d = data.dim(1);
    if (n < 2) throw DataError("zca_fit needs at least 2 samples, got " + std::to_string(n));
    if (d == 0) throw DimensionError("zca_fit needs at least one feature");
    if (d > max_dimension) {
        throw ConfigError("ZCA dimension " + std::to_string(d) + " exceeds the cap of " + std::to_string(max_dimension) +
                          "; use smaller images or raise the cap");
    }
    if (!(epsilon >= 0.0)) throw ConfigError("ZCA epsilon must be non-negative");

    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMatrix> x(data.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const RowMatrix centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("ZCA eigendecomposition did not converge");
    const Eigen::VectorXd lambda = solver.eigenvalues().cwiseMax(0.0);
    const Eigen::VectorXd scale = (lambda.array() + epsilon).sqrt().inverse().matrix();
    const Eigen::MatrixXd& e = solver.eigenvectors();
    Eigen::MatrixXd w = e * scale.asDiagonal() * e.transpose();
    w = 0.5 * (w + w.transpose());  // exact symmetry

    ZcaTransform zca;
    zca.epsilon = epsilon;
    zca.mean.assign(mean.data(), mean.data() + d);
    zca.whitening.resize(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            zca.whitening[i * d + j] = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return zca;
}

std::vector<double> zca_apply(const ZcaTransform& zca, std::span<const double> x) {
    const std::size_t d = zca.dimension();
    if (x.size() != d) {
        throw DimensionError("zca_apply: vector of length " + std::to_string(x.size()) + " for a transform of dimension " +
                             std::to_string(d));
    }
    std::vector<double> centered(d), out(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) centered[j] = x[j] - zca.mean[j];
    for (std::size_t i = 0; i < d; ++i) {
        const double* row = zca.whitening.data() + i * d;
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += row[j] * centered[j];
        out[i] = acc;
    }
    return out;
}

Tensor64 zca_apply(const ZcaTransform& zca, const Tensor64& data) {
    if (data.rank() != 2) throw DimensionError("zca_apply expects an [N x d] matrix");
    const std::size_t n = data.dim(0), d = data.dim(1);
    Tensor64 out({n, zca.dimension()});
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = zca_apply(zca, data.data().subspan(i * d, d));
        std::copy(row.begin(), row.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * zca.dimension()));
    }
    return out;
}

Tensor Preprocessing::apply(const Tensor& batch) const {
    Tensor out = normalize(batch, stats);
    if (!zca) return out;
    const std::size_t n = batch.dim(0);
    const std::size_t d = n ? batch.size() / n : 0;
    std::vector<double> row(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) row[j] = out[i * d + j];
        const auto white = zca_apply(*zca, row);
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = static_cast<float>(white[j]);
    }
    return out;
}

Preprocessing fit_preprocessing(const Tensor& train_batch, std::optional<double> zca_epsilon,
                                std::size_t zca_max_dimension) {
    Preprocessing prep;
    prep.stats = fit_channel_stats(train_batch);
    if (zca_epsilon) {
        const Tensor normalized = normalize(train_batch, prep.stats);
        const std::size_t n = train_batch.dim(0);
        const std::size_t d = train_batch.size() / n;
        if (d > zca_max_dimension) {
            throw ConfigError("ZCA dimension " + std::to_string(d) + " exceeds the cap of " +
                              std::to_string(zca_max_dimension) + "; use smaller images or raise the cap");
        }
        prep.zca = zca_fit(normalized.cast<double>().reshaped({n, d}), *zca_epsilon, zca_max_dimension);
    }
    return prep;
}

}  // namespace aedes::imgpipe
