#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "aedes/dataset.hpp"
#include "aedes/model.hpp"
#include "aedes/modelfmt.hpp"
#include "aedes/service.hpp"

namespace aedes::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::string read_text(const std::filesystem::path& path);

/// Conv(4)-ReLU-Pool-Flatten-Dense(1)-Sigmoid on HxWx3 input.
ModelSpec tiny_spec(std::size_t height = 16, std::size_t width = 16);

/// Initialized network plus preprocessing fitted on synthetic images.
modelfmt::ModelArtifact tiny_artifact(std::uint64_t seed, std::size_t height = 16, std::size_t width = 16,
                                      bool with_zca = false);

/// Output layer zeroed, so every input scores sigmoid(0) = 0.5 exactly.
modelfmt::ModelArtifact boundary_artifact(std::size_t height = 16, std::size_t width = 16);

/// Writes `count` PNG/JPEG fixture images (alternating) and returns their paths.
std::vector<std::filesystem::path> write_fixture_images(const std::filesystem::path& dir, std::size_t count,
                                                        std::uint64_t seed, std::size_t size = 24);

struct GradCheck {
    std::size_t probes = 0;
    double max_rel_error = 0.0;
};

/// Relative error with a floor on the denominator for near-zero gradients.
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Central differences (step 1e-5) of L = sum(c * layer(x)) for random c,
/// against the layer's backward pass. Probes `probes` random parameter
/// elements and `probes` random input elements.
GradCheck check_layer_gradients(nn::Layer<double>& layer, const Tensor64& input, std::size_t probes,
                                std::uint64_t seed);

/// Same for a whole network under the mean BCE loss.
GradCheck check_network_gradients(Network<double>& network, const Tensor64& input,
                                  const std::vector<double>& labels, std::size_t probes, std::uint64_t seed);

/// Conv(2,3x3,same)-ReLU-Pool-Flatten-Dense(1)-Sigmoid on 6x6x2.
ModelSpec micro_spec();

/// Server on a free loopback port, serving from a background thread.
class RunningServer {
public:
    RunningServer(std::shared_ptr<const service::Classifier> classifier, service::ServiceConfig config = {});
    ~RunningServer();
    int port() const noexcept { return port_; }

private:
    std::unique_ptr<service::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

Tensor64 random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace aedes::testing
