#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "aedes/image.hpp"
#include "aedes/preprocess.hpp"
#include "aedes/train.hpp"

namespace aedes::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("aedes-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelSpec tiny_spec(std::size_t height, std::size_t width) {
    using nn::LayerSpec;
    ModelSpec spec;
    spec.name = "tiny";
    spec.input_shape = {height, width, 3};
    spec.layers = {LayerSpec::conv2d(4, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2), LayerSpec::flatten(),
                   LayerSpec::dense(1), LayerSpec::sigmoid()};
    return spec;
}

modelfmt::ModelArtifact tiny_artifact(std::uint64_t seed, std::size_t height, std::size_t width, bool with_zca) {
    modelfmt::ModelArtifact art;
    art.network = Network<float>(tiny_spec(height, width), seed);
    art.network.initialize(seed);
    const auto ds = imgpipe::generate_synthetic_dataset(8, height, width, Rng(seed));
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    art.preprocessing = imgpipe::fit_preprocessing(imgpipe::stack_images(ds, all),
                                                   with_zca ? std::optional<double>(1e-2) : std::nullopt);
    art.metadata.class_names = imgpipe::kSpeciesNames;
    art.metadata.input_shape = {height, width, 3};
    art.metadata.threshold = train::kDecisionThreshold;
    art.metadata.model_version = "tiny/seed-" + std::to_string(seed);
    art.metadata.training_seed = seed;
    return art;
}

modelfmt::ModelArtifact boundary_artifact(std::size_t height, std::size_t width) {
    auto art = tiny_artifact(1, height, width);
    for (auto* p : art.network.parameters()) {
        if (p->value.rank() == 2 || (p->value.rank() == 1 && p->value.size() == 1)) p->value.fill(0.0f);
    }
    art.metadata.model_version = "boundary";
    return art;
}

std::vector<fs::path> write_fixture_images(const fs::path& dir, std::size_t count, std::uint64_t seed,
                                           std::size_t size) {
    fs::create_directories(dir);
    const auto ds = imgpipe::generate_synthetic_dataset((count + 1) / 2, size, size, Rng(seed));
    std::vector<fs::path> paths;
    for (std::size_t i = 0; i < count; ++i) {
        const auto img = imgpipe::to_image8(ds.samples[i].image);
        const bool png = i % 2 == 0;
        const auto bytes = png ? imgpipe::encode_png(img) : imgpipe::encode_jpeg(img);
        char name[48];
        std::snprintf(name, sizeof name, "fixture-%02zu.%s", i, png ? "png" : "jpg");
        paths.push_back(dir / name);
        imgpipe::write_file(paths.back(), bytes);
    }
    return paths;
}

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

Tensor64 random_tensor(const Shape& shape, std::uint64_t seed, double lo, double hi) {
    Tensor64 t(shape);
    Rng rng(seed);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

namespace {

constexpr double kStep = 1e-5;

struct Probe {
    double* value;
    double analytic;
};

// Picks `probes` elements uniformly over the concatenation of `tensors`.
void pick(std::vector<Probe>& out, const std::vector<std::pair<Tensor64*, const Tensor64*>>& tensors,
          std::size_t probes, Rng& rng) {
    std::size_t total = 0;
    for (const auto& [v, g] : tensors) total += v->size();
    if (total == 0) return;
    for (std::size_t k = 0; k < probes; ++k) {
        std::size_t flat = rng.below(total);
        for (const auto& [v, g] : tensors) {
            if (flat < v->size()) {
                out.push_back({&(*v)[flat], (*g)[flat]});
                break;
            }
            flat -= v->size();
        }
    }
}

template <typename Loss>
GradCheck run_probes(const std::vector<Probe>& probes, Loss&& loss) {
    GradCheck r;
    for (const auto& p : probes) {
        const double saved = *p.value;
        *p.value = saved + kStep;
        const double up = loss();
        *p.value = saved - kStep;
        const double down = loss();
        *p.value = saved;
        const double numeric = (up - down) / (2.0 * kStep);
        r.max_rel_error = std::max(r.max_rel_error, relative_error(p.analytic, numeric));
        ++r.probes;
    }
    return r;
}

}  // namespace

GradCheck check_layer_gradients(nn::Layer<double>& layer, const Tensor64& input, std::size_t probes,
                                std::uint64_t seed) {
    Rng rng(seed);
    Tensor64 x = input;
    const auto y = layer.forward(x, nn::Mode::train);
    Tensor64 coeff(y.shape());
    for (auto& c : coeff.data()) c = rng.uniform(-1.0, 1.0);
    const auto grad_in = layer.backward(coeff);

    std::vector<std::pair<Tensor64*, const Tensor64*>> params;
    for (auto* p : layer.parameters()) params.emplace_back(&p->value, &p->grad);
    std::vector<Probe> list;
    pick(list, params, probes, rng);
    pick(list, {{&x, &grad_in}}, probes, rng);

    return run_probes(list, [&] {
        const auto out = layer.infer(x);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += coeff[i] * out[i];
        return s;
    });
}

GradCheck check_network_gradients(Network<double>& network, const Tensor64& input, const std::vector<double>& labels,
                                  std::size_t probes, std::uint64_t seed) {
    Rng rng(seed);
    Tensor64 x = input;
    const auto scores = network.forward(x, nn::Mode::train);
    const auto loss = train::bce_loss(std::vector<double>(scores.data().begin(), scores.data().end()), labels);
    const auto grad_in = network.backward(Tensor64({labels.size()}, loss.grad));

    std::vector<std::pair<Tensor64*, const Tensor64*>> params;
    for (auto* p : network.parameters()) params.emplace_back(&p->value, &p->grad);
    std::vector<Probe> list;
    pick(list, params, probes, rng);
    pick(list, {{&x, &grad_in}}, probes, rng);

    return run_probes(list, [&] {
        const auto s = network.infer(x);
        return train::bce_loss(std::vector<double>(s.data().begin(), s.data().end()), labels).loss;
    });
}

RunningServer::RunningServer(std::shared_ptr<const service::Classifier> classifier, service::ServiceConfig config) {
    config.host = "127.0.0.1";
    config.port = 0;
    server_ = std::make_unique<service::Server>(std::move(classifier), std::move(config));
    port_ = server_->bind();
    thread_ = std::thread([this] { server_->run(); });
}

RunningServer::~RunningServer() {
    while (!server_->running()) std::this_thread::yield();
    server_->stop();
    thread_.join();
}

ModelSpec micro_spec() {
    using nn::LayerSpec;
    ModelSpec spec;
    spec.name = "micro";
    spec.input_shape = {6, 6, 2};
    spec.layers = {LayerSpec::conv2d(2, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2), LayerSpec::flatten(),
                   LayerSpec::dense(1), LayerSpec::sigmoid()};
    return spec;
}

}  // namespace aedes::testing
