// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "aedes/cli.hpp"
#include "aedes/image.hpp"
#include "aedes/kernels.hpp"
#include "aedes/preprocess.hpp"
#include "aedes/reference.hpp"
#include "aedes/train.hpp"
#include "support.hpp"

using namespace aedes;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Synthetic 800/200 split at 64x64, seed 7, reference-16, 15 epochs.
Outcome synthetic_accuracy() {
    const auto start = std::chrono::steady_clock::now();
    auto ds = imgpipe::generate_synthetic_dataset(500, 64, 64, Rng(7));
    ds.split = imgpipe::make_split(ds.samples, {0.8, 0.2, 0.0}, 7);
    train::TrainConfig cfg;
    cfg.epochs = 15;
    cfg.seed = 7;
    double best = 0.0;
    std::size_t best_epoch = 0;
    const auto result = train::train(reference16({64, 64, 3}), ds, cfg, [&](const train::EpochMetrics& m) {
        std::fprintf(stderr, "  epoch %2zu  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f\n", m.epoch,
                     m.train_loss, m.acc, m.val_loss, m.val_acc);
        if (m.val_acc > best) best = m.val_acc, best_epoch = m.epoch;
    });
    const double wall = seconds_since(start);
    const bool sizes = ds.split.train.size() == 800 && ds.split.validation.size() == 200;
    return {sizes && result.history.size() == 15 && best >= 0.95 && wall < 600.0,
            fmt("train=%zu val=%zu best val_acc=%.4f at epoch %zu, final %.4f, wall %.1fs", ds.split.train.size(),
                ds.split.validation.size(), best, best_epoch, result.history.back().val_acc, wall)};
}

Outcome gradient_checks() {
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::size_t min_probes = std::numeric_limits<std::size_t>::max();
    auto record = [&](const testing::GradCheck& r) {
        worst = std::max(worst, r.max_rel_error);
        min_probes = std::min(min_probes, r.probes);
    };
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(seed);
        nn::Conv2D<double> conv(nn::LayerSpec::conv2d(3, 3, seed % 2 ? nn::Padding::valid : nn::Padding::same), 2);
        nn::he_uniform_init(conv, rng);
        record(testing::check_layer_gradients(conv, testing::random_tensor({2, 6, 5, 2}, seed + 10), 100, seed));

        nn::Dense<double> dense(nn::LayerSpec::dense(4), 5);
        nn::he_uniform_init(dense, rng);
        record(testing::check_layer_gradients(dense, testing::random_tensor({3, 5}, seed + 20), 100, seed));

        Network<double> micro(testing::micro_spec(), seed);
        micro.initialize(seed);
        record(testing::check_network_gradients(micro, testing::random_tensor({3, 6, 6, 2}, seed + 30),
                                                {0.0, 1.0, 1.0}, 100, seed));
    }
    const double wall = seconds_since(start);
    return {worst < 1e-4 && min_probes >= 100 && wall < 60.0,
            fmt("conv, dense, micro-model x3 seeds: max rel err %.3g, >=%zu probes each, %.2fs", worst, min_probes,
                wall)};
}

Outcome oracle_equivalence() {
    double conv_err = 0.0, pool_err = 0.0, dense_err = 0.0;
    bool mass_exact = true;
    for (std::uint64_t s = 0; s < 50; ++s) {
        Rng rng(1000 + s);
        const std::size_t n = 1 + rng.below(3), h = 2 + rng.below(11), w = 2 + rng.below(11);
        const std::size_t cin = 1 + rng.below(4), cout = 1 + rng.below(6);
        const std::size_t k = 1 + rng.below(std::min<std::uint64_t>(3, std::min(h, w)));
        const std::size_t stride = 1 + rng.below(2);
        const auto pad = rng.below(2) ? nn::Padding::same : nn::Padding::valid;

        nn::Conv2D<float> conv(nn::LayerSpec::conv2d(cout, k, pad, stride), cin);
        nn::he_uniform_init(conv, rng);
        conv.bias().value = testing::random_tensor({cout}, s + 1).cast<float>();
        const auto x = testing::random_tensor({n, h, w, cin}, s + 2).cast<float>();
        const auto fast = conv.infer(x);
        const auto ref = reference::conv2d(x, conv.weights().value, conv.bias().value, stride, pad);
        if (fast.shape() != ref.shape()) return {false, "conv shape mismatch " + to_string(fast.shape())};
        for (std::size_t i = 0; i < ref.size(); ++i) conv_err = std::max(conv_err, double(std::abs(fast[i] - ref[i])));

        const std::size_t window = 2 + rng.below(std::min<std::uint64_t>(2, std::min(h, w) - 1));
        nn::MaxPool2D<float> pool(nn::LayerSpec::maxpool2d(window));
        const auto pf = pool.forward(x, nn::Mode::train);
        std::vector<std::size_t> ref_arg;
        const auto pr = reference::maxpool(x, window, window, &ref_arg);
        if (pf.shape() != pr.shape() || pool.argmax() != ref_arg) return {false, "pool argmax mismatch"};
        for (std::size_t i = 0; i < pr.size(); ++i) pool_err = std::max(pool_err, double(std::abs(pf[i] - pr[i])));
        // Integer-valued upstream gradients: every window routes its value to one cell.
        Tensor g(pf.shape());
        for (auto& v : g.data()) v = static_cast<float>(1 + rng.below(9));
        const auto gx = pool.backward(g);
        double in_sum = 0, out_sum = 0;
        for (float v : gx.data()) in_sum += v;
        for (float v : g.data()) out_sum += v;
        for (std::size_t i = 0; i < g.size(); ++i) mass_exact &= gx[ref_arg[i]] == g[i];
        mass_exact &= in_sum == out_sum;

        const std::size_t in = 1 + rng.below(40), out = 1 + rng.below(20);
        nn::Dense<float> dense(nn::LayerSpec::dense(out), in);
        nn::he_uniform_init(dense, rng);
        dense.bias().value = testing::random_tensor({out}, s + 3).cast<float>();
        const auto dx = testing::random_tensor({n, in}, s + 4).cast<float>();
        const auto df = dense.infer(dx);
        const auto dr = reference::dense(dx, dense.weights().value, dense.bias().value);
        for (std::size_t i = 0; i < dr.size(); ++i) dense_err = std::max(dense_err, double(std::abs(df[i] - dr[i])));
    }
    return {conv_err <= 1e-6 && pool_err <= 1e-6 && dense_err <= 1e-6 && mass_exact,
            fmt("50 shapes: max |diff| conv %.3g, pool %.3g, dense %.3g; pool backward mass %s", conv_err, pool_err,
                dense_err, mass_exact ? "exact" : "NOT exact")};
}

Outcome sigmoid_conformance() {
    const bool half = nn::sigmoid(0.0) == 0.5 && nn::sigmoid(0.0f) == 0.5f;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double x = -50.0 + 100.0 * i / 999.0;
        worst = std::max(worst, std::abs(nn::sigmoid(x) + nn::sigmoid(-x) - 1.0));
    }
    bool finite = true;
    for (double x = -1e4; x <= 1e4; x += 0.5) {
        const double d = nn::sigmoid(x);
        const float f = nn::sigmoid(static_cast<float>(x));
        finite &= std::isfinite(d) && std::isfinite(f) && d >= 0.0 && d <= 1.0 && f >= 0.0f && f <= 1.0f;
    }
    nn::Sigmoid<float> layer;
    const auto big = layer.infer(Tensor({2}, {-1e4f, 1e4f}));
    finite &= big[0] == 0.0f && big[1] == 1.0f;
    return {half && worst <= 1e-12 && finite,
            fmt("sigma(0)=%s, max |s(x)+s(-x)-1| over 1000 points = %.3g, |x|<=1e4 %s", half ? "0.5 exact" : "WRONG",
                worst, finite ? "finite" : "OVERFLOW")};
}

Outcome zca_whitening() {
    // Full-rank data: independent normals with scales 5..20, mixed by a random rotation-like matrix.
    const std::size_t n = 200, d = 16;
    Rng rng(21);
    std::vector<double> scale(d), mix(d * d);
    for (auto& s : scale) s = rng.uniform(5.0, 20.0);
    for (auto& m : mix) m = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < d; ++i) mix[i * d + i] += 4.0;
    Tensor64 data({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<double> z(d);
        for (std::size_t j = 0; j < d; ++j) z[j] = scale[j] * rng.normal();
        for (std::size_t i = 0; i < d; ++i) {
            double v = 3.0;
            for (std::size_t j = 0; j < d; ++j) v += mix[i * d + j] * z[j];
            data[r * d + i] = v;
        }
    }
    const auto zca = imgpipe::zca_fit(data, 1e-6);
    const auto white = imgpipe::zca_apply(zca, data);
    double frob = 0.0, asym = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double c = 0.0;
            for (std::size_t r = 0; r < n; ++r) c += white[r * d + i] * white[r * d + j];
            c /= static_cast<double>(n);
            const double e = c - (i == j ? 1.0 : 0.0);
            frob += e * e;
            asym = std::max(asym, std::abs(zca.whitening[i * d + j] - zca.whitening[j * d + i]));
        }
    frob = std::sqrt(frob);
    return {frob < 1e-6 && asym <= 1e-10,
            fmt("n=200 d=16 eps=1e-6: ||cov(Wx) - I||_F = %.3g, max |W - W^T| = %.3g", frob, asym)};
}

Outcome serialization() {
    testing::TempDir dir;
    modelfmt::ModelArtifact art;
    art.network = Network<float>(reference16({64, 64, 3}), 11);
    art.network.initialize(11);
    const auto ds = imgpipe::generate_synthetic_dataset(10, 64, 64, Rng(11));
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto batch = imgpipe::stack_images(ds, all);
    art.preprocessing = imgpipe::fit_preprocessing(batch, std::nullopt);
    art.metadata = {imgpipe::kSpeciesNames, {64, 64, 3}, 0.5, "acceptance", 11};

    const auto before = art.network.infer(art.preprocessing.apply(batch));
    modelfmt::save_model(art.network, art.preprocessing, art.metadata, dir / "m.maed");
    const auto loaded = modelfmt::load_model(dir / "m.maed");
    const auto after = loaded.network.infer(loaded.preprocessing.apply(batch));
    const bool identical = before.shape() == after.shape() && before.size() == 20 &&
                           std::memcmp(before.data().data(), after.data().data(), before.size() * sizeof(float)) == 0;

    const auto bytes = imgpipe::read_file(dir / "m.maed");
    Rng rng(99);
    std::size_t detected = 0;
    for (int i = 0; i < 100; ++i) {
        auto copy = bytes;
        copy[rng.below(copy.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
        try {
            (void)modelfmt::deserialize(copy);
        } catch (const Error&) {
            ++detected;
        }
    }
    return {identical && detected == 100,
            fmt("20 inputs %s after save/load; %zu/100 single-byte corruptions detected (%zu-byte file)",
                identical ? "bit-identical" : "DIFFER", detected, bytes.size())};
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    return code;
}

Outcome determinism() {
    testing::TempDir dir;
    auto args = [&](const std::string& name) {
        return std::vector<std::string>{"train", "--synthetic", "--n-per-class", "40", "--image-size", "32",
                                        "--epochs", "3", "--seed", "7", "--strict", "--out", (dir / name).string()};
    };
    if (run_cli(args("a")) != 0 || run_cli(args("b")) != 0) return {false, "training run failed"};
    std::string differing;
    for (const char* f : {"model.maed", "metrics.csv", "metrics.json"})
        if (testing::read_text(dir / "a" / f) != testing::read_text(dir / "b" / f)) differing += std::string(" ") + f;
    return {differing.empty(), differing.empty() ? "model.maed, metrics.csv, metrics.json byte-identical across two "
                                                   "strict runs"
                                                 : "differ:" + differing};
}

Outcome cli_service_agreement() {
    testing::TempDir dir;
    modelfmt::ModelArtifact art;
    art.network = Network<float>(reference16({32, 32, 3}), 3);
    art.network.initialize(3);
    art.preprocessing = testing::tiny_artifact(3, 32, 32).preprocessing;
    art.metadata = {imgpipe::kSpeciesNames, {32, 32, 3}, 0.5, "agreement", 3};
    const auto model = (dir / "m.maed").string();
    modelfmt::save_model(art.network, art.preprocessing, art.metadata, model);
    const auto boundary = testing::boundary_artifact(32, 32);
    const auto boundary_model = (dir / "boundary.maed").string();
    modelfmt::save_model(boundary.network, boundary.preprocessing, boundary.metadata, boundary_model);

    const auto images = testing::write_fixture_images(dir / "img", 20, 5, 40);

    auto compare = [](const std::string& model_path, const std::vector<std::filesystem::path>& files, double& worst,
                      std::size_t& label_mismatch, std::vector<json>& cli_lines) -> bool {
        std::vector<std::string> args{"predict", "--model", model_path};
        for (const auto& p : files) args.push_back(p.string());
        std::string out;
        if (run_cli(args, &out) != 0) return false;
        std::istringstream in(out);
        for (std::string line; std::getline(in, line);) cli_lines.push_back(json::parse(line));
        if (cli_lines.size() != files.size()) return false;

        const auto classifier = std::make_shared<const service::Classifier>(service::Classifier::from_file(model_path));
        testing::RunningServer server(classifier);
        httplib::Client client("127.0.0.1", server.port());
        for (std::size_t i = 0; i < files.size(); ++i) {
            const auto bytes = imgpipe::read_file(files[i]);
            httplib::MultipartFormDataItems items{
                {"image", std::string(bytes.begin(), bytes.end()), files[i].filename().string(), "image/png"}};
            auto res = client.Post("/classify", items);
            if (!res || res->status != 200) return false;
            const auto j = json::parse(res->body);
            worst = std::max(worst, std::abs(j["score"].get<double>() - cli_lines[i]["score"].get<double>()));
            label_mismatch += j["label"] != cli_lines[i]["label"];
        }
        return true;
    };

    double worst = 0.0;
    std::size_t mismatches = 0;
    std::vector<json> lines, boundary_lines;
    if (!compare(model, images, worst, mismatches, lines)) return {false, "fixture comparison failed to run"};
    if (!compare(boundary_model, {images[0]}, worst, mismatches, boundary_lines))
        return {false, "boundary comparison failed to run"};
    const bool boundary_ok = boundary_lines[0]["score"].get<double>() == 0.5 &&
                             boundary_lines[0]["label"] == "Ae. albopictus";
    std::size_t albopictus = 0;
    for (const auto& l : lines) albopictus += l["label"] == "Ae. albopictus";
    return {worst <= 1e-6 && mismatches == 0 && boundary_ok,
            fmt("20 fixtures (%zu labeled albopictus): max |cli - http| = %.3g, %zu label mismatches; score 0.5 -> %s",
                albopictus, worst, mismatches, boundary_lines[0]["label"].get<std::string>().c_str())};
}

Outcome default_constants() {
    const auto spec = reference16();
    const train::TrainConfig cfg;
    const bool shape = kDefaultInputShape == Shape{180, 180, 3} && spec.input_shape == Shape{180, 180, 3};
    const bool rescale = imgpipe::kRescaleFactor == 1.0 / 255.0;
    const bool epochs = cfg.epochs == 30;
    const bool hidden = spec.hidden_layer_count() == 16;
    spec.validate();
    return {shape && rescale && epochs && hidden,
            fmt("input %s, rescale 1/%.0f, epochs %zu, hidden layers %zu", to_string(spec.input_shape).c_str(),
                1.0 / imgpipe::kRescaleFactor, cfg.epochs, spec.hidden_layer_count())};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"default-constants", default_constants},
        {"sigmoid-conformance", sigmoid_conformance},
        {"zca-whitening", zca_whitening},
        {"oracle-equivalence", oracle_equivalence},
        {"gradient-checks", gradient_checks},
        {"serialization", serialization},
        {"determinism", determinism},
        {"cli-service-agreement", cli_service_agreement},
        {"synthetic-accuracy", synthetic_accuracy},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
