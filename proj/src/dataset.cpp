#include "aedes/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

#include <json.hpp>

#include "aedes/image.hpp"

namespace aedes::imgpipe {

namespace fs = std::filesystem;

std::string LoadReport::to_json() const {
    nlohmann::json j;
    j["classes"] = nlohmann::json::array();
    for (const auto& c : classes) j["classes"].push_back({{"name", c.name}, {"loaded", c.loaded}, {"skipped", c.skipped}});
    j["skipped_files"] = skipped_files;
    return j.dump();
}

Dataset load_dataset(const fs::path& root, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw DimensionError("image size must be positive");
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw DataError("dataset root " + root.string() + " is not a directory");

    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.size() < 2) {
        throw DataError("dataset root " + root.string() + " needs at least 2 class subdirectories, found " +
                        std::to_string(class_dirs.size()));
    }
    if (class_dirs.size() > 2) {
        throw DataError("binary classifier expects exactly 2 class subdirectories, found " +
                        std::to_string(class_dirs.size()));
    }

    struct Job {
        fs::path path;
        int label;
    };
    std::vector<Job> jobs;
    Dataset ds;
    ds.class_names.clear();
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        ds.class_names.push_back(class_dirs[c].filename().string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (auto& f : files) jobs.push_back({std::move(f), static_cast<int>(c)});
    }

    // Decode in parallel into fixed slots; order is the sorted-path order.
    std::vector<std::optional<Sample>> slots(jobs.size());
    std::vector<std::string> errors(jobs.size());
    const auto count = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < count; ++i) {
        const auto& job = jobs[static_cast<std::size_t>(i)];
        try {
            const auto bytes = read_file(job.path);
            slots[static_cast<std::size_t>(i)] = Sample{load_image(bytes, height, width), job.label, job.path.string()};
        } catch (const Error& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }

    ds.report.classes.resize(class_dirs.size());
    for (std::size_t c = 0; c < class_dirs.size(); ++c) ds.report.classes[c].name = ds.class_names[c];
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto& counts = ds.report.classes[static_cast<std::size_t>(jobs[i].label)];
        if (slots[i]) {
            ds.samples.push_back(std::move(*slots[i]));
            ++counts.loaded;
        } else {
            ++counts.skipped;
            ds.report.skipped_files.push_back(jobs[i].path.string());
            warn("skipping " + jobs[i].path.string() + ": " + errors[i]);
        }
    }
    for (const auto& c : ds.report.classes) {
        if (c.loaded == 0) throw DataError("class '" + c.name + "' has no usable images");
    }
    return ds;
}

Split make_split(const std::vector<Sample>& samples, const SplitRatios& ratios, std::uint64_t seed) {
    if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be non-negative and sum to 1");
    }
    int max_label = -1;
    for (const auto& s : samples) max_label = std::max(max_label, s.label);
    const Rng root = Rng(seed).substream("split");
    Split split;
    for (int label = 0; label <= max_label; ++label) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].label == label) idx.push_back(i);
        Rng rng = root.substream(static_cast<std::uint64_t>(label));
        shuffle(idx.begin(), idx.end(), rng);
        const std::size_t n = idx.size();
        auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.train));
        auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.validation));
        n_train = std::min(n_train, n);
        n_val = std::min(n_val, n - n_train);
        if (ratios.test == 0.0) n_val = n - n_train;
        split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        split.validation.insert(split.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                                idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> stripes(std::size_t h, std::size_t w, double scale, Rng& rng) {
    const double period = rng.uniform(5.0, 12.0) * scale;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double phase = rng.uniform(0.0, kTwoPi);
    const double cx = std::cos(theta), sy = std::sin(theta);
    std::vector<double> p(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            p[y * w + x] = std::sin(kTwoPi * (static_cast<double>(x) * cx + static_cast<double>(y) * sy) / period + phase);
    return p;
}

std::vector<double> spots(std::size_t h, std::size_t w, double scale, Rng& rng) {
    const auto count = 4 + rng.below(7);
    std::vector<double> p(h * w, 0.0);
    for (std::uint64_t k = 0; k < count; ++k) {
        const double sigma = rng.uniform(1.5, 3.5) * scale;
        const double my = rng.uniform(0.0, static_cast<double>(h));
        const double mx = rng.uniform(0.0, static_cast<double>(w));
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double dy = static_cast<double>(y) - my, dx = static_cast<double>(x) - mx;
                p[y * w + x] += std::exp(-(dx * dx + dy * dy) * inv);
            }
    }
    return p;
}

// Zero mean, peak magnitude `amplitude`.
void center_and_scale(std::vector<double>& p, double amplitude) {
    double mean = 0.0;
    for (double v : p) mean += v;
    mean /= static_cast<double>(p.size());
    double peak = 0.0;
    for (double& v : p) {
        v -= mean;
        peak = std::max(peak, std::abs(v));
    }
    if (peak > 0.0)
        for (double& v : p) v *= amplitude / peak;
}

struct PairStyle {
    double target_mean;
    double amplitude;
    double gains[3];
};

Sample render(const std::vector<double>& pattern, const PairStyle& style, std::size_t h, std::size_t w, Rng& noise,
              int label, std::string source) {
    std::vector<double> px(h * w * 3);
    double mean = 0.0;
    for (std::size_t i = 0; i < h * w; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            const double n = std::clamp(noise.normal() * 0.03, -0.09, 0.09);
            const double v = style.gains[c] * pattern[i] + n;
            px[i * 3 + c] = v;
            mean += v;
        }
    mean /= static_cast<double>(px.size());
    Tensor image({h, w, 3});
    for (std::size_t i = 0; i < px.size(); ++i)
        image[i] = static_cast<float>(std::clamp(px[i] - mean + style.target_mean, 0.0, 1.0));
    return Sample{std::move(image), label, std::move(source)};
}

std::string numbered(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu", i);
    return buf;
}

const char* const kClassDirs[] = {"aegypti", "albopictus"};

}  // namespace

Dataset generate_synthetic_dataset(std::size_t n_per_class, std::size_t height, std::size_t width, Rng rng) {
    if (n_per_class == 0) throw ConfigError("n_per_class must be at least 1");
    if (height < 8 || width < 8) throw DimensionError("synthetic images need at least 8x8 pixels");
    const double scale = static_cast<double>(std::min(height, width)) / 64.0;
    Rng style_rng = rng.substream("style");
    std::vector<PairStyle> styles(n_per_class);
    for (auto& s : styles) {
        s.target_mean = style_rng.uniform(0.4, 0.6);
        s.amplitude = style_rng.uniform(0.15, 0.25);
        for (double& g : s.gains) g = style_rng.uniform(0.85, 1.15);
    }

    Dataset ds;
    ds.samples.reserve(2 * n_per_class);
    for (int label = 0; label < 2; ++label) {
        const Rng class_rng = rng.substream(label == 0 ? "stripes" : "spots");
        for (std::size_t i = 0; i < n_per_class; ++i) {
            Rng shape_rng = class_rng.substream(2 * i);
            Rng noise_rng = class_rng.substream(2 * i + 1);
            auto pattern = label == 0 ? stripes(height, width, scale, shape_rng) : spots(height, width, scale, shape_rng);
            center_and_scale(pattern, styles[i].amplitude);
            ds.samples.push_back(render(pattern, styles[i], height, width, noise_rng, label,
                                        std::string("synthetic:") + kClassDirs[label] + "/" + numbered(i)));
        }
    }
    for (std::size_t c = 0; c < 2; ++c) ds.report.classes.push_back({ds.class_names[c], n_per_class, 0});
    return ds;
}

std::size_t write_dataset(const Dataset& dataset, const fs::path& root) {
    std::size_t written = 0;
    std::vector<std::size_t> per_class(2, 0);
    for (const auto* dir : kClassDirs) fs::create_directories(root / dir);
    for (const auto& s : dataset.samples) {
        if (s.label < 0 || s.label > 1) throw ContractError("label must be 0 or 1");
        const auto path = root / kClassDirs[s.label] / (numbered(per_class[static_cast<std::size_t>(s.label)]++) + ".png");
        write_file(path, encode_png(to_image8(s.image)));
        ++written;
    }
    return written;
}

Tensor stack_images(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DataError("cannot stack an empty sample list");
    const Shape& shape = dataset.samples.at(indices.front()).image.shape();
    const std::size_t per = element_count(shape);
    Shape batch_shape{indices.size()};
    batch_shape.insert(batch_shape.end(), shape.begin(), shape.end());
    Tensor batch(batch_shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& img = dataset.samples.at(indices[i]).image;
        if (img.shape() != shape) throw DimensionError("samples have inconsistent shapes");
        std::copy(img.data().begin(), img.data().end(), batch.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return batch;
}

std::vector<float> gather_labels(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    std::vector<float> labels;
    labels.reserve(indices.size());
    for (auto i : indices) labels.push_back(static_cast<float>(dataset.samples.at(i).label));
    return labels;
}

std::uint64_t fingerprint(const Dataset& dataset) {
    std::uint64_t h = fnv1a(nullptr, 0);
    for (const auto& s : dataset.samples) {
        h = fnv1a(s.source.data(), s.source.size(), h);
        h = fnv1a(&s.label, sizeof s.label, h);
        h = fnv1a(s.image.data().data(), s.image.size() * sizeof(float), h);
    }
    return h;
}

}  // namespace aedes::imgpipe
