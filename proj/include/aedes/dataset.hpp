#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aedes/rng.hpp"
#include "aedes/tensor.hpp"

namespace aedes::imgpipe {

/// Class 0 scores near zero, class 1 near one.
inline const std::vector<std::string> kSpeciesNames{"Ae. aegypti", "Ae. albopictus"};

struct Sample {
    Tensor image;  // H x W x 3, values in [0, 1]
    int label = 0;
    std::string source;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

struct SplitRatios {
    double train = 0.7;
    double validation = 0.2;
    double test = 0.1;
};

struct ClassLoadCount {
    std::string name;
    std::size_t loaded = 0;
    std::size_t skipped = 0;
};

struct LoadReport {
    std::vector<ClassLoadCount> classes;
    std::vector<std::string> skipped_files;

    /// Structured one-object JSON text.
    std::string to_json() const;
};

struct Dataset {
    std::vector<Sample> samples;
    Split split;
    /// Display names; loaded datasets keep their directory names here.
    std::vector<std::string> class_names = kSpeciesNames;
    LoadReport report;

    std::size_t size() const noexcept { return samples.size(); }
};

/// Loads `<root>/<class>/<image>` with classes in lexicographic order and
/// files in sorted-path order. Images are resized to (height, width) and
/// rescaled to [0, 1]. Undecodable files are skipped with a warning.
Dataset load_dataset(const std::filesystem::path& root, std::size_t height = 180, std::size_t width = 180);

/// Stratified deterministic split: each class is shuffled under `seed` and
/// cut by the ratios, so every split with a nonzero ratio gets both classes
/// when there are enough samples. Index lists are returned sorted.
Split make_split(const std::vector<Sample>& samples, const SplitRatios& ratios, std::uint64_t seed);

/// Two texture classes with identical brightness statistics: class 0 is
/// oriented sinusoidal stripes, class 1 is scattered Gaussian spots. Sample
/// i of each class shares one target mean, so pixel-mean rules cannot tell
/// them apart. Deterministic for a given rng seed.
Dataset generate_synthetic_dataset(std::size_t n_per_class, std::size_t height, std::size_t width, Rng rng);

/// Writes `<root>/aegypti/NNNNN.png` and `<root>/albopictus/NNNNN.png`.
/// Returns the number of files written.
std::size_t write_dataset(const Dataset& dataset, const std::filesystem::path& root);

/// Stacks the given samples into an [N x H x W x 3] batch.
Tensor stack_images(const Dataset& dataset, const std::vector<std::size_t>& indices);
std::vector<float> gather_labels(const Dataset& dataset, const std::vector<std::size_t>& indices);

/// FNV-1a over sources, labels and pixel bytes, in sample order.
std::uint64_t fingerprint(const Dataset& dataset);

}  // namespace aedes::imgpipe
