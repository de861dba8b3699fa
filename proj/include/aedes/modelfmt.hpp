#pragma once

// Model artifact: a self-contained little-endian binary file.
//
//   offset 0   char[4]  magic "MAED"
//          4   u32      format version (1)
//          8   u32      metadata block length in bytes
//         12   u32      layer record count
//         16   ...      metadata block
//              ...      layer records
//   size-4     u32      CRC-32 (reflected, poly 0xEDB88320) of all preceding bytes
//
// Metadata block:
//   u32 class count, then per class: u32 length + UTF-8 bytes
//   u32 rank (3), u32 height, u32 width, u32 channels
//   f64 decision threshold
//   u32 length + bytes: model version string
//   u64 training seed
//   u32 channel count C, f32 mean[C], f32 std[C]
//   u8  has_zca; if 1: u32 d, f64 epsilon, f64 mean[d], f64 whitening[d*d]
//
// Layer record: u32 kind tag followed by
//   Conv2D (1):    u32 out, in, kh, kw, stride, padding; f32 weights[out*in*kh*kw]; f32 bias[out]
//   MaxPool2D (2): u32 window, stride
//   Dense (3):     u32 in, out; f32 weights[in*out]; f32 bias[out]
//   Dropout (4):   f32 rate
//   Flatten (5), ReLU (6), Sigmoid (7): no fields

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aedes/model.hpp"
#include "aedes/preprocess.hpp"

namespace aedes::modelfmt {

inline constexpr char kMagic[4] = {'M', 'A', 'E', 'D'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderSize = 16;

struct Metadata {
    std::vector<std::string> class_names;
    Shape input_shape;
    double threshold = 0.5;
    std::string model_version;
    std::uint64_t training_seed = 0;

    friend bool operator==(const Metadata&, const Metadata&) = default;
};

struct ModelArtifact {
    Network<float> network;
    imgpipe::Preprocessing preprocessing;
    Metadata metadata;
};

/// CRC-32 as used by zip/PNG.
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize(const Network<float>& network, const imgpipe::Preprocessing& prep,
                                    const Metadata& metadata);
ModelArtifact deserialize(std::span<const std::uint8_t> bytes);

/// Returns the number of bytes written.
std::size_t save_model(const Network<float>& network, const imgpipe::Preprocessing& prep, const Metadata& metadata,
                       const std::filesystem::path& path);
ModelArtifact load_model(const std::filesystem::path& path);

/// Human-readable header, layer table and CRC status. Never throws on a
/// damaged payload; the damage is reported in the text.
std::string dump(std::span<const std::uint8_t> bytes);

}  // namespace aedes::modelfmt
