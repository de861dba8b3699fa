#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aedes/tensor.hpp"

namespace aedes::imgpipe {

/// Decoded 8-bit raster, interleaved channels (1 = gray, 2 = gray+alpha,
/// 3 = RGB, 4 = RGBA).
struct Image8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;
};

enum class ImageFormat { unknown, png, jpeg };

/// Identifies PNG and JPEG by their leading signature bytes.
ImageFormat sniff_format(std::span<const std::uint8_t> bytes);

/// Throws InputError for anything that is not a decodable PNG or JPEG.
Image8 decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const Image8& image);
std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality = 95);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// HxWx3 tensor of raw 0..255 values. Gray is replicated across channels
/// and alpha dropped; either conversion appends a note.
Tensor to_rgb_tensor(const Image8& image, std::vector<std::string>* notes = nullptr);

/// Bilinear resampling with half-pixel centers (align-corners off).
/// Channels are resampled independently.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

inline constexpr double kRescaleFactor = 1.0 / 255.0;

/// Maps [0, 255] to [0, 1] by dividing by 255. Values outside [0, 255]
/// raise ContractError.
Tensor rescale(const Tensor& image);

/// decode -> RGB -> resize -> rescale.
Tensor load_image(std::span<const std::uint8_t> bytes, std::size_t height, std::size_t width,
                  std::vector<std::string>* notes = nullptr);

/// Quantizes a [0, 1] HxWx3 tensor back to 8-bit (rounding, clamped).
Image8 to_image8(const Tensor& unit_image);

}  // namespace aedes::imgpipe
