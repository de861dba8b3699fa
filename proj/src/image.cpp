#include "aedes/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <jpeglib.h>
#include <png.h>

namespace aedes::imgpipe {

ImageFormat sniff_format(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (bytes.size() >= 8 && std::equal(png_sig, png_sig + 8, bytes.begin())) return ImageFormat::png;
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return ImageFormat::jpeg;
    return ImageFormat::unknown;
}

namespace {

Image8 decode_png(std::span<const std::uint8_t> bytes) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        throw InputError(std::string("undecodable PNG: ") + img.message);
    }
    const bool color = img.format & PNG_FORMAT_FLAG_COLOR;
    const bool alpha = img.format & PNG_FORMAT_FLAG_ALPHA;
    img.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB) : (alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
    Image8 out;
    out.height = img.height;
    out.width = img.width;
    out.channels = PNG_IMAGE_SAMPLE_CHANNELS(img.format);
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw InputError("undecodable PNG: " + msg);
    }
    if (out.width == 0 || out.height == 0) throw InputError("PNG has zero size");
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

// No objects with non-trivial destructors may live between setjmp and the
// longjmp target, so the output buffer is owned by the caller.
bool decode_jpeg_into(std::span<const std::uint8_t> bytes, Image8& out, JpegErrorManager& err) {
    jpeg_decompress_struct cinfo;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_silent;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    if (cinfo.jpeg_color_space != JCS_GRAYSCALE) cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out.width = cinfo.output_width;
    out.height = cinfo.output_height;
    out.channels = static_cast<std::size_t>(cinfo.output_components);
    out.pixels.resize(out.width * out.height * out.channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * out.channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

Image8 decode_jpeg(std::span<const std::uint8_t> bytes) {
    Image8 out;
    JpegErrorManager err{};
    if (!decode_jpeg_into(bytes, out, err)) throw InputError(std::string("undecodable JPEG: ") + err.message);
    if (out.width == 0 || out.height == 0) throw InputError("JPEG has zero size");
    return out;
}

bool encode_jpeg_into(const Image8& image, int quality, unsigned char*& buffer, unsigned long& size,
                      JpegErrorManager& err) {
    jpeg_compress_struct cinfo;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width);
    cinfo.image_height = static_cast<JDIMENSION>(image.height);
    cinfo.input_components = static_cast<int>(image.channels);
    cinfo.in_color_space = image.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPROW>(image.pixels.data() +
                                         static_cast<std::size_t>(cinfo.next_scanline) * image.width * image.channels);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    return true;
}

void check_image(const Image8& image) {
    if (image.width == 0 || image.height == 0 || image.channels == 0 || image.channels > 4 ||
        image.pixels.size() != image.width * image.height * image.channels) {
        throw DimensionError("malformed image buffer");
    }
}

}  // namespace

Image8 decode_image(std::span<const std::uint8_t> bytes) {
    switch (sniff_format(bytes)) {
        case ImageFormat::png: return decode_png(bytes);
        case ImageFormat::jpeg: return decode_jpeg(bytes);
        default: throw InputError("unsupported image type (expected PNG or JPEG)");
    }
}

std::vector<std::uint8_t> encode_png(const Image8& image) {
    check_image(image);
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    static constexpr png_uint_32 formats[] = {PNG_FORMAT_GRAY, PNG_FORMAT_GA, PNG_FORMAT_RGB, PNG_FORMAT_RGBA};
    img.format = formats[image.channels - 1];
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        throw IoError(std::string("PNG encode failed: ") + img.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw IoError(std::string("PNG encode failed: ") + img.message);
    }
    out.resize(size);
    return out;
}

std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality) {
    check_image(image);
    if (image.channels != 1 && image.channels != 3) throw DimensionError("JPEG encoding needs 1 or 3 channels");
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    JpegErrorManager err{};
    const bool ok = encode_jpeg_into(image, quality, buffer, size, err);
    std::vector<std::uint8_t> out;
    if (ok) out.assign(buffer, buffer + size);
    std::free(buffer);
    if (!ok) throw IoError(std::string("JPEG encode failed: ") + err.message);
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Tensor to_rgb_tensor(const Image8& image, std::vector<std::string>* notes) {
    check_image(image);
    Tensor t({image.height, image.width, 3});
    const std::size_t pixels = image.height * image.width;
    const std::size_t ch = image.channels;
    for (std::size_t p = 0; p < pixels; ++p) {
        const std::uint8_t* src = image.pixels.data() + p * ch;
        for (std::size_t c = 0; c < 3; ++c) t[p * 3 + c] = static_cast<float>(ch >= 3 ? src[c] : src[0]);
    }
    if (notes) {
        if (ch <= 2) notes->push_back("grayscale image replicated to 3 channels");
        if (ch == 2 || ch == 4) notes->push_back("alpha channel dropped");
    }
    return t;
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
    if (image.rank() != 3 || image.dim(0) == 0 || image.dim(1) == 0) {
        throw DimensionError("resize expects a non-empty HxWxC image, got " + to_string(image.shape()));
    }
    if (out_h == 0 || out_w == 0) {
        throw DimensionError("resize target " + std::to_string(out_h) + "x" + std::to_string(out_w) + " has a zero side");
    }
    const std::size_t in_h = image.dim(0), in_w = image.dim(1), ch = image.dim(2);
    if (in_h == out_h && in_w == out_w) return image;

    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t i = 0; i < out; ++i) {
            double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const auto lo = static_cast<std::size_t>(std::floor(src));
            const std::size_t hi = std::min(lo + 1, in - 1);
            t[i] = {lo, hi, src - static_cast<double>(lo)};
        }
        return t;
    };
    const auto ty = taps(in_h, out_h);
    const auto tx = taps(in_w, out_w);

    Tensor out({out_h, out_w, ch});
    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            for (std::size_t c = 0; c < ch; ++c) {
                auto px = [&](std::size_t yy, std::size_t xx) {
                    return static_cast<double>(image[(yy * in_w + xx) * ch + c]);
                };
                const double top = px(ty[y].lo, tx[x].lo) * (1 - tx[x].frac) + px(ty[y].lo, tx[x].hi) * tx[x].frac;
                const double bot = px(ty[y].hi, tx[x].lo) * (1 - tx[x].frac) + px(ty[y].hi, tx[x].hi) * tx[x].frac;
                out[(y * out_w + x) * ch + c] = static_cast<float>(top * (1 - ty[y].frac) + bot * ty[y].frac);
            }
        }
    }
    return out;
}

Tensor rescale(const Tensor& image) {
    for (float v : image.data()) {
        if (!(v >= 0.0f && v <= 255.0f)) {
            throw ContractError("rescale expects values in [0, 255], found " + std::to_string(v));
        }
    }
    return map_unary(image, [](float v) { return v / 255.0f; });
}

Tensor load_image(std::span<const std::uint8_t> bytes, std::size_t height, std::size_t width,
                  std::vector<std::string>* notes) {
    return rescale(resize_bilinear(to_rgb_tensor(decode_image(bytes), notes), height, width));
}

Image8 to_image8(const Tensor& unit_image) {
    if (unit_image.rank() != 3) throw DimensionError("expected HxWxC image, got " + to_string(unit_image.shape()));
    Image8 img{unit_image.dim(0), unit_image.dim(1), unit_image.dim(2), {}};
    img.pixels.resize(unit_image.size());
    for (std::size_t i = 0; i < unit_image.size(); ++i) {
        const double v = std::clamp(static_cast<double>(unit_image[i]), 0.0, 1.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

}  // namespace aedes::imgpipe
