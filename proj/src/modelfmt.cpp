#include "aedes/modelfmt.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <sstream>

#include <zlib.h>

#include "aedes/image.hpp"

namespace aedes::modelfmt {

using nn::LayerKind;
using nn::LayerSpec;

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in chunks.
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
        crc = ::crc32(crc, bytes.data() + offset, chunk);
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void size(std::size_t v) {
        if (v > UINT32_MAX) throw ContractError("value " + std::to_string(v) + " does not fit the u32 field");
        u32(static_cast<std::uint32_t>(v));
    }
    void str(const std::string& s) {
        size(s.size());
        out_.insert(out_.end(), s.begin(), s.end());
    }
    template <typename T>
    void floats(std::span<const T> values) {
        for (T v : values) f32(static_cast<float>(v));
    }

    std::vector<std::uint8_t>& bytes() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t end)
        : bytes_(bytes), pos_(offset), end_(end) {}

    std::size_t position() const noexcept { return pos_; }

    std::uint8_t u8() { return *take(1); }
    std::uint32_t u32() {
        const auto* p = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
        return v;
    }
    std::uint64_t u64() {
        const auto* p = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        const auto* p = take(n);
        return {reinterpret_cast<const char*>(p), n};
    }

private:
    const std::uint8_t* take(std::size_t n) {
        if (n > end_ - pos_) {
            throw CorruptionError("model file truncated: need " + std::to_string(n) + " bytes at offset " +
                                  std::to_string(pos_) + ", section ends at offset " + std::to_string(end_));
        }
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
    std::size_t end_;
};

void write_metadata(Writer& w, const Metadata& meta, const imgpipe::Preprocessing& prep) {
    w.size(meta.class_names.size());
    for (const auto& name : meta.class_names) w.str(name);
    w.size(meta.input_shape.size());
    for (auto d : meta.input_shape) w.size(d);
    w.f64(meta.threshold);
    w.str(meta.model_version);
    w.u64(meta.training_seed);
    if (prep.stats.mean.size() != prep.stats.std.size()) throw ContractError("channel statistics are inconsistent");
    w.size(prep.stats.mean.size());
    for (float v : prep.stats.mean) w.f32(v);
    for (float v : prep.stats.std) w.f32(v);
    w.u8(prep.zca ? 1 : 0);
    if (prep.zca) {
        const auto& z = *prep.zca;
        w.size(z.dimension());
        w.f64(z.epsilon);
        for (double v : z.mean) w.f64(v);
        for (double v : z.whitening) w.f64(v);
    }
}

void write_layer(Writer& w, const nn::Layer<float>& layer) {
    const auto& s = layer.spec();
    w.u32(static_cast<std::uint32_t>(s.kind));
    const auto params = layer.parameters();
    switch (s.kind) {
        case LayerKind::conv2d: {
            const auto& weights = params[0]->value;
            w.size(s.out_channels);
            w.size(weights.dim(1));
            w.size(s.kernel_h);
            w.size(s.kernel_w);
            w.size(s.stride);
            w.u32(static_cast<std::uint32_t>(s.padding));
            w.floats(weights.data());
            w.floats(params[1]->value.data());
            break;
        }
        case LayerKind::maxpool2d:
            w.size(s.window);
            w.size(s.stride);
            break;
        case LayerKind::dense: {
            const auto& weights = params[0]->value;
            w.size(weights.dim(0));
            w.size(weights.dim(1));
            w.floats(weights.data());
            w.floats(params[1]->value.data());
            break;
        }
        case LayerKind::dropout:
            w.f32(static_cast<float>(s.rate));
            break;
        default:
            break;
    }
}

struct LayerRecord {
    LayerSpec spec;
    std::size_t in_size = 0;  // Conv2D in_channels or Dense in_features
    std::vector<float> weights;
    std::vector<float> bias;
};

std::vector<float> read_floats(Reader& r, std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = r.f32();
    return v;
}

LayerRecord read_layer(Reader& r) {
    const std::size_t at = r.position();
    const std::uint32_t tag = r.u32();
    LayerRecord rec;
    switch (static_cast<LayerKind>(tag)) {
        case LayerKind::conv2d: {
            const std::size_t out = r.u32(), in = r.u32(), kh = r.u32(), kw = r.u32(), stride = r.u32();
            const std::uint32_t pad = r.u32();
            if (pad > 1) throw CorruptionError("invalid padding mode at offset " + std::to_string(at));
            if (kh != kw) throw CorruptionError("non-square kernels are not supported (offset " + std::to_string(at) + ")");
            rec.spec = LayerSpec::conv2d(out, kh, static_cast<nn::Padding>(pad), stride);
            rec.in_size = in;
            rec.weights = read_floats(r, out * in * kh * kw);
            rec.bias = read_floats(r, out);
            break;
        }
        case LayerKind::maxpool2d: {
            const std::size_t window = r.u32(), stride = r.u32();
            rec.spec = LayerSpec::maxpool2d(window, stride);
            break;
        }
        case LayerKind::dense: {
            const std::size_t in = r.u32(), out = r.u32();
            rec.spec = LayerSpec::dense(out);
            rec.in_size = in;
            rec.weights = read_floats(r, in * out);
            rec.bias = read_floats(r, out);
            break;
        }
        case LayerKind::dropout:
            rec.spec = LayerSpec::dropout(static_cast<double>(r.f32()));
            break;
        case LayerKind::flatten: rec.spec = LayerSpec::flatten(); break;
        case LayerKind::relu: rec.spec = LayerSpec::relu(); break;
        case LayerKind::sigmoid: rec.spec = LayerSpec::sigmoid(); break;
        default:
            throw CorruptionError("unknown layer kind " + std::to_string(tag) + " at offset " + std::to_string(at));
    }
    return rec;
}

void check_preamble(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("not a model file: bad magic (expected \"MAED\")");
    }
    if (bytes.size() < kHeaderSize) {
        throw CorruptionError("model file truncated: header ends at offset " + std::to_string(bytes.size()));
    }
    Reader r(bytes, 4, kHeaderSize);
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw VersionError("unsupported model format version " + std::to_string(version) + " (this build reads " +
                           std::to_string(kFormatVersion) + ")");
    }
}

std::uint32_t stored_crc(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, bytes.size() - 4, bytes.size());
    return r.u32();
}

}  // namespace

std::vector<std::uint8_t> serialize(const Network<float>& network, const imgpipe::Preprocessing& prep,
                                    const Metadata& metadata) {
    network.spec().validate();
    if (network.size() == 0) throw ContractError("cannot save a model without layers");
    if (metadata.input_shape != network.spec().input_shape) {
        throw ContractError("metadata input shape " + to_string(metadata.input_shape) + " differs from the network's " +
                            to_string(network.spec().input_shape));
    }

    Writer meta;
    write_metadata(meta, metadata, prep);

    Writer w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kFormatVersion);
    w.size(meta.bytes().size());
    w.size(network.size());
    w.bytes().insert(w.bytes().end(), meta.bytes().begin(), meta.bytes().end());
    for (std::size_t i = 0; i < network.size(); ++i) write_layer(w, network.layer(i));
    w.u32(crc32(w.bytes()));
    return std::move(w.bytes());
}

ModelArtifact deserialize(std::span<const std::uint8_t> bytes) {
    check_preamble(bytes);
    Reader header(bytes, 8, kHeaderSize);
    const std::size_t meta_len = header.u32();
    const std::size_t layer_count = header.u32();
    if (bytes.size() < kHeaderSize + 4 || meta_len > bytes.size() - kHeaderSize - 4) {
        throw CorruptionError("model file truncated: metadata block of " + std::to_string(meta_len) +
                              " bytes at offset 16 runs past the end at offset " + std::to_string(bytes.size()));
    }
    const std::size_t payload_end = bytes.size() - 4;
    const std::uint32_t expected = stored_crc(bytes);
    const std::uint32_t actual = crc32(bytes.first(payload_end));
    if (expected != actual) {
        std::ostringstream msg;
        msg << "model file corrupted: CRC-32 mismatch (stored 0x" << std::hex << std::setw(8) << std::setfill('0')
            << expected << ", computed 0x" << std::setw(8) << actual << ")";
        throw CorruptionError(msg.str());
    }

    ModelArtifact art;
    Reader r(bytes, kHeaderSize, kHeaderSize + meta_len);
    auto& meta = art.metadata;
    const std::size_t classes = r.u32();
    for (std::size_t i = 0; i < classes; ++i) meta.class_names.push_back(r.str());
    const std::size_t rank = r.u32();
    for (std::size_t i = 0; i < rank; ++i) meta.input_shape.push_back(r.u32());
    meta.threshold = r.f64();
    meta.model_version = r.str();
    meta.training_seed = r.u64();
    const std::size_t channels = r.u32();
    art.preprocessing.stats.mean.resize(channels);
    art.preprocessing.stats.std.resize(channels);
    for (auto& v : art.preprocessing.stats.mean) v = r.f32();
    for (auto& v : art.preprocessing.stats.std) v = r.f32();
    if (r.u8()) {
        imgpipe::ZcaTransform z;
        const std::size_t d = r.u32();
        z.epsilon = r.f64();
        z.mean.resize(d);
        for (auto& v : z.mean) v = r.f64();
        z.whitening.resize(d * d);
        for (auto& v : z.whitening) v = r.f64();
        art.preprocessing.zca = std::move(z);
    }
    if (r.position() != kHeaderSize + meta_len) {
        throw CorruptionError("metadata block length mismatch at offset " + std::to_string(r.position()));
    }

    Reader lr(bytes, kHeaderSize + meta_len, payload_end);
    std::vector<LayerRecord> records;
    ModelSpec spec;
    spec.input_shape = meta.input_shape;
    for (std::size_t i = 0; i < layer_count; ++i) {
        records.push_back(read_layer(lr));
        spec.layers.push_back(records.back().spec);
    }
    if (lr.position() != payload_end) {
        throw CorruptionError("unexpected trailing bytes at offset " + std::to_string(lr.position()));
    }

    try {
        art.network = Network<float>(spec, meta.training_seed);
    } catch (const Error& e) {
        throw CorruptionError(std::string("stored architecture is inconsistent: ") + e.what());
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto params = art.network.layer(i).parameters();
        if (params.empty()) continue;
        auto& w = params[0]->value;
        const std::size_t expected_in = records[i].spec.kind == LayerKind::conv2d ? w.dim(1) : w.dim(0);
        if (records[i].in_size != expected_in) {
            throw CorruptionError("layer " + std::to_string(i) + " stores input size " +
                                  std::to_string(records[i].in_size) + " but the chain provides " +
                                  std::to_string(expected_in));
        }
        w = Tensor(w.shape(), std::move(records[i].weights));
        params[1]->value = Tensor(params[1]->value.shape(), std::move(records[i].bias));
    }
    return art;
}

std::size_t save_model(const Network<float>& network, const imgpipe::Preprocessing& prep, const Metadata& metadata,
                       const std::filesystem::path& path) {
    const auto bytes = serialize(network, prep, metadata);
    imgpipe::write_file(path, bytes);
    return bytes.size();
}

ModelArtifact load_model(const std::filesystem::path& path) {
    const auto bytes = imgpipe::read_file(path);
    return deserialize(bytes);
}

std::string dump(std::span<const std::uint8_t> bytes) {
    std::ostringstream out;
    out << "file size: " << bytes.size() << " bytes\n";
    try {
        check_preamble(bytes);
    } catch (const Error& e) {
        out << "header: INVALID (" << e.what() << ")\n";
        return out.str();
    }
    Reader header(bytes, 8, kHeaderSize);
    const std::size_t meta_len = header.u32();
    const std::size_t layer_count = header.u32();
    out << "magic: MAED\nversion: " << kFormatVersion << "\nmetadata bytes: " << meta_len
        << "\nlayer records: " << layer_count << '\n';
    if (bytes.size() >= kHeaderSize + 4) {
        const std::uint32_t expected = stored_crc(bytes);
        const std::uint32_t actual = crc32(bytes.first(bytes.size() - 4));
        out << "crc32: stored 0x" << std::hex << std::setw(8) << std::setfill('0') << expected << ", computed 0x"
            << std::setw(8) << actual << std::dec << std::setfill(' ') << (expected == actual ? " (OK)" : " (MISMATCH)")
            << '\n';
    } else {
        out << "crc32: missing\n";
    }
    try {
        const auto art = deserialize(bytes);
        const auto& m = art.metadata;
        out << "model version: " << m.model_version << "\ntraining seed: " << m.training_seed
            << "\ninput shape: " << to_string(m.input_shape) << "\nthreshold: " << m.threshold << "\nclasses:";
        for (const auto& c : m.class_names) out << " \"" << c << '"';
        out << "\nnormalization channels: " << art.preprocessing.stats.mean.size()
            << "\nzca: " << (art.preprocessing.zca ? "d=" + std::to_string(art.preprocessing.zca->dimension()) : "off")
            << "\n\n"
            << model_summary(art.network.spec());
    } catch (const Error& e) {
        out << "payload: UNREADABLE (" << e.what() << ")\n";
    }
    return out.str();
}

}  // namespace aedes::modelfmt
