#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aedes/modelfmt.hpp"

namespace aedes::service {

struct ClassificationResult {
    double score = 0.0;
    std::string label;
    double threshold = 0.5;
    std::string model_version;
    double latency_ms = 0.0;
    std::vector<std::string> warnings;

    /// {score, label, threshold, model_version, latency_ms, warnings}
    nlohmann::json to_json() const;
};

/// Loaded model plus its persisted preprocessing. Immutable after
/// construction; `classify` may be called from many threads at once.
class Classifier {
public:
    explicit Classifier(modelfmt::ModelArtifact artifact, std::optional<double> threshold_override = std::nullopt);

    static Classifier from_file(const std::filesystem::path& path,
                                std::optional<double> threshold_override = std::nullopt);

    /// decode -> resize -> rescale -> normalize -> (ZCA) -> forward -> threshold.
    /// Throws InputError for bytes that are not a decodable PNG or JPEG.
    ClassificationResult classify(std::span<const std::uint8_t> image_bytes) const;

    /// Label for a score under this classifier's threshold (score >= threshold
    /// picks class 1).
    const std::string& label_for(double score) const;

    double threshold() const noexcept { return threshold_; }
    const modelfmt::Metadata& metadata() const noexcept { return artifact_.metadata; }
    const Network<float>& network() const noexcept { return artifact_.network; }

    /// Layer table, input shape, classes and threshold for /model/info.
    nlohmann::json info() const;

private:
    modelfmt::ModelArtifact artifact_;
    double threshold_;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string cors_origin = "*";
    std::size_t max_upload_bytes = 10 * 1024 * 1024;
    int timeout_seconds = 30;
    /// One worker thread; requests are handled strictly one at a time.
    bool single_worker = false;
};

/// HTTP front end:
///   POST /classify    multipart (field "image", else first file) or raw body
///   GET  /healthz     {"status":"ok","model_version":...}
///   GET  /model/info  Classifier::info()
/// Errors are JSON {"error":{"code":...,"message":...}}: 400 undecodable or
/// empty upload, 413 over the size cap, 415 not PNG/JPEG.
class Server {
public:
    Server(std::shared_ptr<const Classifier> classifier, ServiceConfig config);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds the configured address (port 0 picks a free port) and returns
    /// the bound port. Throws IoError on bind failure.
    int bind();
    /// Serves until stop(); call bind() first.
    void run();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Machine-readable error codes for the JSON error body.
namespace error_code {
inline constexpr const char* unsupported_media_type = "unsupported_media_type";
inline constexpr const char* undecodable_image = "undecodable_image";
inline constexpr const char* empty_body = "empty_body";
inline constexpr const char* payload_too_large = "payload_too_large";
inline constexpr const char* not_found = "not_found";
inline constexpr const char* internal = "internal_error";
}  // namespace error_code

}  // namespace aedes::service
