#include "aedes/service.hpp"

#include <atomic>
#include <chrono>

#include <httplib.h>

#include "aedes/image.hpp"
#include "aedes/train.hpp"

namespace aedes::service {

nlohmann::json ClassificationResult::to_json() const {
    return {{"score", score},
            {"label", label},
            {"threshold", threshold},
            {"model_version", model_version},
            {"latency_ms", latency_ms},
            {"warnings", warnings}};
}

Classifier::Classifier(modelfmt::ModelArtifact artifact, std::optional<double> threshold_override)
    : artifact_(std::move(artifact)), threshold_(threshold_override.value_or(artifact_.metadata.threshold)) {
    if (artifact_.metadata.class_names.size() != 2) {
        throw ConfigError("binary classifier needs exactly 2 class names, model has " +
                          std::to_string(artifact_.metadata.class_names.size()));
    }
    if (!(threshold_ >= 0.0 && threshold_ <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
    const auto& shape = artifact_.metadata.input_shape;
    if (shape.size() != 3 || shape[2] != 3) {
        throw ConfigError("model input must be HxWx3, got " + to_string(shape));
    }
}

Classifier Classifier::from_file(const std::filesystem::path& path, std::optional<double> threshold_override) {
    return Classifier(modelfmt::load_model(path), threshold_override);
}

const std::string& Classifier::label_for(double score) const {
    return artifact_.metadata.class_names[static_cast<std::size_t>(train::decide(score, threshold_))];
}

ClassificationResult Classifier::classify(std::span<const std::uint8_t> image_bytes) const {
    const auto start = std::chrono::steady_clock::now();
    ClassificationResult result;
    const auto& shape = artifact_.metadata.input_shape;
    Tensor image = imgpipe::load_image(image_bytes, shape[0], shape[1], &result.warnings);
    Shape batch_shape{1};
    batch_shape.insert(batch_shape.end(), shape.begin(), shape.end());
    const Tensor batch = artifact_.preprocessing.apply(std::move(image).reshaped(batch_shape));
    const Tensor scores = artifact_.network.infer(batch);
    result.score = static_cast<double>(scores[0]);
    result.threshold = threshold_;
    result.label = label_for(result.score);
    result.model_version = artifact_.metadata.model_version;
    result.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
}

nlohmann::json Classifier::info() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& row : summarize(artifact_.network.spec())) {
        layers.push_back({{"kind", row.kind}, {"output_shape", row.output_shape}, {"parameters", row.parameters}});
    }
    const auto& m = artifact_.metadata;
    return {{"model_version", m.model_version},
            {"input_shape", m.input_shape},
            {"class_names", m.class_names},
            {"threshold", threshold_},
            {"layers", layers},
            {"total_parameters", artifact_.network.spec().parameter_count()},
            {"hidden_layers", artifact_.network.spec().hidden_layer_count()},
            {"zca", artifact_.preprocessing.zca.has_value()},
            {"summary", model_summary(artifact_.network.spec())}};
}

// ---------------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

}  // namespace

struct Server::Impl {
    std::shared_ptr<const Classifier> classifier;
    ServiceConfig config;
    httplib::Server http;
    std::atomic<bool> bound{false};

    void routes();
};

void Server::Impl::routes() {
    if (config.single_worker) {
        http.new_task_queue = [] { return new httplib::ThreadPool(1); };
    }
    http.set_payload_max_length(config.max_upload_bytes);
    http.set_read_timeout(config.timeout_seconds, 0);
    http.set_write_timeout(config.timeout_seconds, 0);

    const std::string origin = config.cors_origin;
    http.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
        if (!origin.empty()) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
        }
    });
    http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 413) {
            send_error(res, 413, error_code::payload_too_large, "upload exceeds the size limit");
        } else if (res.status == 404) {
            send_error(res, 404, error_code::not_found, "no such endpoint");
        } else {
            const int status = res.status;
            send_error(res, status, "http_" + std::to_string(status), "request failed");
        }
    });
    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unexpected error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send_error(res, 500, error_code::internal, what);
    });

    http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    http.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"model_version", classifier->metadata().model_version}});
    });

    http.Get("/model/info", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, classifier->info());
    });

    http.Post("/classify", [this](const httplib::Request& req, httplib::Response& res) {
        std::string_view body;
        if (req.is_multipart_form_data()) {
            if (req.has_file("image")) {
                body = req.files.find("image")->second.content;
            } else if (!req.files.empty()) {
                body = req.files.begin()->second.content;
            }
        } else {
            body = req.body;
        }
        if (body.empty()) {
            send_error(res, 400, error_code::empty_body, "no image in request");
            return;
        }
        const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(body.data()), body.size());
        if (imgpipe::sniff_format(bytes) == imgpipe::ImageFormat::unknown) {
            send_error(res, 415, error_code::unsupported_media_type, "unsupported image type; send PNG or JPEG");
            return;
        }
        try {
            send_json(res, 200, classifier->classify(bytes).to_json());
        } catch (const InputError& e) {
            send_error(res, 400, error_code::undecodable_image, e.what());
        }
    });
}

Server::Server(std::shared_ptr<const Classifier> classifier, ServiceConfig config)
    : impl_(std::make_unique<Impl>()) {
    if (!classifier) throw ConfigError("server needs a classifier");
    impl_->classifier = std::move(classifier);
    impl_->config = std::move(config);
    impl_->routes();
}

Server::~Server() { stop(); }

int Server::bind() {
    int port = impl_->config.port;
    if (port == 0) {
        port = impl_->http.bind_to_any_port(impl_->config.host);
        if (port < 0) throw IoError("cannot bind " + impl_->config.host + " on any port");
    } else if (!impl_->http.bind_to_port(impl_->config.host, port)) {
        throw IoError("cannot bind " + impl_->config.host + ":" + std::to_string(port));
    }
    impl_->bound = true;
    return port;
}

void Server::run() {
    if (!impl_->bound) throw StateError("Server::run called before bind");
    impl_->http.listen_after_bind();
}

void Server::stop() {
    if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

bool Server::running() const { return impl_->http.is_running(); }

}  // namespace aedes::service
