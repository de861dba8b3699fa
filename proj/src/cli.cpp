#include "aedes/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "aedes/dataset.hpp"
#include "aedes/image.hpp"
#include "aedes/kernels.hpp"
#include "aedes/modelfmt.hpp"
#include "aedes/service.hpp"
#include "aedes/train.hpp"

namespace aedes::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ImageSize {
    std::size_t height = 180;
    std::size_t width = 180;
};

ImageSize parse_image_size(const std::string& text) {
    ImageSize s;
    const auto x = text.find_first_of("xX");
    try {
        if (x == std::string::npos) {
            s.height = s.width = std::stoul(text);
        } else {
            s.height = std::stoul(text.substr(0, x));
            s.width = std::stoul(text.substr(x + 1));
        }
    } catch (const std::exception&) {
        throw ConfigError("--image-size must be N or HxW, got '" + text + "'");
    }
    if (s.height == 0 || s.width == 0) throw ConfigError("--image-size must be positive");
    return s;
}

imgpipe::SplitRatios parse_ratios(const std::string& text) {
    imgpipe::SplitRatios r;
    char sep1 = 0, sep2 = 0;
    std::istringstream in(text);
    if (!(in >> r.train >> sep1 >> r.validation >> sep2 >> r.test) || sep1 != ',' || sep2 != ',') {
        throw ConfigError("--ratios must be TRAIN,VAL,TEST, got '" + text + "'");
    }
    return r;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Options shared by every subcommand.
struct Common {
    std::uint64_t seed = 0;
    bool strict = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--seed", c.seed, "Run seed (dataset generation, splits, init, shuffling)");
    sub->add_flag("--strict", c.strict, "Single-threaded, bit-reproducible execution");
}

struct DataSource {
    std::string data_dir;
    bool synthetic = false;
    std::size_t n_per_class = 500;
    std::string image_size = "180";
    std::string ratios = "0.7,0.2,0.1";
};

void add_data_options(CLI::App* sub, DataSource& d, bool with_image_size) {
    sub->add_option("--data", d.data_dir, "Dataset root: <root>/<class>/<images>");
    sub->add_flag("--synthetic", d.synthetic, "Use the generated two-texture dataset");
    sub->add_option("--n-per-class", d.n_per_class, "Synthetic samples per class")->check(CLI::PositiveNumber);
    if (with_image_size) sub->add_option("--image-size", d.image_size, "Input size N or HxW");
    sub->add_option("--ratios", d.ratios, "Split ratios TRAIN,VAL,TEST");
}

imgpipe::Dataset load_source(const DataSource& d, const ImageSize& size, std::uint64_t seed, std::ostream& err) {
    if (d.synthetic == !d.data_dir.empty()) throw ConfigError("give exactly one of --data or --synthetic");
    imgpipe::Dataset ds;
    if (d.synthetic) {
        ds = imgpipe::generate_synthetic_dataset(d.n_per_class, size.height, size.width, Rng(seed).substream("synthetic"));
    } else {
        ds = imgpipe::load_dataset(d.data_dir, size.height, size.width);
        err << "load report: " << ds.report.to_json() << '\n';
    }
    ds.split = imgpipe::make_split(ds.samples, parse_ratios(d.ratios), seed);
    return ds;
}

// ---------------------------------------------------------------------------

int cmd_synth(const DataSource& d, const std::string& out_dir, const Common& c, std::ostream& out, std::ostream& err) {
    const auto size = parse_image_size(d.image_size);
    const auto ds = imgpipe::generate_synthetic_dataset(d.n_per_class, size.height, size.width,
                                                        Rng(c.seed).substream("synthetic"));
    const auto written = imgpipe::write_dataset(ds, out_dir);
    err << "wrote " << written << " images to " << out_dir << '\n';
    out << json{{"root", out_dir},
                {"written", written},
                {"per_class", {{"aegypti", d.n_per_class}, {"albopictus", d.n_per_class}}},
                {"image_size", {size.height, size.width, 3}},
                {"seed", c.seed}}
               .dump()
        << '\n';
    return ok;
}

struct TrainArgs {
    DataSource data;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    bool zca = false;
    double zca_epsilon = imgpipe::kZcaEpsilon;
    std::string out_dir = "run";
    std::string precision = "f32";
    std::string model_version;
};

int cmd_train(const TrainArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const auto size = parse_image_size(a.data.image_size);
    train::TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.adam.learning_rate = a.lr;
    cfg.seed = c.seed;
    cfg.strict = c.strict;
    cfg.precision = a.precision == "f64" ? Precision::f64 : Precision::f32;
    cfg.split = parse_ratios(a.data.ratios);
    if (a.zca) cfg.zca_epsilon = a.zca_epsilon;
    cfg.validate();

    const auto ds = load_source(a.data, size, c.seed, err);
    const auto spec = reference16({size.height, size.width, 3}, cfg.conv_dropout, cfg.dense_dropout);
    err << model_summary(spec);
    err << "training on " << ds.split.train.size() << " samples, validating on " << ds.split.validation.size()
        << " (" << cfg.epochs << " epochs)\n";

    const auto result = train::train(spec, ds, cfg, [&](const train::EpochMetrics& m) {
        char line[200];
        std::snprintf(line, sizeof line, "epoch %zu/%zu - loss: %.4f - acc: %.4f - val_loss: %.4f - val_acc: %.4f\n",
                      m.epoch, cfg.epochs, m.train_loss, m.acc, m.val_loss, m.val_acc);
        err << line << std::flush;
    });

    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    modelfmt::Metadata meta;
    meta.class_names = imgpipe::kSpeciesNames;
    meta.input_shape = spec.input_shape;
    meta.threshold = train::kDecisionThreshold;
    meta.model_version = a.model_version.empty() ? spec.name + "/seed-" + std::to_string(c.seed) : a.model_version;
    meta.training_seed = c.seed;
    const auto bytes = modelfmt::save_model(result.network, result.preprocessing, meta, dir / "model.maed");

    const std::string csv = train::metrics_csv(result.history);
    const std::string mjson = train::metrics_json(result.history);
    imgpipe::write_file(dir / "metrics.csv", {reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()});
    imgpipe::write_file(dir / "metrics.json", {reinterpret_cast<const std::uint8_t*>(mjson.data()), mjson.size()});

    json manifest{
        {"tool_version", kToolVersion},
        {"seed", c.seed},
        {"config",
         {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.adam.learning_rate},
          {"adam", {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"epsilon", cfg.adam.epsilon}}},
          {"precision", a.precision},
          {"dropout", {cfg.conv_dropout, cfg.dense_dropout}},
          {"split_ratios", {cfg.split.train, cfg.split.validation, cfg.split.test}},
          {"zca_epsilon", cfg.zca_epsilon ? json(*cfg.zca_epsilon) : json(nullptr)},
          {"image_size", {size.height, size.width, 3}},
          {"architecture", spec.name},
          {"strict", cfg.strict}}},
        {"dataset",
         {{"source", a.data.synthetic ? std::string("synthetic") : a.data.data_dir},
          {"n_per_class", a.data.synthetic ? json(a.data.n_per_class) : json(nullptr)},
          {"count", ds.size()},
          {"fingerprint", hex64(imgpipe::fingerprint(ds))},
          {"class_names", ds.class_names},
          {"split_sizes", {ds.split.train.size(), ds.split.validation.size(), ds.split.test.size()}}}},
        {"model_file", "model.maed"},
        {"model_version", meta.model_version}};
    const std::string mtext = manifest.dump(2) + "\n";
    imgpipe::write_file(dir / "manifest.json", {reinterpret_cast<const std::uint8_t*>(mtext.data()), mtext.size()});

    const auto& last = result.history.back();
    out << json{{"model", (dir / "model.maed").string()},
                {"bytes", bytes},
                {"epochs", result.history.size()},
                {"acc", last.acc},
                {"val_acc", last.val_acc},
                {"train_loss", last.train_loss},
                {"val_loss", last.val_loss}}
               .dump()
        << '\n';
    return ok;
}

struct EvalArgs {
    DataSource data;
    std::string model;
    std::string split = "test";
    std::optional<double> threshold;
};

int cmd_evaluate(const EvalArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const auto art = modelfmt::load_model(a.model);
    const auto& shape = art.metadata.input_shape;
    auto ds = load_source(a.data, {shape[0], shape[1]}, c.seed, err);
    std::vector<std::size_t> indices;
    if (a.split == "train") indices = ds.split.train;
    else if (a.split == "val") indices = ds.split.validation;
    else if (a.split == "test") indices = ds.split.test;
    else {
        indices.resize(ds.size());
        std::iota(indices.begin(), indices.end(), std::size_t{0});
    }
    if (indices.empty()) throw DataError("split '" + a.split + "' is empty");
    const auto batch = train::prepare(ds, indices, art.preprocessing);
    const double threshold = a.threshold.value_or(art.metadata.threshold);
    const auto e = train::evaluate(art.network, batch, threshold);
    err << "accuracy " << e.accuracy << " on " << e.total() << " samples (" << a.split << " split)\n";
    out << json{{"accuracy", e.accuracy}, {"tp", e.tp}, {"tn", e.tn}, {"fp", e.fp}, {"fn", e.fn},
                {"n", e.total()}, {"split", a.split}, {"threshold", threshold}}
               .dump()
        << '\n';
    return ok;
}

int cmd_predict(const std::string& model, const std::vector<std::string>& images, std::optional<double> threshold,
                std::ostream& out, std::ostream& err) {
    const auto classifier = service::Classifier::from_file(model, threshold);
    int code = ok;
    for (const auto& path : images) {
        try {
            const auto bytes = imgpipe::read_file(path);
            const auto r = classifier.classify(bytes);
            for (const auto& w : r.warnings) err << path << ": " << w << '\n';
            out << json{{"path", path}, {"score", r.score}, {"label", r.label}}.dump() << '\n';
        } catch (const Error& e) {
            out << json{{"path", path}, {"error", e.what()}}.dump() << '\n';
            err << "error: " << path << ": " << e.what() << '\n';
            code = failure;
        }
    }
    return code;
}

int cmd_export(const std::string& model, const std::string& out_path, const std::string& version,
               std::optional<double> threshold, std::ostream& out, std::ostream& err) {
    auto art = modelfmt::load_model(model);
    if (!version.empty()) art.metadata.model_version = version;
    if (threshold) art.metadata.threshold = *threshold;
    const auto bytes = modelfmt::serialize(art.network, art.preprocessing, art.metadata);
    imgpipe::write_file(out_path, bytes);
    // Re-read to prove the exported file loads.
    (void)modelfmt::load_model(out_path);
    err << "exported " << bytes.size() << " bytes to " << out_path << '\n';
    char crc[11];
    std::snprintf(crc, sizeof crc, "0x%08x", modelfmt::crc32(std::span(bytes).first(bytes.size() - 4)));
    out << json{{"out", out_path}, {"bytes", bytes.size()}, {"crc32", crc}, {"model_version", art.metadata.model_version}}
               .dump()
        << '\n';
    return ok;
}

int cmd_serve(const std::string& model, const std::string& bind, std::optional<double> threshold,
              const std::string& cors, std::size_t max_upload, const Common& c, std::ostream& out, std::ostream& err) {
    service::ServiceConfig cfg;
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--bind must be HOST:PORT");
    cfg.host = bind.substr(0, colon);
    try {
        cfg.port = std::stoi(bind.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("--bind port is not a number: " + bind);
    }
    cfg.cors_origin = cors;
    cfg.max_upload_bytes = max_upload;
    cfg.single_worker = c.strict;
    auto classifier = std::make_shared<const service::Classifier>(service::Classifier::from_file(model, threshold));
    service::Server server(classifier, cfg);
    const int port = server.bind();
    out << json{{"listening", "http://" + cfg.host + ":" + std::to_string(port)},
                {"model_version", classifier->metadata().model_version}}
               .dump()
        << std::endl;
    err << "serving " << model << " on http://" << cfg.host << ":" << port << '\n' << std::flush;
    server.run();
    return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Aedes species classifier: synthesize data, train, evaluate, predict, export, serve"};
    app.name("aedes");
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    Common common;

    DataSource synth_data;
    synth_data.n_per_class = 50;
    std::string synth_out = "synthetic-data";
    auto* synth = app.add_subcommand("synth", "Write the synthetic two-class dataset as PNG files");
    add_common(synth, common);
    synth->add_option("--n-per-class", synth_data.n_per_class, "Images per class")->check(CLI::PositiveNumber);
    synth->add_option("--image-size", synth_data.image_size, "Image size N or HxW");
    synth->add_option("--out", synth_out, "Output root");

    TrainArgs targs;
    auto* trn = app.add_subcommand("train", "Train the reference-16 network");
    add_common(trn, common);
    add_data_options(trn, targs.data, true);
    trn->add_option("--epochs", targs.epochs, "Training epochs")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
    trn->add_option("--batch-size", targs.batch_size, "Mini-batch size")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20));
    trn->add_option("--lr", targs.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    trn->add_flag("--zca", targs.zca, "Enable ZCA whitening (input dimension must be <= 4096)");
    trn->add_option("--zca-epsilon", targs.zca_epsilon, "ZCA regularizer");
    trn->add_option("--out", targs.out_dir, "Run directory for model.maed, metrics and manifest");
    trn->add_option("--precision", targs.precision, "Training precision")->check(CLI::IsMember({"f32", "f64"}));
    trn->add_option("--model-version", targs.model_version, "Version string stored in the model");

    EvalArgs eargs;
    auto* evl = app.add_subcommand("evaluate", "Accuracy and confusion counts on a dataset split");
    add_common(evl, common);
    add_data_options(evl, eargs.data, false);
    evl->add_option("--model", eargs.model, "Model file")->required();
    evl->add_option("--split", eargs.split, "Which split")->check(CLI::IsMember({"train", "val", "test", "all"}));
    evl->add_option("--threshold", eargs.threshold, "Decision threshold override")->check(CLI::Range(0.0, 1.0));

    std::string pmodel;
    std::vector<std::string> pimages;
    std::optional<double> pthreshold;
    auto* prd = app.add_subcommand("predict", "Classify image files; one JSON line per image");
    add_common(prd, common);
    prd->add_option("--model", pmodel, "Model file")->required();
    prd->add_option("images", pimages, "Image files")->required();
    prd->add_option("--threshold", pthreshold, "Decision threshold override")->check(CLI::Range(0.0, 1.0));

    std::string xmodel, xout, xversion;
    std::optional<double> xthreshold;
    auto* exp = app.add_subcommand("export", "Validate a model and write a fresh copy");
    add_common(exp, common);
    exp->add_option("--model", xmodel, "Input model file")->required();
    exp->add_option("--out", xout, "Output model file")->required();
    exp->add_option("--model-version", xversion, "Replace the stored version string");
    exp->add_option("--threshold", xthreshold, "Replace the stored threshold")->check(CLI::Range(0.0, 1.0));

    std::string smodel, sbind = "127.0.0.1:8080", scors = "*";
    std::optional<double> sthreshold;
    std::size_t smax = 10 * 1024 * 1024;
    auto* srv = app.add_subcommand("serve", "HTTP classification service");
    add_common(srv, common);
    srv->add_option("--model", smodel, "Model file")->required();
    srv->add_option("--bind", sbind, "HOST:PORT");
    srv->add_option("--threshold", sthreshold, "Decision threshold override")->check(CLI::Range(0.0, 1.0));
    srv->add_option("--cors-origin", scors, "Access-Control-Allow-Origin value (empty disables)");
    srv->add_option("--max-upload", smax, "Upload size cap in bytes");

    std::string dmodel;
    auto* dmp = app.add_subcommand("dump", "Print a model file's header, layer table and CRC status");
    add_common(dmp, common);
    dmp->add_option("--model", dmodel, "Model file")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage;
    }

    const WarningSink previous = set_warning_sink([&err](const std::string& m) { err << "warning: " << m << '\n'; });
    struct Restore {
        WarningSink sink;
        bool strict;
        ~Restore() {
            set_warning_sink(std::move(sink));
            if (strict) kernels::set_thread_count(0);
        }
    } restore{previous, common.strict};
    if (common.strict) kernels::set_thread_count(1);

    try {
        if (*synth) return cmd_synth(synth_data, synth_out, common, out, err);
        if (*trn) return cmd_train(targs, common, out, err);
        if (*evl) return cmd_evaluate(eargs, common, out, err);
        if (*prd) return cmd_predict(pmodel, pimages, pthreshold, out, err);
        if (*exp) return cmd_export(xmodel, xout, xversion, xthreshold, out, err);
        if (*srv) return cmd_serve(smodel, sbind, sthreshold, scors, smax, common, out, err);
        if (*dmp) {
            out << modelfmt::dump(imgpipe::read_file(dmodel));
            return ok;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return failure;
    }
    return usage;
}

}  // namespace aedes::cli
