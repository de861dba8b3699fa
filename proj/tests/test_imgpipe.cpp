#include <doctest.h>

#include <cmath>
#include <set>

#include "aedes/dataset.hpp"
#include "aedes/image.hpp"
#include "aedes/preprocess.hpp"
#include "support.hpp"

using namespace aedes;
using namespace aedes::imgpipe;

namespace {

Image8 solid(std::size_t h, std::size_t w, std::size_t channels, std::uint8_t value) {
    return {h, w, channels, std::vector<std::uint8_t>(h * w * channels, value)};
}

struct WarningCapture {
    std::vector<std::string> messages;
    WarningSink previous;
    WarningCapture() {
        previous = set_warning_sink([this](const std::string& m) { messages.push_back(m); });
    }
    ~WarningCapture() { set_warning_sink(std::move(previous)); }
};

}  // namespace

TEST_SUITE("imgpipe") {
    TEST_CASE("rescale endpoints and midpoint") {
        const auto r = rescale(Tensor({3}, {0.0f, 128.0f, 255.0f}));
        CHECK(r[0] == 0.0f);
        CHECK(r[1] == doctest::Approx(128.0 / 255.0).epsilon(1e-7));
        CHECK(r[1] == doctest::Approx(0.501960784).epsilon(1e-7));
        CHECK(r[2] == 1.0f);
        CHECK_THROWS_AS(rescale(Tensor({1}, {256.0f})), ContractError);
        CHECK_THROWS_AS(rescale(Tensor({1}, {-1.0f})), ContractError);
    }

    TEST_CASE("resize to the same size is the identity") {
        const auto img = testing::random_tensor({5, 7, 3}, 1, 0.0, 1.0).cast<float>();
        const auto out = resize_bilinear(img, 5, 7);
        for (std::size_t i = 0; i < img.size(); ++i) CHECK(out[i] == doctest::Approx(img[i]).epsilon(1e-6));
    }

    TEST_CASE("resize keeps a constant image constant") {
        const Tensor img({4, 6, 3}, 0.3f);
        for (auto [h, w] : {std::pair{1, 1}, {9, 2}, {13, 17}}) {
            const auto out = resize_bilinear(img, h, w);
            for (float v : out.data()) CHECK(v == doctest::Approx(0.3f).epsilon(1e-6));
        }
    }

    TEST_CASE("bilinear 2x2 checker upscaled to 3x3 has center 0.5") {
        Tensor img({2, 2, 3});
        const float vals[4] = {0, 1, 1, 0};
        for (std::size_t p = 0; p < 4; ++p)
            for (std::size_t c = 0; c < 3; ++c) img[p * 3 + c] = vals[p];
        const auto out = resize_bilinear(img, 3, 3);
        for (std::size_t c = 0; c < 3; ++c) CHECK(out.at({1, 1, c}) == doctest::Approx(0.5).epsilon(1e-7));
        CHECK_THROWS_AS(resize_bilinear(img, 0, 3), DimensionError);
    }

    TEST_CASE("normalize by formula") {
        ChannelStats stats{{0.5f, 0.5f, 0.5f}, {0.25f, 0.25f, 0.25f}};
        const auto out = normalize(Tensor({1, 1, 1, 3}, {0.75f, 0.5f, 0.25f}), stats);
        CHECK(out[0] == doctest::Approx(1.0));
        CHECK(out[1] == doctest::Approx(0.0));
        CHECK(out[2] == doctest::Approx(-1.0));
    }

    TEST_CASE("normalize leaves standardized data unchanged") {
        const Tensor t({4, 1, 1, 1}, {1.0f, -1.0f, 1.0f, -1.0f});
        const auto stats = fit_channel_stats(t);
        CHECK(stats.mean[0] == doctest::Approx(0.0));
        CHECK(stats.std[0] == doctest::Approx(1.0));
        const auto out = normalize(t, stats);
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(out[i] == doctest::Approx(t[i]).epsilon(1e-6));
    }

    TEST_CASE("normalize a constant channel gives zeros and a warning") {
        WarningCapture warnings;
        Tensor t({3, 1, 1, 2});
        for (std::size_t i = 0; i < 3; ++i) {
            t[i * 2] = 0.7f;
            t[i * 2 + 1] = static_cast<float>(i);
        }
        const auto out = normalize(t, fit_channel_stats(t));
        for (std::size_t i = 0; i < 3; ++i) CHECK(out[i * 2] == 0.0f);
        CHECK(warnings.messages.size() == 1);
    }

    TEST_CASE("zca on a 2-d anisotropic set matches a closed-form eigensolve") {
        // Points (±1, ±1) scaled by (3, 0.5) and rotated by 30 degrees.
        const double sx = 3.0, sy = 0.5, th = std::acos(-1.0) / 6.0;
        const double pts[4][2] = {{1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
        Tensor64 data({4, 2});
        for (std::size_t i = 0; i < 4; ++i) {
            const double x = pts[i][0] * sx, y = pts[i][1] * sy;
            data[i * 2] = std::cos(th) * x - std::sin(th) * y;
            data[i * 2 + 1] = std::sin(th) * x + std::cos(th) * y;
        }
        const double eps = 1e-6;
        const auto zca = zca_fit(data, eps);

        // Covariance of zero-mean data, then the 2x2 symmetric eigenproblem by hand.
        double a = 0, b = 0, d = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            a += data[i * 2] * data[i * 2];
            b += data[i * 2] * data[i * 2 + 1];
            d += data[i * 2 + 1] * data[i * 2 + 1];
        }
        a /= 4, b /= 4, d /= 4;
        const double tr = a + d, det = a * d - b * b;
        const double disc = std::sqrt(tr * tr / 4 - det);
        const double l1 = tr / 2 + disc, l2 = tr / 2 - disc;
        // Unit eigenvector for l1: (b, l1 - a).
        double vx = b, vy = l1 - a;
        const double norm = std::hypot(vx, vy);
        vx /= norm, vy /= norm;
        const double f1 = 1 / std::sqrt(l1 + eps), f2 = 1 / std::sqrt(l2 + eps);
        // W = f1 v v^T + f2 u u^T with u = (-vy, vx).
        const double w[4] = {f1 * vx * vx + f2 * vy * vy, (f1 - f2) * vx * vy, (f1 - f2) * vx * vy,
                             f1 * vy * vy + f2 * vx * vx};
        for (int i = 0; i < 4; ++i) CHECK(zca.whitening[i] == doctest::Approx(w[i]).epsilon(1e-8));
    }

    TEST_CASE("zca applied to the training mean is zero") {
        const auto data = testing::random_tensor({30, 5}, 4);
        const auto zca = zca_fit(data);
        const auto z = zca_apply(zca, zca.mean);
        for (double v : z) CHECK(v == 0.0);
        CHECK_THROWS_AS(zca_apply(zca, std::vector<double>(4, 0.0)), DimensionError);
    }

    TEST_CASE("zca with huge epsilon suppresses everything") {
        const auto zca = zca_fit(testing::random_tensor({30, 4}, 9), 1e30);
        for (double v : zca.whitening) CHECK(std::abs(v) < 1e-14);
    }

    TEST_CASE("zca error contracts") {
        CHECK_THROWS_AS(zca_fit(Tensor64({1, 3})), DataError);
        CHECK_THROWS_AS(zca_fit(Tensor64({4, 10}), 1e-6, 8), ConfigError);
    }

    TEST_CASE("preprocessing applies normalization then zca") {
        const auto batch = testing::random_tensor({12, 3, 3, 3}, 2, 0.0, 1.0).cast<float>();
        const auto plain = fit_preprocessing(batch, std::nullopt);
        CHECK_FALSE(plain.zca.has_value());
        const auto whitened = fit_preprocessing(batch, 1e-3);
        REQUIRE(whitened.zca.has_value());
        CHECK(whitened.zca->dimension() == 27);
        CHECK(whitened.apply(batch).shape() == batch.shape());
    }

    TEST_CASE("synthetic generator is deterministic with exact counts") {
        const auto a = generate_synthetic_dataset(100, 16, 16, Rng(11));
        const auto b = generate_synthetic_dataset(100, 16, 16, Rng(11));
        CHECK(a.size() == 200);
        CHECK(std::count_if(a.samples.begin(), a.samples.end(), [](const Sample& s) { return s.label == 1; }) == 100);
        CHECK(fingerprint(a) == fingerprint(b));
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.samples[i].image == b.samples[i].image);
        CHECK(fingerprint(a) != fingerprint(generate_synthetic_dataset(100, 16, 16, Rng(12))));
        for (const auto& s : a.samples) {
            CHECK(s.image.shape() == Shape{16, 16, 3});
            CHECK(*std::min_element(s.image.data().begin(), s.image.data().end()) >= 0.0f);
            CHECK(*std::max_element(s.image.data().begin(), s.image.data().end()) <= 1.0f);
        }
    }

    TEST_CASE("synthetic classes are not separable by mean brightness") {
        const auto ds = generate_synthetic_dataset(200, 32, 32, Rng(5));
        std::vector<std::pair<double, int>> means;
        for (const auto& s : ds.samples) {
            double m = 0;
            for (float v : s.image.data()) m += v;
            means.emplace_back(m / static_cast<double>(s.image.size()), s.label);
        }
        // Best single threshold on the mean, either polarity.
        std::sort(means.begin(), means.end());
        std::size_t ones_below = 0, best = 0;
        const std::size_t n = means.size(), total_ones = 200;
        for (std::size_t i = 0; i <= n; ++i) {
            const std::size_t zeros_below = i - ones_below;
            const std::size_t correct = zeros_below + (total_ones - ones_below);
            best = std::max({best, correct, n - correct});
            if (i < n && means[i].second == 1) ++ones_below;
        }
        CHECK(static_cast<double>(best) / static_cast<double>(n) <= 0.6);
    }

    TEST_CASE("load_dataset layout, labels and report") {
        testing::TempDir dir;
        std::filesystem::create_directories(dir / "aegypti");
        std::filesystem::create_directories(dir / "albopictus");
        const auto png = encode_png(solid(10, 12, 3, 200));
        write_file(dir / "aegypti/a.png", png);
        write_file(dir / "aegypti/b.png", encode_png(solid(5, 5, 1, 30)));
        write_file(dir / "albopictus/c.png", encode_jpeg(solid(8, 8, 3, 90)));
        const std::string junk = "not an image";
        write_file(dir / "albopictus/d.txt", {reinterpret_cast<const std::uint8_t*>(junk.data()), junk.size()});

        WarningCapture warnings;
        const auto ds = load_dataset(dir.path());
        REQUIRE(ds.size() == 3);
        CHECK(ds.samples[0].label == 0);
        CHECK(ds.samples[1].label == 0);
        CHECK(ds.samples[2].label == 1);
        for (const auto& s : ds.samples) CHECK(s.image.shape() == Shape{180, 180, 3});
        CHECK(ds.class_names == std::vector<std::string>{"aegypti", "albopictus"});
        CHECK(ds.report.classes[1].skipped == 1);
        CHECK(ds.report.skipped_files.size() == 1);
        CHECK(warnings.messages.size() == 1);
        CHECK(ds.samples[0].image[0] == doctest::Approx(200.0 / 255.0).epsilon(1e-6));
    }

    TEST_CASE("load_dataset structural errors") {
        testing::TempDir dir;
        CHECK_THROWS_AS(load_dataset(dir / "missing"), DataError);
        std::filesystem::create_directories(dir / "aegypti");
        write_file(dir / "aegypti/a.png", encode_png(solid(4, 4, 3, 1)));
        CHECK_THROWS_AS(load_dataset(dir.path()), DataError);
        std::filesystem::create_directories(dir / "albopictus");
        CHECK_THROWS_AS(load_dataset(dir.path()), DataError);  // empty class
        write_file(dir / "albopictus/b.png", encode_png(solid(4, 4, 3, 1)));
        CHECK(load_dataset(dir.path(), 8, 8).size() == 2);
        std::filesystem::create_directories(dir / "third");
        CHECK_THROWS_AS(load_dataset(dir.path(), 8, 8), DataError);
    }

    TEST_CASE("split is stratified, disjoint, complete and deterministic") {
        const auto ds = generate_synthetic_dataset(50, 8, 8, Rng(1));
        const auto s = make_split(ds.samples, {}, 9);
        CHECK(s.train.size() == 70);
        CHECK(s.validation.size() == 20);
        CHECK(s.test.size() == 10);
        std::set<std::size_t> all(s.train.begin(), s.train.end());
        all.insert(s.validation.begin(), s.validation.end());
        all.insert(s.test.begin(), s.test.end());
        CHECK(all.size() == 100);
        const auto again = make_split(ds.samples, {}, 9);
        CHECK(again.train == s.train);
        CHECK(again.test == s.test);
        CHECK(make_split(ds.samples, {}, 10).train != s.train);
        const auto two = make_split(ds.samples, {0.8, 0.2, 0.0}, 9);
        CHECK(two.train.size() == 80);
        CHECK(two.validation.size() == 20);
        CHECK(two.test.empty());
        CHECK_THROWS_AS(make_split(ds.samples, {0.5, 0.2, 0.1}, 1), ConfigError);
    }

    TEST_CASE("decoder handles gray, alpha and garbage") {
        std::vector<std::string> notes;
        const auto gray = to_rgb_tensor(decode_image(encode_png(solid(3, 3, 1, 50))), &notes);
        CHECK(gray.shape() == Shape{3, 3, 3});
        CHECK(gray[2] == 50.0f);
        CHECK(notes.size() == 1);
        notes.clear();
        const auto rgba = to_rgb_tensor(decode_image(encode_png(solid(3, 3, 4, 70))), &notes);
        CHECK(rgba.shape() == Shape{3, 3, 3});
        CHECK(notes.size() == 1);
        const std::vector<std::uint8_t> bad{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n', 0, 0, 0};
        CHECK(sniff_format(bad) == ImageFormat::png);
        CHECK_THROWS_AS(decode_image(bad), InputError);
        const std::vector<std::uint8_t> text{'h', 'e', 'l', 'l', 'o'};
        CHECK(sniff_format(text) == ImageFormat::unknown);
        CHECK_THROWS_AS(decode_image(text), InputError);
    }

    TEST_CASE("png round trip is lossless") {
        const auto img = to_image8(testing::random_tensor({6, 5, 3}, 8, 0.0, 1.0).cast<float>());
        const auto back = decode_image(encode_png(img));
        CHECK(back.pixels == img.pixels);
    }
}
