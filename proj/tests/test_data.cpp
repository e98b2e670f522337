#include "doctest.h"
#include "support.hpp"

#include "specreg/data.hpp"

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace specreg;
using namespace testing;

namespace {

std::vector<std::uint8_t> idx_header(std::uint8_t type, std::vector<std::uint32_t> dims) {
    std::vector<std::uint8_t> b{0, 0, type, static_cast<std::uint8_t>(dims.size())};
    for (auto d : dims)
        for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(d >> s));
    return b;
}

double mean_of(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / double(x.size()); }

double stddev_of(std::span<const double> x) {
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / double(x.size()));
}

} // namespace

TEST_CASE("synthetic generation") {
    SyntheticSpec s;
    s.num_classes = 3;
    s.samples_per_class = 50;
    s.input_dim = 4;
    s.seed = 9;
    const DatasetPair a = generate_synthetic(s), b = generate_synthetic(s);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.train.size() == 150);
    CHECK(a.train.split == Split::train);
    CHECK(a.test.split == Split::test);
    CHECK(a.train.inputs != a.test.inputs);
    s.seed = 10;
    CHECK(generate_synthetic(s).train != a.train);

    s.noise_stddev = -1.0;
    CHECK_THROWS_AS(generate_synthetic(s), ValueError);
}

TEST_CASE("well separated gaussians are linearly separable") {
    SyntheticSpec s;
    s.num_classes = 2;
    s.samples_per_class = 500;
    s.input_dim = 2;
    s.center_scale = 5.0;
    s.noise_stddev = 0.0;
    s.seed = 3;
    const DatasetPair d = generate_synthetic(s);
    // Linear probe: nearest class mean, fit on train, scored on test.
    std::vector<double> mean0(2), mean1(2);
    std::size_t n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < d.train.size(); ++i) {
        auto& m = d.train.labels[i] == 0 ? mean0 : mean1;
        (d.train.labels[i] == 0 ? n0 : n1)++;
        for (int k = 0; k < 2; ++k) m[k] += d.train.inputs.sample(i)[k];
    }
    for (int k = 0; k < 2; ++k) {
        mean0[k] /= double(n0);
        mean1[k] /= double(n1);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.test.size(); ++i) {
        const auto x = d.test.inputs.sample(i);
        double d0 = 0, d1 = 0;
        for (int k = 0; k < 2; ++k) {
            d0 += std::pow(x[k] - mean0[k], 2);
            d1 += std::pow(x[k] - mean1[k], 2);
        }
        correct += (d0 < d1 ? 0 : 1) == d.test.labels[i];
    }
    CHECK(double(correct) / double(d.test.size()) >= 0.99);
}

TEST_CASE("label noise rate") {
    SyntheticSpec s;
    s.num_classes = 4;
    s.samples_per_class = 2500;
    s.input_dim = 2;
    s.noise_stddev = 0.0;
    s.center_scale = 10.0;
    s.label_noise = 0.2;
    s.seed = 4;
    const DatasetPair noisy = generate_synthetic(s);
    REQUIRE(noisy.train.size() == 10000);
    // Samples are drawn class by class, so the true class of sample i is i / 2500.
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < noisy.train.size(); ++i) flipped += noisy.train.labels[i] != int(i / 2500);
    CHECK(std::abs(double(flipped) / 10000.0 - 0.2) <= 0.02);
}

TEST_CASE("two spirals") {
    SyntheticSpec s;
    s.kind = SyntheticKind::two_spirals;
    s.samples_per_class = 100;
    s.seed = 5;
    const DatasetPair d = generate_synthetic(s);
    CHECK(d.train.sample_shape() == Shape{2});
    CHECK(d.train.num_classes == 2);
}

TEST_CASE("IDX parsing") {
    SUBCASE("crafted 2-image 2x2 file") {
        auto b = idx_header(0x08, {2, 2, 2});
        for (std::uint8_t v : {0, 51, 102, 255, 1, 2, 3, 4}) b.push_back(v);
        const IdxArray a = parse_idx(b);
        CHECK(a.dims == std::vector<std::uint32_t>{2, 2, 2});
        const Tensor t = idx_to_images(a);
        CHECK(t.shape == Shape{2, 2, 2});
        CHECK(t.data[1] == 51.0 / 255.0);
        CHECK(t.data[3] == 1.0);
        CHECK(t.data[7] == 4.0 / 255.0);
        CHECK(encode_idx(a) == b);
    }
    SUBCASE("bad magic shows the bytes") {
        const std::vector<std::uint8_t> b{0xDE, 0xAD, 0xBE, 0xEF, 0, 0, 0, 0};
        try {
            parse_idx(b);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            const std::string w = e.what();
            CHECK(w.find("DE AD BE EF") != std::string::npos);
        }
    }
    SUBCASE("truncated payload reports sizes") {
        auto b = idx_header(0x08, {3, 2});
        b.push_back(7);
        try {
            parse_idx(b);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            const std::string w = e.what();
            CHECK(w.find("6") != std::string::npos);
            CHECK(w.find("1") != std::string::npos);
        }
    }
    SUBCASE("dimension overflow is caught before allocation") {
        const auto b = idx_header(0x08, {0xFFFFFFFFu, 0xFFFFFFFFu, 0xFFFFFFFFu});
        CHECK_THROWS_AS(parse_idx(b), FormatError);
    }
    SUBCASE("labels") {
        auto b = idx_header(0x08, {3});
        for (std::uint8_t v : {2, 0, 1}) b.push_back(v);
        CHECK(idx_to_labels(parse_idx(b)) == std::vector<int>{2, 0, 1});
    }
}

TEST_CASE("IDX files round-trip byte for byte") {
    const auto dir = std::filesystem::path(SPECREG_TEST_TMP) / "idx";
    std::filesystem::create_directories(dir);
    auto b = idx_header(0x08, {2, 3});
    for (std::uint8_t v : {9, 8, 7, 6, 5, 4}) b.push_back(v);
    const IdxArray a = parse_idx(b);
    write_idx(dir / "a.idx", a);
    CHECK(read_idx(dir / "a.idx") == a);
    write_idx(dir / "b.idx", read_idx(dir / "a.idx"));
    CHECK(encode_idx(read_idx(dir / "b.idx")) == b);

    SyntheticSpec s;
    s.num_classes = 3;
    s.samples_per_class = 7;
    s.input_dim = 5;
    const DatasetPair d = generate_synthetic(s);
    save_idx_dataset(d.train, dir / "x.idx", dir / "y.idx");
    const Dataset back = load_idx_dataset(dir / "x.idx", dir / "y.idx", 3, Split::train);
    CHECK(back == d.train);
}

TEST_CASE("global contrast normalization") {
    Dataset ds{Tensor({3, 4}, {2, 2, 2, 2, 1, 2, 3, 4, -5, 0.5, 7, 100}), {0, 1, 0}, 2};
    const Dataset g = global_contrast_normalize(ds);
    CHECK(g.labels == ds.labels);
    CHECK(g.inputs.shape == ds.inputs.shape);
    for (double v : g.inputs.sample(0)) CHECK(v == 0.0);
    for (std::size_t i = 1; i < 3; ++i) {
        CHECK(std::abs(mean_of(g.inputs.sample(i))) <= 1e-12);
        CHECK(std::abs(stddev_of(g.inputs.sample(i)) - 1.0) <= 1e-12);
    }
    const Dataset gg = global_contrast_normalize(g);
    for (std::size_t i = 0; i < g.inputs.size(); ++i) CHECK(std::abs(gg.inputs.data[i] - g.inputs.data[i]) <= 1e-10);
    CHECK_THROWS_AS(global_contrast_normalize(ds, 0.0), ValueError);
}

TEST_CASE("augmentation") {
    const Tensor batch = gaussian_tensor({4, 2, 5, 5}, 6);
    SUBCASE("flip twice is the identity") {
        std::vector<double> img(batch.sample(0).begin(), batch.sample(0).end());
        const auto orig = img;
        augment_sample(img, 2, 5, 5, true, 0, 0, 0);
        CHECK(img != orig);
        double s0 = std::accumulate(orig.begin(), orig.end(), 0.0), s1 = std::accumulate(img.begin(), img.end(), 0.0);
        CHECK(s1 == doctest::Approx(s0).epsilon(1e-15));
        augment_sample(img, 2, 5, 5, true, 0, 0, 0);
        CHECK(img == orig);
    }
    SUBCASE("no flip, no crop is the identity") {
        Rng rng(1);
        CHECK(augment(batch, {false, 0}, rng) == batch);
    }
    SUBCASE("centered crop without flip is the identity") {
        std::vector<double> img(batch.sample(1).begin(), batch.sample(1).end());
        const auto orig = img;
        augment_sample(img, 2, 5, 5, false, 2, 2, 2);
        CHECK(img == orig);
    }
    SUBCASE("a shifted crop moves pixels and zero-fills") {
        std::vector<double> img(25);
        std::iota(img.begin(), img.end(), 1.0);
        augment_sample(img, 1, 5, 5, false, 0, 0, 1); // shift down-right by one
        CHECK(img[0] == 0.0);
        CHECK(img[6] == 1.0);
    }
    SUBCASE("flip keeps the pixel sum of every image") {
        Rng rng(2);
        const Tensor out = augment(batch, {true, 0}, rng);
        for (std::size_t i = 0; i < 4; ++i) {
            const double a = std::accumulate(batch.sample(i).begin(), batch.sample(i).end(), 0.0);
            const double b = std::accumulate(out.sample(i).begin(), out.sample(i).end(), 0.0);
            CHECK(b == doctest::Approx(a).epsilon(1e-14));
        }
    }
    SUBCASE("deterministic given the stream") {
        Rng a(3), b(3);
        CHECK(augment(batch, {true, 2}, a) == augment(batch, {true, 2}, b));
    }
    SUBCASE("oversized padding is rejected") {
        Rng rng(4);
        CHECK_THROWS_AS(augment(batch, {false, 5}, rng), ValueError);
        CHECK_THROWS_AS(augment(Tensor({2, 3}), {true, 0}, rng), ValueError);
    }
}
