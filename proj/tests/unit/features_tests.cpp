#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "convfeat/features.hpp"
#include "oracles.hpp"

using namespace convfeat;
namespace fs = std::filesystem;

namespace {

NetworkSpec pooled_net() {
    NetworkSpec spec;
    spec.name = "feat_net";
    spec.input_side = 8;
    spec.n_classes = 3;
    LayerSpec c;
    c.kind = LayerKind::conv;
    c.filters = 4;
    c.kernel_h = c.kernel_w = 3;
    c.activation = Activation::relu;
    LayerSpec p;
    p.kind = LayerKind::maxpool;
    p.kernel_h = p.kernel_w = 2;
    p.stride_h = p.stride_w = 2;
    LayerSpec f;
    f.kind = LayerKind::fully_connected;
    f.units = 5;
    f.activation = Activation::relu;
    LayerSpec s;
    s.kind = LayerKind::softmax;
    spec.layers = {c, p, f, s};
    return spec;
}

std::vector<LabeledImage> some_images(int n, int side, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledImage> imgs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& img = imgs[static_cast<std::size_t>(i)];
        img.pixels = oracles::random_tensor(
            {static_cast<std::size_t>(side), static_cast<std::size_t>(side)}, rng, 0.0, 1.0);
        img.class_id = i % 3;
    }
    return imgs;
}

}  // namespace

TEST_CASE("extract flattens the tapped activation per sample") {
    NetworkSpec spec = pooled_net();
    Rng rng(71);
    Checkpoint ckpt = init_weights(spec, rng);
    ckpt.epoch = 4;
    auto images = some_images(7, 8, 72);

    // taps: 0 = raw input, 1 = pool output (conv+pool), 2 = fc output.
    REQUIRE(feature_taps(spec) == std::vector<std::size_t>{0, 2, 3});

    FeatureMatrix raw = extract(ckpt, images, 0);
    REQUIRE(raw.values.shape() == Shape{7, 64});
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t k = 0; k < 64; ++k) {
            CHECK(raw.values(i, k) == images[i].pixels[k]);
        }
    }
    CHECK(raw.layer_index == 0);
    CHECK(raw.source_epoch == 4);
    CHECK(raw.spec_name == "feat_net");
    CHECK(raw.n_classes == 3);
    CHECK(raw.labels == std::vector<int>{0, 1, 2, 0, 1, 2, 0});

    // A pooled tap equals the manually-run forward pass, sample by sample.
    FeatureMatrix pooled = extract(ckpt, images, 1);
    REQUIRE(pooled.values.shape() == Shape{7, 4 * 3 * 3});
    for (std::size_t i = 0; i < images.size(); ++i) {
        Tensor one({1, 1, 8, 8});
        std::copy(images[i].pixels.data(), images[i].pixels.data() + 64, one.data());
        Activations acts = forward(ckpt, one, Mode::eval, nullptr, nullptr);
        const Tensor& tap = acts.layer_out[2];
        for (std::size_t k = 0; k < tap.size(); ++k) {
            CHECK(pooled.values(i, k) == tap[k]);
        }
    }

    FeatureMatrix fc_tap = extract(ckpt, images, 2);
    CHECK(fc_tap.values.shape() == Shape{7, 5});

    CHECK_THROWS_AS(extract(ckpt, images, 3), LayerOutOfRange);
    CHECK_THROWS_AS(extract(ckpt, images, -1), LayerOutOfRange);
}

TEST_CASE("feature matrices round-trip through disk") {
    NetworkSpec spec = pooled_net();
    Rng rng(81);
    Checkpoint ckpt = init_weights(spec, rng);
    ckpt.epoch = 9;
    auto images = some_images(5, 8, 82);
    FeatureMatrix m = extract(ckpt, images, 1);

    const fs::path dir = fs::temp_directory_path() / "convfeat_features_tests";
    fs::create_directories(dir);
    const fs::path p = dir / "layer1.fmx";
    save_matrix(m, p);
    CHECK(fs::exists(p));
    CHECK(fs::exists(dir / "layer1.fmx.json"));

    FeatureMatrix back = load_matrix(p);
    CHECK(back.values.shape() == m.values.shape());
    CHECK(oracles::max_abs_diff(back.values, m.values) == 0.0);
    CHECK(back.labels == m.labels);
    CHECK(back.layer_index == 1);
    CHECK(back.source_epoch == 9);
    CHECK(back.spec_name == "feat_net");
    CHECK(back.n_classes == 3);

    CHECK_THROWS_AS(load_matrix(dir / "nope.fmx"), IoError);

    // A valid tensor without its sidecar fails cleanly.
    const fs::path orphan = dir / "orphan.fmx";
    save_tensor(orphan, m.values, Dtype::f64);
    CHECK_THROWS_AS(load_matrix(orphan), IoError);
}

TEST_CASE("zscore standardizes columns and centers constant ones") {
    FeatureMatrix m;
    m.values = Tensor({4, 3}, {1.0, 5.0, 2.0,
                               2.0, 5.0, 4.0,
                               3.0, 5.0, 6.0,
                               4.0, 5.0, 8.0});
    m.labels = {0, 0, 1, 1};
    m.n_classes = 2;

    FeatureMatrix z = zscore(m);
    for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < 4; ++i) mean += z.values(i, j);
        mean /= 4.0;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
        for (std::size_t i = 0; i < 4; ++i) var += z.values(i, j) * z.values(i, j);
        if (j == 1) {
            CHECK(var == 0.0);  // constant column only centered
        } else {
            CHECK(var / 4.0 == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    CHECK(z.labels == m.labels);
    // Input untouched.
    CHECK(m.values(0, 0) == 1.0);
}
