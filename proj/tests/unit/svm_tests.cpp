#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "convfeat/rng.hpp"
#include "convfeat/svm.hpp"
#include "oracles.hpp"

using namespace convfeat;
namespace fs = std::filesystem;

namespace {

// Two linearly separable 2-D clouds: label +1 at x0 >= 1, -1 at x0 <= -1.
void separable_cloud(Tensor& rows, std::vector<int>& y, std::size_t per_side,
                     std::uint64_t seed) {
    Rng rng(seed);
    rows = Tensor({2 * per_side, 2});
    y.assign(2 * per_side, 0);
    for (std::size_t i = 0; i < 2 * per_side; ++i) {
        const int label = i % 2 == 0 ? 1 : -1;
        rows(i, 0) = label * (1.0 + rng.next_unit());
        rows(i, 1) = rng.next_uniform(-1.0, 1.0);
        y[i] = label;
    }
}

// Three well-separated blobs for multiclass runs.
FeatureMatrix blobs(std::size_t per_class, std::uint64_t seed) {
    const double cx[3] = {0.0, 6.0, 0.0};
    const double cy[3] = {0.0, 0.0, 6.0};
    Rng rng(seed);
    FeatureMatrix m;
    m.values = Tensor({3 * per_class, 2});
    m.n_classes = 3;
    for (std::size_t i = 0; i < 3 * per_class; ++i) {
        const int c = static_cast<int>(i % 3);
        m.values(i, 0) = cx[c] + rng.next_uniform(-0.5, 0.5);
        m.values(i, 1) = cy[c] + rng.next_uniform(-0.5, 0.5);
        m.labels.push_back(c);
    }
    return m;
}

double accuracy_of(const MulticlassSvm& model, const FeatureMatrix& m) {
    std::vector<int> pred = svm_predict(model, m.values);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == m.labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace

TEST_CASE("binary training separates a separable cloud") {
    Tensor rows;
    std::vector<int> y;
    separable_cloud(rows, y, 15, 42);
    LinearSvmModel model = svm_train_binary(rows, y, 10.0, 80, 7);

    for (std::size_t i = 0; i < y.size(); ++i) {
        const double v = model.w[0] * rows(i, 0) + model.w[1] * rows(i, 1) + model.b;
        CHECK(y[i] * v > 0.0);
    }
    CHECK(model.objective_by_epoch.back() < model.objective_by_epoch.front());
}

TEST_CASE("objective series starts at the zero model and never increases") {
    Tensor rows;
    std::vector<int> y;
    separable_cloud(rows, y, 10, 3);
    const double c_reg = 2.5;
    LinearSvmModel model = svm_train_binary(rows, y, c_reg, 25, 11);

    REQUIRE(model.objective_by_epoch.size() == 26);
    // Zero model: hinge is exactly 1 per sample.
    CHECK(model.objective_by_epoch[0] == c_reg * 20.0);
    for (std::size_t e = 1; e < model.objective_by_epoch.size(); ++e) {
        CHECK(model.objective_by_epoch[e] <= model.objective_by_epoch[e - 1]);
    }
    // The returned model is the best checkpoint, so its objective is the
    // final series entry, bit for bit.
    CHECK(svm_objective(model, rows, y) == model.objective_by_epoch.back());
}

TEST_CASE("svm_objective matches a hand evaluation") {
    Tensor rows({2, 2}, {1.0, 0.0, -2.0, 1.0});
    std::vector<int> y{1, -1};
    LinearSvmModel model;
    model.w = {0.5, -1.0};
    model.b = 0.25;
    model.c_reg = 3.0;
    // margins: +1*(0.5+0.25)=0.75 -> hinge 0.25; -1*(-1-1+0.25)=1.75 -> hinge 0
    const double expect = 0.5 * (0.25 + 1.0) + 3.0 * 0.25;
    CHECK(svm_objective(model, rows, y) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("duplicating the data halves the per-sample weight") {
    // J(w,b) with (X, c) equals J(w,b) with ([X;X], c/2) for any model.
    Tensor rows;
    std::vector<int> y;
    separable_cloud(rows, y, 6, 17);
    const std::size_t n = rows.extent(0), d = rows.extent(1);
    Tensor doubled({2 * n, d});
    std::vector<int> y2(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) {
        const std::size_t src = i % n;
        std::copy(rows.data() + src * d, rows.data() + (src + 1) * d, doubled.data() + i * d);
        y2[i] = y[src];
    }
    LinearSvmModel probe;
    probe.w = {0.3, -0.7};
    probe.b = 0.1;
    probe.c_reg = 4.0;
    LinearSvmModel half = probe;
    half.c_reg = 2.0;
    CHECK(svm_objective(half, doubled, y2) ==
          doctest::Approx(svm_objective(probe, rows, y)).epsilon(1e-12));
}

TEST_CASE("binary training is deterministic in the seed") {
    Tensor rows;
    std::vector<int> y;
    separable_cloud(rows, y, 8, 5);
    LinearSvmModel a = svm_train_binary(rows, y, 1.0, 10, 99);
    LinearSvmModel b = svm_train_binary(rows, y, 1.0, 10, 99);
    CHECK(a.w == b.w);
    CHECK(a.b == b.b);
    CHECK(a.objective_by_epoch == b.objective_by_epoch);
    LinearSvmModel c = svm_train_binary(rows, y, 1.0, 10, 100);
    CHECK(a.w != c.w);
}

TEST_CASE("binary input validation") {
    Tensor rows({4, 2});
    std::vector<int> y{1, -1, 1};
    CHECK_THROWS_AS(svm_train_binary(rows, y, 1.0, 5, 0), ShapeMismatch);
    y = {1, -1, 1, 2};
    CHECK_THROWS_AS(svm_train_binary(rows, y, 1.0, 5, 0), BadParam);
    y = {1, 1, 1, 1};
    CHECK_THROWS_AS(svm_train_binary(rows, y, 1.0, 5, 0), SingleClassData);
    y = {1, -1, 1, -1};
    CHECK_THROWS_AS(svm_train_binary(rows, y, 0.0, 5, 0), BadParam);
    CHECK_THROWS_AS(svm_train_binary(rows, y, 1.0, 0, 0), BadParam);
}

TEST_CASE("one-vs-rest solves three blobs and mirrors the binary trainer") {
    FeatureMatrix m = blobs(10, 2024);
    const double c_reg = 5.0;
    const int epochs = 50;
    const std::uint64_t seed = 13;
    MulticlassSvm multi = svm_train_multiclass(m, SvmMode::one_vs_rest, c_reg, epochs, seed);

    CHECK(multi.mode == SvmMode::one_vs_rest);
    CHECK(multi.n_classes == 3);
    CHECK(multi.n_features == 2);
    REQUIRE(multi.models.size() == 3);
    CHECK(accuracy_of(multi, m) == 1.0);

    Rng root(seed);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(multi.models[k].positive_id == static_cast<int>(k));
        CHECK(multi.models[k].negative_id == -1);
        // Each head is exactly the binary trainer on class-k-vs-rest labels.
        std::vector<int> yk(m.labels.size());
        for (std::size_t i = 0; i < yk.size(); ++i) {
            yk[i] = m.labels[i] == static_cast<int>(k) ? 1 : -1;
        }
        LinearSvmModel solo =
            svm_train_binary(m.values, yk, c_reg, epochs, root.fork(k).state());
        CHECK(solo.w == multi.models[k].w);
        CHECK(solo.b == multi.models[k].b);
    }
}

TEST_CASE("one-vs-one trains each pair on its subset") {
    FeatureMatrix m = blobs(8, 31);
    MulticlassSvm multi = svm_train_multiclass(m, SvmMode::one_vs_one, 5.0, 50, 77);
    REQUIRE(multi.models.size() == 3);
    CHECK(multi.models[0].positive_id == 0);
    CHECK(multi.models[0].negative_id == 1);
    CHECK(multi.models[1].positive_id == 0);
    CHECK(multi.models[1].negative_id == 2);
    CHECK(multi.models[2].positive_id == 1);
    CHECK(multi.models[2].negative_id == 2);
    CHECK(accuracy_of(multi, m) == 1.0);

    // Pair (1,2) never sees class 0 rows: retraining on the subset alone
    // reproduces it.
    const std::size_t d = 2;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        if (m.labels[i] != 0) keep.push_back(i);
    }
    Tensor sub({keep.size(), d});
    std::vector<int> y(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        std::copy(m.values.data() + keep[r] * d, m.values.data() + (keep[r] + 1) * d,
                  sub.data() + r * d);
        y[r] = m.labels[keep[r]] == 1 ? 1 : -1;
    }
    LinearSvmModel solo = svm_train_binary(sub, y, 5.0, 50, Rng(77).fork(2).state());
    CHECK(solo.w == multi.models[2].w);
    CHECK(solo.b == multi.models[2].b);
}

TEST_CASE("multiclass validation") {
    FeatureMatrix m = blobs(4, 8);
    m.n_classes = 4;  // class 3 never occurs
    CHECK_THROWS_AS(svm_train_multiclass(m, SvmMode::one_vs_rest, 1.0, 5, 0),
                    EmptyClassInSplit);
    m.n_classes = 2;  // labels include 2
    CHECK_THROWS_AS(svm_train_multiclass(m, SvmMode::one_vs_rest, 1.0, 5, 0),
                    LabelOutOfRange);
    m.n_classes = 1;
    CHECK_THROWS_AS(svm_train_multiclass(m, SvmMode::one_vs_rest, 1.0, 5, 0), BadParam);

    FeatureMatrix ok = blobs(4, 8);
    MulticlassSvm multi = svm_train_multiclass(ok, SvmMode::one_vs_rest, 1.0, 5, 0);
    CHECK_THROWS_AS(svm_predict(multi, Tensor({2, 3})), ShapeMismatch);
}

TEST_CASE("one-vs-rest ties go to the lowest class id") {
    MulticlassSvm multi;
    multi.mode = SvmMode::one_vs_rest;
    multi.n_classes = 2;
    multi.n_features = 1;
    LinearSvmModel m0, m1;
    m0.w = {0.0};
    m0.b = 0.5;
    m0.positive_id = 0;
    m1.w = {0.0};
    m1.b = 0.5;
    m1.positive_id = 1;
    multi.models = {m0, m1};
    Tensor x({1, 1}, {3.0});
    CHECK(svm_predict(multi, x) == std::vector<int>{0});
}

TEST_CASE("one-vs-one vote ties fall back to summed margins then lowest id") {
    MulticlassSvm multi;
    multi.mode = SvmMode::one_vs_one;
    multi.n_classes = 3;
    multi.n_features = 1;
    auto pair_model = [](int pos, int neg, double b) {
        LinearSvmModel m;
        m.w = {0.0};
        m.b = b;
        m.positive_id = pos;
        m.negative_id = neg;
        return m;
    };
    Tensor x({1, 1}, {0.0});

    // Each class wins one pair, margins break the tie for class 2:
    // votes {1,1,1}; margin sums 0:-1, 1:0, 2:+1.
    multi.models = {pair_model(0, 1, 1.0), pair_model(0, 2, -2.0), pair_model(1, 2, 1.0)};
    CHECK(svm_predict(multi, x) == std::vector<int>{2});

    // Fully symmetric: votes and margins all tie -> class 0.
    multi.models = {pair_model(0, 1, 1.0), pair_model(0, 2, -1.0), pair_model(1, 2, 1.0)};
    CHECK(svm_predict(multi, x) == std::vector<int>{0});

    // A zero decision value counts for the positive side.
    multi.models = {pair_model(0, 1, 0.0), pair_model(0, 2, 0.0), pair_model(1, 2, -1.0)};
    CHECK(svm_predict(multi, x) == std::vector<int>{0});
}

TEST_CASE("multiclass models round-trip through container files") {
    FeatureMatrix m = blobs(6, 404);
    MulticlassSvm multi = svm_train_multiclass(m, SvmMode::one_vs_one, 3.0, 20, 55);

    const fs::path dir = fs::temp_directory_path() / "convfeat_svm_tests";
    fs::create_directories(dir);
    const fs::path p = dir / "svm.bin";
    save_svm(multi, p);
    MulticlassSvm back = load_svm(p);

    CHECK(back.mode == multi.mode);
    CHECK(back.n_classes == multi.n_classes);
    CHECK(back.n_features == multi.n_features);
    REQUIRE(back.models.size() == multi.models.size());
    for (std::size_t k = 0; k < multi.models.size(); ++k) {
        CHECK(back.models[k].w == multi.models[k].w);
        CHECK(back.models[k].b == multi.models[k].b);
        CHECK(back.models[k].c_reg == multi.models[k].c_reg);
        CHECK(back.models[k].positive_id == multi.models[k].positive_id);
        CHECK(back.models[k].negative_id == multi.models[k].negative_id);
        CHECK(back.models[k].objective_by_epoch == multi.models[k].objective_by_epoch);
    }
    CHECK(svm_predict(back, m.values) == svm_predict(multi, m.values));

    {
        std::ofstream os(dir / "junk.bin", std::ios::binary);
        os << "not a container";
    }
    CHECK_THROWS_AS(load_svm(dir / "junk.bin"), FormatError);
    CHECK_THROWS_AS(load_svm(dir / "absent.bin"), IoError);
}
