#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "convfeat/engine.hpp"
#include "oracles.hpp"

using namespace convfeat;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* leaf) {
    fs::path p = fs::temp_directory_path() / "convfeat_train_tests" / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

NetworkSpec tiny_net(int side = 8, int n_classes = 3) {
    NetworkSpec spec;
    spec.name = "tiny";
    spec.input_side = side;
    spec.n_classes = n_classes;
    LayerSpec c;
    c.kind = LayerKind::conv;
    c.filters = 4;
    c.kernel_h = c.kernel_w = 3;
    c.activation = Activation::relu;
    LayerSpec p;
    p.kind = LayerKind::maxpool;
    p.kernel_h = p.kernel_w = 2;
    p.stride_h = p.stride_w = 2;
    LayerSpec s;
    s.kind = LayerKind::softmax;
    spec.layers = {c, p, s};
    return spec;
}

SplitDataset tiny_data(int n_classes = 3, int per_class = 8, int side = 8,
                       std::uint64_t seed = 400) {
    SynthParams params;
    params.n_classes = n_classes;
    params.per_class = per_class;
    params.side = side;
    params.split.train = 0.6;
    params.split.validation = 0.2;
    Rng rng(seed);
    return synth_generate(params, rng);
}

double max_param_diff(const Checkpoint& a, const Checkpoint& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        worst = std::max(worst, oracles::max_abs_diff(a.params[i].w, b.params[i].w));
        worst = std::max(worst, oracles::max_abs_diff(a.params[i].b, b.params[i].b));
        worst = std::max(worst, oracles::max_abs_diff(a.momentum[i].w, b.momentum[i].w));
        worst = std::max(worst, oracles::max_abs_diff(a.momentum[i].b, b.momentum[i].b));
    }
    return worst;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("sgd with momentum applies v = mu*v - lr*g, w += v") {
    NetworkSpec spec = tiny_net(6, 2);
    spec.layers = {spec.layers[2]};  // softmax only: one weight matrix
    Rng rng(1);
    Checkpoint ckpt = init_weights(spec, rng);

    const Tensor w0 = ckpt.params[0].w;
    Tensor v0(w0.shape());
    for (std::size_t i = 0; i < v0.size(); ++i) v0[i] = 0.01 * static_cast<double>(i % 5);
    ckpt.momentum[0].w = v0;

    Gradients grads;
    grads.layers.resize(1);
    grads.layers[0].w = Tensor::full(w0.shape(), 0.25);
    grads.layers[0].b = Tensor(ckpt.params[0].b.shape());

    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    cfg.max_norm_cap = 1e9;  // keep projection inert here
    sgd_momentum_step(ckpt, grads, cfg);

    for (std::size_t i = 0; i < w0.size(); ++i) {
        const double v1 = 0.9 * v0[i] - 0.1 * 0.25;
        CHECK(ckpt.momentum[0].w[i] == doctest::Approx(v1).epsilon(1e-15));
        CHECK(ckpt.params[0].w[i] == doctest::Approx(w0[i] + v1).epsilon(1e-15));
    }

    Gradients wrong;
    wrong.layers.resize(1);
    wrong.layers[0].w = Tensor({2, 2});
    wrong.layers[0].b = Tensor({2});
    CHECK_THROWS_AS(sgd_momentum_step(ckpt, wrong, cfg), ShapeMismatch);
}

TEST_CASE("max-norm caps fc rows and conv filters but not biases") {
    NetworkSpec spec = tiny_net(6, 2);
    Rng rng(2);
    Checkpoint ckpt = init_weights(spec, rng);

    // Blow up conv filter 0 and leave filter 1 small.
    Tensor& wc = ckpt.params[0].w;
    const std::size_t filter_len = wc.size() / wc.extent(0);
    for (std::size_t j = 0; j < filter_len; ++j) wc[j] = 10.0;
    Tensor filter1(Shape{filter_len});
    for (std::size_t j = 0; j < filter_len; ++j) filter1[j] = wc[filter_len + j];
    ckpt.params[0].b[0] = 99.0;

    Gradients zero;
    zero.layers.resize(ckpt.params.size());
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        zero.layers[i].w = Tensor(ckpt.params[i].w.shape());
        zero.layers[i].b = Tensor(ckpt.params[i].b.shape());
    }

    TrainConfig cfg;
    cfg.momentum = 0.0;
    cfg.max_norm_cap = 3.0;
    sgd_momentum_step(ckpt, zero, cfg);

    double norm0 = 0.0;
    for (std::size_t j = 0; j < filter_len; ++j) norm0 += wc[j] * wc[j];
    CHECK(std::sqrt(norm0) == doctest::Approx(3.0).epsilon(1e-12));
    // Direction preserved: every entry equal since the filter was constant.
    for (std::size_t j = 1; j < filter_len; ++j) {
        CHECK(wc[j] == doctest::Approx(wc[0]).epsilon(1e-12));
    }
    // The small filter is untouched, as is the bias.
    for (std::size_t j = 0; j < filter_len; ++j) {
        CHECK(wc[filter_len + j] == filter1[j]);
    }
    CHECK(ckpt.params[0].b[0] == 99.0);

    // Projection is idempotent: another zero-gradient step changes nothing.
    Tensor snapshot = wc;
    sgd_momentum_step(ckpt, zero, cfg);
    CHECK(oracles::max_abs_diff(wc, snapshot) == 0.0);
}

TEST_CASE("checkpoints round-trip bit-exactly and honor f32 width") {
    NetworkSpec spec = tiny_net();
    Rng rng(3);
    Checkpoint ckpt = init_weights(spec, rng);
    ckpt.epoch = 7;
    ckpt.run_seed = 12345;
    ckpt.dropout_state = 67890;

    const fs::path dir = temp_dir("ckpt");
    const fs::path p64 = dir / "model.cpt";
    save_checkpoint(ckpt, p64, Dtype::f64);
    Checkpoint back = load_checkpoint(p64);
    CHECK(back.epoch == 7);
    CHECK(back.run_seed == 12345);
    CHECK(back.dropout_state == 67890);
    CHECK(back.spec.name == spec.name);
    CHECK(back.spec.layers.size() == spec.layers.size());
    CHECK(max_param_diff(back, ckpt) == 0.0);

    // Load-then-save reproduces the file byte for byte.
    const fs::path p64b = dir / "model2.cpt";
    save_checkpoint(back, p64b, Dtype::f64);
    CHECK(file_bytes(p64) == file_bytes(p64b));

    const fs::path p32 = dir / "model32.cpt";
    save_checkpoint(ckpt, p32, Dtype::f32);
    CHECK(fs::file_size(p32) < fs::file_size(p64));
    Checkpoint narrow = load_checkpoint(p32);
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        for (std::size_t k = 0; k < ckpt.params[i].w.size(); ++k) {
            CHECK(narrow.params[i].w[k] ==
                  static_cast<double>(static_cast<float>(ckpt.params[i].w[k])));
        }
    }

    CHECK_THROWS_AS(load_checkpoint(dir / "absent.cpt"), IoError);
    {
        std::ofstream os(dir / "junk.cpt", std::ios::binary);
        os << "garbage";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.cpt"), FormatError);
}

TEST_CASE("training is deterministic and logs sensible metrics") {
    NetworkSpec spec = tiny_net();
    SplitDataset data = tiny_data();
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.05;
    cfg.epochs = 2;
    cfg.checkpoint_every = 1;
    cfg.seed = 99;

    const fs::path dir = temp_dir("run");
    TrainResult res = train(spec, data, cfg, dir);

    REQUIRE(res.metrics.size() == 3);  // epochs 0..2
    for (int e = 0; e < 3; ++e) {
        CHECK(res.metrics[static_cast<std::size_t>(e)].epoch == e);
        CHECK(res.metrics[static_cast<std::size_t>(e)].train_loss > 0.0);
        CHECK(res.metrics[static_cast<std::size_t>(e)].val_acc >= 0.0);
        CHECK(res.metrics[static_cast<std::size_t>(e)].val_acc <= 1.0);
    }
    CHECK(res.final_state.epoch == 2);
    REQUIRE(res.checkpoint_paths.size() == 3);
    for (const auto& p : res.checkpoint_paths) CHECK(fs::exists(p));

    // Epoch 0 is the untrained network: its checkpoint reproduces the
    // logged full-pass loss exactly.
    Checkpoint fresh = load_checkpoint(dir / "ckpt_epoch_0000.cpt");
    CHECK(fresh.epoch == 0);
    Tensor probs = predict_probs(fresh, data.train);
    std::vector<int> labels;
    for (const auto& img : data.train) labels.push_back(img.class_id);
    CHECK(loss_cross_entropy(probs, labels) == res.metrics[0].train_loss);

    std::ifstream is(dir / "metrics.csv");
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "epoch,train_loss,val_acc");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 3);

    // Re-running the same configuration reproduces the weights exactly.
    TrainResult res2 = train(spec, data, cfg, {});
    CHECK(max_param_diff(res2.final_state, res.final_state) == 0.0);
    CHECK(res2.checkpoint_paths.empty());  // empty out_dir keeps it in memory
    REQUIRE(res2.metrics.size() == res.metrics.size());
    for (std::size_t i = 0; i < res.metrics.size(); ++i) {
        CHECK(res2.metrics[i].train_loss == res.metrics[i].train_loss);
        CHECK(res2.metrics[i].val_acc == res.metrics[i].val_acc);
    }

    TrainConfig other = cfg;
    other.seed = 100;
    TrainResult res3 = train(spec, data, other, {});
    CHECK(max_param_diff(res3.final_state, res.final_state) > 0.0);

    // checkpoint_every skips intermediate epochs but keeps 0 and the last.
    TrainConfig sparse = cfg;
    sparse.epochs = 3;
    sparse.checkpoint_every = 2;
    const fs::path dir2 = temp_dir("sparse");
    TrainResult res4 = train(spec, data, sparse, dir2);
    REQUIRE(res4.checkpoint_paths.size() == 3);
    CHECK(res4.checkpoint_paths[0].filename() == "ckpt_epoch_0000.cpt");
    CHECK(res4.checkpoint_paths[1].filename() == "ckpt_epoch_0002.cpt");
    CHECK(res4.checkpoint_paths[2].filename() == "ckpt_epoch_0003.cpt");
}

TEST_CASE("training rejects bad configs and empty data") {
    NetworkSpec spec = tiny_net();
    SplitDataset data = tiny_data();
    TrainConfig cfg;
    cfg.epochs = 1;

    TrainConfig bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(spec, data, bad, {}), BadParam);
    bad = cfg;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(train(spec, data, bad, {}), BadParam);
    bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(spec, data, bad, {}), BadParam);

    SplitDataset empty = data;
    empty.train.clear();
    CHECK_THROWS_AS(train(spec, empty, cfg, {}), BadParam);
}

TEST_CASE("training reports divergence instead of emitting garbage") {
    // Linear activations let the exploding weights compound multiplicatively
    // until the logits overflow to inf.  (A relu stack can instead go
    // silently dead: one giant negative step zeroes every unit and freezes
    // the gradients at zero forever.)
    NetworkSpec spec = tiny_net();
    spec.layers[0].activation = Activation::none;
    LayerSpec fc;
    fc.kind = LayerKind::fully_connected;
    fc.units = 8;
    fc.activation = Activation::none;
    spec.layers = {spec.layers[0], spec.layers[1], fc, spec.layers[2]};

    SplitDataset data = tiny_data();
    TrainConfig cfg;
    cfg.batch_size = 4;
    // The default norm cap would actually contain this, so lift it.
    cfg.learning_rate = 1e30;
    cfg.max_norm_cap = 1e300;
    cfg.epochs = 5;
    cfg.seed = 1;
    CHECK_THROWS_AS(train(spec, data, cfg, {}), DivergenceDetected);
}

TEST_CASE("bagging averages probabilities; one member equals plain prediction") {
    NetworkSpec spec = tiny_net();
    SplitDataset data = tiny_data();
    Rng r1(10), r2(20);
    Checkpoint a = init_weights(spec, r1);
    Checkpoint b = init_weights(spec, r2);

    const std::vector<Checkpoint> solo{a};
    Tensor pa = predict_probs(a, data.test);
    Tensor bagged1 = bagged_probs(solo, data.test);
    CHECK(oracles::max_abs_diff(bagged1, pa) == 0.0);

    const std::vector<Checkpoint> both{a, b};
    Tensor pb = predict_probs(b, data.test);
    Tensor bagged2 = bagged_probs(both, data.test);
    for (std::size_t i = 0; i < bagged2.size(); ++i) {
        CHECK(bagged2[i] == doctest::Approx(0.5 * (pa[i] + pb[i])).epsilon(1e-15));
    }

    const std::vector<int> votes = bagged_predict(both, data.test);
    REQUIRE(votes.size() == data.test.size());
    for (std::size_t i = 0; i < votes.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < bagged2.extent(1); ++j) {
            if (bagged2(i, j) > bagged2(i, best)) best = j;
        }
        CHECK(votes[i] == static_cast<int>(best));
    }

    CHECK_THROWS_AS(bagged_probs(std::span<const Checkpoint>(), data.test), EmptyEnsemble);
    Checkpoint narrow = a;
    narrow.spec.n_classes = 5;
    const std::vector<Checkpoint> mixed{a, narrow};
    CHECK_THROWS_AS(bagged_probs(mixed, data.test), ShapeMismatch);
}

TEST_CASE("accuracy is the argmax hit rate with empty input giving zero") {
    NetworkSpec spec = tiny_net();
    Rng rng(30);
    Checkpoint ckpt = init_weights(spec, rng);
    SplitDataset data = tiny_data();

    CHECK(evaluate_accuracy(ckpt, {}) == 0.0);
    const double acc = evaluate_accuracy(ckpt, data.train);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);

    Tensor probs = predict_probs(ckpt, data.train);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < probs.extent(1); ++j) {
            if (probs(i, j) > probs(i, best)) best = j;
        }
        hits += static_cast<int>(best) == data.train[i].class_id ? 1 : 0;
    }
    CHECK(acc == doctest::Approx(static_cast<double>(hits) /
                                 static_cast<double>(data.train.size()))
                     .epsilon(1e-15));
}
