#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "convfeat/errors.hpp"
#include "engine_detail.hpp"

namespace convfeat {

namespace {

// L2-ball projection of each contiguous slice (conv filter / fc row).
void max_norm_project(Tensor& w, double cap) {
    if (w.empty()) return;
    const std::size_t rows = w.extent(0);
    const std::size_t width = w.size() / rows;
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = w.data() + r * width;
        double sq = 0.0;
        for (std::size_t j = 0; j < width; ++j) sq += row[j] * row[j];
        const double norm = std::sqrt(sq);
        if (norm > cap) {
            const double scale = cap / norm;
            for (std::size_t j = 0; j < width; ++j) row[j] *= scale;
        }
    }
}

void momentum_update(Tensor& w, Tensor& v, const Tensor& g, double mu, double lr) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = mu * v[i] - lr * g[i];
        w[i] += v[i];
    }
}

Tensor batch_by_indices(const std::vector<LabeledImage>& images,
                        const std::vector<std::size_t>& order, std::size_t begin,
                        std::size_t end, std::vector<int>& labels) {
    const std::size_t side = images[order[begin]].pixels.extent(0);
    Tensor batch({end - begin, 1, side, side});
    labels.clear();
    for (std::size_t i = begin; i < end; ++i) {
        const LabeledImage& img = images[order[i]];
        if (img.pixels.size() != side * side) {
            throw ShapeMismatch("batch images disagree in side length");
        }
        std::copy(img.pixels.data(), img.pixels.data() + side * side,
                  batch.data() + (i - begin) * side * side);
        labels.push_back(img.class_id);
    }
    return batch;
}

int argmax_row(const double* row, std::size_t c) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
        if (row[j] > row[best]) best = j;  // strict: ties keep the lowest id
    }
    return static_cast<int>(best);
}

}  // namespace

void sgd_momentum_step(Checkpoint& ckpt, const Gradients& grads, const TrainConfig& cfg) {
    if (grads.layers.size() != ckpt.params.size()) {
        throw ShapeMismatch("sgd step: gradient layer count mismatch");
    }
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        LayerParams& p = ckpt.params[i];
        if (p.w.empty()) continue;
        if (!p.w.same_shape(grads.layers[i].w) || !p.b.same_shape(grads.layers[i].b)) {
            throw ShapeMismatch("sgd step: gradient shape mismatch at layer " +
                                std::to_string(i + 1));
        }
        momentum_update(p.w, ckpt.momentum[i].w, grads.layers[i].w, cfg.momentum,
                        cfg.learning_rate);
        momentum_update(p.b, ckpt.momentum[i].b, grads.layers[i].b, cfg.momentum,
                        cfg.learning_rate);
        max_norm_project(p.w, cfg.max_norm_cap);
    }
}

Tensor batch_from_images(std::span<const LabeledImage> images) {
    if (images.empty()) throw BadParam("batch_from_images: empty image list");
    const std::size_t side = images[0].pixels.extent(0);
    Tensor batch({images.size(), 1, side, side});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].pixels.size() != side * side) {
            throw ShapeMismatch("batch images disagree in side length");
        }
        std::copy(images[i].pixels.data(), images[i].pixels.data() + side * side,
                  batch.data() + i * side * side);
    }
    return batch;
}

Tensor predict_probs(const Checkpoint& ckpt, const std::vector<LabeledImage>& images) {
    const std::size_t c = static_cast<std::size_t>(ckpt.spec.n_classes);
    Tensor probs({images.size(), c});
    constexpr std::size_t kChunk = 256;
    for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
        const std::size_t end = std::min(begin + kChunk, images.size());
        const Tensor batch =
            batch_from_images(std::span(images.data() + begin, end - begin));
        const Activations acts = forward(ckpt, batch, Mode::eval, nullptr, nullptr);
        std::copy(acts.probs().data(), acts.probs().data() + (end - begin) * c,
                  probs.data() + begin * c);
    }
    return probs;
}

double evaluate_accuracy(const Checkpoint& ckpt, const std::vector<LabeledImage>& images) {
    if (images.empty()) return 0.0;
    const Tensor probs = predict_probs(ckpt, images);
    const std::size_t c = probs.extent(1);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (argmax_row(probs.data() + i * c, c) == images[i].class_id) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(images.size());
}

Tensor bagged_probs(std::span<const Checkpoint> ensemble,
                    const std::vector<LabeledImage>& images) {
    if (ensemble.empty()) throw EmptyEnsemble("bagged prediction over zero models");
    const int c = ensemble[0].spec.n_classes;
    for (const Checkpoint& m : ensemble) {
        if (m.spec.n_classes != c) {
            throw ShapeMismatch("ensemble members disagree on class count");
        }
    }
    Tensor mean({images.size(), static_cast<std::size_t>(c)});
    for (const Checkpoint& m : ensemble) {
        const Tensor p = predict_probs(m, images);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p[i];
    }
    const double inv = 1.0 / static_cast<double>(ensemble.size());
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] *= inv;
    return mean;
}

std::vector<int> bagged_predict(std::span<const Checkpoint> ensemble,
                                const std::vector<LabeledImage>& images) {
    const Tensor mean = bagged_probs(ensemble, images);
    std::vector<int> labels(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        labels[i] = argmax_row(mean.data() + i * mean.extent(1), mean.extent(1));
    }
    return labels;
}

namespace {

double full_pass_loss(const Checkpoint& ckpt, const std::vector<LabeledImage>& images) {
    const Tensor probs = predict_probs(ckpt, images);
    std::vector<int> labels(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) labels[i] = images[i].class_id;
    return loss_cross_entropy(probs, labels);
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<EpochMetrics>& metrics) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write metrics: " + path.string());
    os << "epoch,train_loss,val_acc\n";
    char line[96];
    for (const EpochMetrics& m : metrics) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.6f\n", m.epoch, m.train_loss, m.val_acc);
        os << line;
    }
    if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

TrainResult train(const NetworkSpec& spec_in, const SplitDataset& data, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir) {
    NetworkSpec spec = spec_in;
    if (spec.n_classes == 0) spec.n_classes = data.n_classes();
    if (cfg.batch_size < 1 || cfg.epochs < 0 || cfg.checkpoint_every < 1 ||
        cfg.learning_rate <= 0 || cfg.momentum < 0 || cfg.momentum >= 1 ||
        cfg.max_norm_cap <= 0) {
        throw BadParam("train config values out of range");
    }
    if (data.train.empty()) throw BadParam("training split is empty");
    shape_plan(spec);  // validate before any work

    Rng root(cfg.seed);
    Rng winit = root.fork(rng_streams::weight_init);
    Checkpoint ckpt = init_weights(spec, winit);
    ckpt.run_seed = cfg.seed;
    Rng dropout_rng = root.fork(rng_streams::dropout);
    ckpt.dropout_state = dropout_rng.state();

    const bool persist = !out_dir.empty();
    if (persist) std::filesystem::create_directories(out_dir);

    TrainResult res;
    auto save_now = [&]() {
        char name[32];
        std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.cpt", ckpt.epoch);
        const auto path = out_dir / name;
        save_checkpoint(ckpt, path, cfg.precision);
        res.checkpoint_paths.push_back(path);
    };

    res.metrics.push_back(
        {0, full_pass_loss(ckpt, data.train), evaluate_accuracy(ckpt, data.validation)});
    if (persist) save_now();  // epoch 0 = untouched random weights

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    Rng shuffle_root = root.fork(rng_streams::epoch_shuffle);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng eshuffle = shuffle_root.fork(static_cast<std::uint64_t>(epoch));
        shuffle(order, eshuffle);

        double loss_sum = 0.0;
        std::vector<int> labels;
        for (std::size_t begin = 0; begin < order.size(); begin += bs) {
            const std::size_t end = std::min(begin + bs, order.size());
            const Tensor batch = batch_by_indices(data.train, order, begin, end, labels);
            try {
                ForwardTrace trace;
                const Activations acts =
                    forward(ckpt, batch, Mode::train, &dropout_rng, &trace);
                const double loss = loss_cross_entropy(acts.probs(), labels);
                if (!std::isfinite(loss)) {
                    throw NonFiniteActivation("training loss is not finite");
                }
                loss_sum += loss * static_cast<double>(end - begin);
                const Gradients grads = backward(ckpt, acts, trace, labels);
                sgd_momentum_step(ckpt, grads, cfg);
            } catch (const NonFiniteActivation& e) {
                throw DivergenceDetected("diverged in epoch " + std::to_string(epoch) +
                                         " (last checkpoint: epoch " +
                                         std::to_string(ckpt.epoch) + "): " + e.what());
            }
        }
        ckpt.epoch = epoch;
        ckpt.dropout_state = dropout_rng.state();
        double val_acc = 0.0;
        try {
            val_acc = evaluate_accuracy(ckpt, data.validation);
        } catch (const NonFiniteActivation& e) {
            throw DivergenceDetected("diverged in epoch " + std::to_string(epoch) +
                                     " (last checkpoint: epoch " +
                                     std::to_string(ckpt.epoch - 1) + "): " + e.what());
        }
        res.metrics.push_back({epoch, loss_sum / static_cast<double>(order.size()), val_acc});
        if (persist && (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs)) save_now();
    }

    if (persist) write_metrics_csv(out_dir / "metrics.csv", res.metrics);
    res.final_state = std::move(ckpt);
    return res;
}

}  // namespace convfeat
