#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "convfeat/dataset.hpp"
#include "convfeat/net.hpp"
#include "convfeat/rng.hpp"
#include "convfeat/tensor.hpp"
#include "convfeat/tensor_io.hpp"

namespace convfeat {

// Weights/biases of one layer; both stay empty for pool layers. Conv weights
// are (filters, in_channels, kh, kw) with filters counted before maxout
// grouping; fully-connected and softmax weights are (units, in_dim).
struct LayerParams {
    Tensor w, b;
};

struct Checkpoint {
    NetworkSpec spec;  // n_classes bound
    std::vector<LayerParams> params;    // one entry per spec layer
    std::vector<LayerParams> momentum;  // SGD velocity, same shapes
    int epoch = 0;
    std::uint64_t run_seed = 0;
    std::uint64_t dropout_state = 0;  // training dropout stream, for exact resume
};

// Glorot-uniform weights, a = sqrt(6/(fan_in+fan_out)) per layer (conv fans
// count kernel taps), zero biases, zero momentum. Same rng state gives an
// identical checkpoint.
Checkpoint init_weights(const NetworkSpec& spec, Rng& rng);

// Single-file container round trip; loading a file and saving it again
// reproduces it byte for byte. `precision` picks the on-disk scalar width
// (compute is always f64); an f32 file loads back widened.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, Dtype precision);
Checkpoint load_checkpoint(const std::filesystem::path& path);

enum class Mode { train, eval };

// Everything backward (and back-projection) needs beyond the activations.
// All vectors are indexed like Activations::layer_out (entry 0 unused).
struct ForwardTrace {
    std::vector<Tensor> pre;  // conv/fc/softmax linear outputs, pre-activation
    std::vector<std::vector<std::uint32_t>> switches;   // max-pool argmax positions
    std::vector<std::vector<std::uint8_t>> maxout_arg;  // winning piece per output cell
    std::vector<Tensor> dropout_mask;  // 0 or 1/(1-p) per input element; empty = no dropout
};

struct Activations {
    std::vector<Tensor> layer_out;  // [0] = input batch, [i] = output of layer i
    const Tensor& probs() const { return layer_out.back(); }
};

// Runs the network over a batch (N,1,H,W) (a rank-3 (N,H,W) batch is
// promoted). Probability rows sum to 1 within 1e-6. Dropout only fires in
// train mode AND with a non-null dropout_rng; passing nullptr runs the exact
// no-dropout function, which keeps finite-difference checks replayable (copy
// the rng to replay a specific mask). Eval mode never draws randomness.
Activations forward(const Checkpoint& ckpt, const Tensor& batch, Mode mode, Rng* dropout_rng,
                    ForwardTrace* trace);

// Mean of -log(probs[i][labels[i]]), probabilities clamped at 1e-12.
double loss_cross_entropy(const Tensor& probs, const std::vector<int>& labels);

struct Gradients {
    std::vector<LayerParams> layers;  // same shapes as Checkpoint::params
};

// Exact gradients of the mean cross-entropy on the traced batch.
Gradients backward(const Checkpoint& ckpt, const Activations& acts, const ForwardTrace& trace,
                   const std::vector<int>& labels);

struct TrainConfig {
    int batch_size = 128;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double max_norm_cap = 3.0;
    int epochs = 30;
    int checkpoint_every = 1;
    Dtype precision = Dtype::f64;  // on-disk checkpoint dtype
    std::uint64_t seed = 0;
};

// v <- momentum*v - lr*g; w <- w + v; then every fully-connected weight row
// and every conv filter with L2 norm above max_norm_cap is rescaled onto the
// cap (direction preserved). Biases are unconstrained.
void sgd_momentum_step(Checkpoint& ckpt, const Gradients& grads, const TrainConfig& cfg);

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;  // epoch 0: full-pass eval loss; later: mean minibatch loss
    double val_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> metrics;  // rows 0..epochs
    std::vector<std::filesystem::path> checkpoint_paths;
    Checkpoint final_state;
};

// Mini-batch SGD with momentum. The epoch-0 checkpoint (fresh random
// weights) is written before any update; afterwards every checkpoint_every
// epochs and at the end. Writes <out_dir>/metrics.csv and
// <out_dir>/ckpt_epoch_NNNN.cpt; pass an empty out_dir to keep everything in
// memory. Throws DivergenceDetected on a non-finite loss (checkpoints
// already on disk stay valid).
TrainResult train(const NetworkSpec& spec, const SplitDataset& data, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir);

// Eval-mode class probabilities, one row per image.
Tensor predict_probs(const Checkpoint& ckpt, const std::vector<LabeledImage>& images);

// Fraction of images whose argmax probability (ties to the lowest class id)
// matches the label. Empty input gives 0.
double evaluate_accuracy(const Checkpoint& ckpt, const std::vector<LabeledImage>& images);

// Mean of the members' probability rows; labels = per-row argmax with ties
// to the lowest class id. Throws EmptyEnsemble / ShapeMismatch (n_classes
// disagreement).
Tensor bagged_probs(std::span<const Checkpoint> ensemble, const std::vector<LabeledImage>& images);
std::vector<int> bagged_predict(std::span<const Checkpoint> ensemble,
                                const std::vector<LabeledImage>& images);

// (N,1,H,W) batch from a span of images (all sides must match).
Tensor batch_from_images(std::span<const LabeledImage> images);

}  // namespace convfeat
