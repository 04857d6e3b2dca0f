#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "convfeat/clustering.hpp"
#include "convfeat/dataset.hpp"
#include "convfeat/engine.hpp"
#include "convfeat/forest.hpp"
#include "convfeat/svm.hpp"

namespace convfeat {

// Where the images come from: a class-per-subdirectory tree, or the built-in
// synthetic renderer when `directory` is empty.
struct DataSource {
    std::filesystem::path directory;
    SynthParams synth;
};

// One experiment run, normally loaded from a JSON plan file; command-line
// flags override individual fields. train.seed is the master seed every
// random stream forks from.
struct ExperimentPlan {
    std::filesystem::path spec_path;
    DataSource data;
    TrainConfig train;
    std::vector<int> layers;       // feature taps swept by layer-sweep/importance
    std::vector<int> epoch_sweep;  // epochs visited by epoch-sweep; empty = all on disk
    bool run_rf = true;
    bool run_svm_ovr = true;
    bool run_svm_ovo = true;
    int ensemble = 8;
    int ensemble_epochs = 0;  // 0 = train.epochs
    ForestConfig forest;
    double svm_c = 1.0;
    int svm_epochs = 40;
    int feature_layer = 3;  // tap used by epoch-sweep and cluster
    Linkage linkage = Linkage::average;
    std::filesystem::path out_dir = "run";
};

ExperimentPlan load_plan(const std::filesystem::path& json_path);
void save_plan(const ExperimentPlan& plan, const std::filesystem::path& json_path);

// Dataset per the plan; images take the network's input side when a spec is
// given, the plan's synth side otherwise. Deterministic in the plan seed.
SplitDataset load_data(const ExperimentPlan& plan);

// A dataset plus one trained network: what every analysis command consumes.
struct RunContext {
    SplitDataset data;
    NetworkSpec spec;
    TrainResult result;
};

// Trains under <out_dir>/train (metrics.csv + epoch checkpoints) and writes
// the run manifest.
RunContext run_train(const ExperimentPlan& plan);

// Rebuilds a RunContext from a previous run_train's on-disk output; throws
// MissingCheckpoint when <out_dir>/train holds none.
RunContext make_context(const ExperimentPlan& plan);

// Feature matrices of tap `layer` for the classifier-fitting pool
// (train+validation) and the held-out test split, written under
// <out_dir>/features/. Returns the two file paths.
std::vector<std::filesystem::path> run_extract(const ExperimentPlan& plan,
                                               const RunContext& ctx, int layer);

struct SweepRow {
    std::string layer;       // tap number, or "baseline"
    std::string classifier;  // rf | svm_ovr | svm_ovo | cnn
    double test_accuracy = 0.0;
};

// Fits every enabled classifier on every swept tap's features (classifiers
// fit on train+validation, accuracy always on the test split) plus the
// network's own test accuracy; writes <out_dir>/layer_sweep.csv.
std::vector<SweepRow> run_layer_sweep(const ExperimentPlan& plan, const RunContext& ctx);

struct EpochRow {
    int epoch = 0;
    double cnn_acc = 0.0;
    double rf_acc = 0.0;
    double svm_acc = 0.0;  // one-vs-rest
};

// Accuracy of the network vs classifiers on feature_layer features, per
// checkpointed epoch; writes <out_dir>/epoch_sweep.csv. Throws
// MissingCheckpoint if a requested epoch was never checkpointed.
std::vector<EpochRow> run_epoch_sweep(const ExperimentPlan& plan, const RunContext& ctx);

struct BagReport {
    std::vector<std::uint64_t> member_seeds;
    std::vector<double> member_accuracy;
    double mean_single = 0.0;
    double bagged = 0.0;
};

// Trains `ensemble` independently seeded copies of the network and compares
// mean single-model test accuracy against probability-averaged prediction;
// writes <out_dir>/bag_report.json with every member seed.
BagReport run_bag(const ExperimentPlan& plan);

struct ImportanceRow {
    int layer = 0;
    std::size_t n_features = 0;
    double threshold = 0.0;
    double significant_fraction = 0.0;
};

// Forest importance per swept tap (fit on the train+validation features):
// <out_dir>/importance/layer_<L>.csv plus a summary.csv of the rows.
std::vector<ImportanceRow> run_importance(const ExperimentPlan& plan, const RunContext& ctx);

// Class centroids on feature_layer features -> agglomerative dendrogram;
// writes <out_dir>/cluster/{dendrogram.newick, merges.csv}.
Dendrogram run_cluster(const ExperimentPlan& plan, const RunContext& ctx);

// Back-projects the chosen feature for the top_k most activating test
// samples; writes <out_dir>/deconv/layer<L>_feature<F>_rank<R>.pgm (+ JSON
// sidecars) and returns the PGM paths.
std::vector<std::filesystem::path> run_deconv(const ExperimentPlan& plan, const RunContext& ctx,
                                              int layer, int feature, int top_k);

// Renders the plan's synthetic dataset to <out_dir>/images/<class>/*.pgm
// with an index CSV at <out_dir>/dataset_index.csv.
void run_synth_export(const ExperimentPlan& plan);

// <out_dir>/manifest.json: command, full plan echo, seed, library version.
void write_manifest(const ExperimentPlan& plan, const std::string& command);

std::string version_string();

}  // namespace convfeat
