#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "convfeat/engine.hpp"

namespace convfeat {

// Flattened activations of one feature tap over a sample set, the common
// input of the downstream classifiers. layer_index 0 means raw pixels.
struct FeatureMatrix {
    Tensor values;  // (N, D), row-major per sample
    std::vector<int> labels;
    int layer_index = 0;
    int source_epoch = 0;
    std::string spec_name;
    int n_classes = 0;  // defaults to max(labels)+1; callers may widen it
};

// Eval-mode forward over `images`, keeping tap `layer_index` (see
// feature_taps). Deterministic; throws LayerOutOfRange.
FeatureMatrix extract(const Checkpoint& ckpt, const std::vector<LabeledImage>& images,
                      int layer_index);

// Values go to `path` as a bare tensor file; labels and provenance go to a
// JSON sidecar at path + ".json". Round-trips bit-exactly at f64.
void save_matrix(const FeatureMatrix& m, const std::filesystem::path& path,
                 Dtype precision = Dtype::f64);
FeatureMatrix load_matrix(const std::filesystem::path& path);

// Per-column standardization to mean 0 / stddev 1 (constant columns are only
// centered). Off by default everywhere; exposed for experiments.
FeatureMatrix zscore(const FeatureMatrix& m);

}  // namespace convfeat
