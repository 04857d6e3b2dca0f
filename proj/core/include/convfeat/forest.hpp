#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "convfeat/features.hpp"
#include "convfeat/tensor.hpp"

namespace convfeat {

struct ForestConfig {
    int n_trees = 400;
    int min_leaf = 1;
    int max_features = 0;  // candidates per node; 0 = floor(sqrt(D))
    std::uint64_t seed = 0;
};

// Split: rows with value <= threshold go left. Leaf: feature == -1 and
// class_counts holds the training-sample histogram.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1, right = -1;
    std::vector<std::int32_t> class_counts;
    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ForestModel {
    std::vector<Tree> trees;
    int n_features = 0;
    int n_classes = 0;
    ForestConfig config;
};

// CART forest: every tree grows on its own bootstrap (N draws with
// replacement) picking the best Gini-decrease split among max_features
// randomly sampled candidate features per node, until nodes are pure or
// min_leaf blocks further splits. Equal decreases resolve to the
// earliest-sampled candidate feature (so exact duplicates share importance
// evenly) and, within a feature, to the lowest midpoint threshold. Trees are
// keyed by per-tree forked seeds: parallel and sequential construction give
// identical forests, as do repeated runs. A single-class matrix degenerates
// to root-leaf trees.
ForestModel rf_train(const FeatureMatrix& m, const ForestConfig& cfg);

// Majority vote over trees (each tree votes its leaf's majority class, ties
// to the lowest id). vote_fractions, if given, receives (M, C) per-class
// vote shares, each row summing to 1.
std::vector<int> rf_predict(const ForestModel& model, const Tensor& rows,
                            Tensor* vote_fractions = nullptr);

struct ImportanceReport {
    std::vector<double> scores;         // sums to 1, or all zero if degenerate
    double threshold = 0.0;             // 1/(100*D)
    std::vector<bool> significant_mask; // scores[i] > threshold
};

// Mean decrease in Gini impurity: routes `m` through every tree, credits
// each split node with (samples reaching it / N) * impurity decrease on its
// feature, averages over trees and normalizes the scores to sum 1.
ImportanceReport rf_importance(const ForestModel& model, const FeatureMatrix& m);

// Share of features whose importance clears the threshold.
double significant_fraction(const ImportanceReport& report);

void save_forest(const ForestModel& model, const std::filesystem::path& path);
ForestModel load_forest(const std::filesystem::path& path);

// CSV `feature_index,score,significant`.
void export_importance_csv(const ImportanceReport& report, const std::filesystem::path& path);

}  // namespace convfeat
