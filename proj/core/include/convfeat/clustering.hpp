#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "convfeat/features.hpp"
#include "convfeat/tensor.hpp"

namespace convfeat {

struct CentroidSet {
    Tensor centroids;  // (C, D), row c = mean feature vector of class c
    std::vector<std::string> class_names;
    std::vector<int> counts;
    int layer_index = 0;
};

// Per-class arithmetic mean of the feature rows. Every class id in
// [0, n_classes) must appear (MissingClass). Optional names label the rows;
// left empty they become "0".."C-1".
CentroidSet centroids(const FeatureMatrix& m, std::vector<std::string> class_names = {});

enum class Linkage { single, complete, average };

struct Merge {
    int node_a = 0, node_b = 0;  // node_a < node_b; leaves are 0..C-1
    double height = 0.0;         // linkage distance at this merge
    int new_id = 0;              // C + step
};

struct Dendrogram {
    int n_leaves = 0;
    std::vector<std::string> leaf_names;
    std::vector<Merge> merges;  // exactly C-1, non-decreasing heights
};

// Agglomerative clustering of the centroids under Euclidean distance,
// distances updated with the Lance-Williams recurrence. The closest active
// pair merges each step; equal distances break toward the smallest
// (node_a, node_b). Default linkage everywhere downstream is average
// (UPGMA). All three provided linkages are monotone, so merge heights never
// decrease.
Dendrogram agglomerate(const CentroidSet& cs, Linkage linkage = Linkage::average);

// Rooted Newick with branch lengths; a leaf's branch is half its parent's
// merge height, an internal node's is half the height difference, so leaf
// depth equals half the root height (ultrametric convention).
std::string to_newick(const Dendrogram& d);

// CSV `step,node_a,node_b,height,new_id`, heights exact (round-trip safe).
void export_merges_csv(const Dendrogram& d, const std::filesystem::path& path);
std::vector<Merge> import_merges_csv(const std::filesystem::path& path);

// Feature indices ranked by the MINIMUM centroid value across the subset
// classes, descending (a top feature is strongly present in every class of
// the group); ties prefer the lower index. Throws BadSubset on an empty or
// out-of-range subset or k > D.
std::vector<int> top_shared_features(const CentroidSet& cs, const std::vector<int>& class_subset,
                                     int k);

}  // namespace convfeat
