#include "convfeat/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "convfeat/errors.hpp"
#include "convfeat/parallel.hpp"
#include "convfeat/rng.hpp"

namespace convfeat {

namespace {

double gini_from_counts(const std::vector<std::int32_t>& counts, std::int32_t total) {
    if (total == 0) return 0.0;
    double sumsq = 0.0;
    for (std::int32_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sumsq += p * p;
    }
    return 1.0 - sumsq;
}

struct TreeBuilder {
    const Tensor& x;  // (N, D)
    const std::vector<int>& y;
    int n_classes;
    int min_leaf;
    int max_features;
    Rng rng;

    std::vector<std::int32_t> samples;     // bootstrap row ids, partitioned in place
    std::vector<int> feature_ids;          // identity array for candidate sampling
    std::vector<std::pair<double, int>> scratch;  // (value, label) sort buffer

    Tree tree;

    struct Work {
        std::int32_t node;
        std::int32_t lo, hi;
    };

    explicit TreeBuilder(const Tensor& x_, const std::vector<int>& y_, int n_classes_,
                         const ForestConfig& cfg, Rng rng_)
        : x(x_), y(y_), n_classes(n_classes_), min_leaf(cfg.min_leaf),
          max_features(cfg.max_features), rng(rng_) {
        const std::size_t n = x.extent(0);
        samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            samples[i] = static_cast<std::int32_t>(rng.next_below(n));
        }
        feature_ids.resize(x.extent(1));
        std::iota(feature_ids.begin(), feature_ids.end(), 0);
        scratch.reserve(n);
    }

    std::vector<std::int32_t> histogram(std::int32_t lo, std::int32_t hi) const {
        std::vector<std::int32_t> counts(static_cast<std::size_t>(n_classes), 0);
        for (std::int32_t i = lo; i < hi; ++i) {
            ++counts[static_cast<std::size_t>(y[static_cast<std::size_t>(samples[i])])];
        }
        return counts;
    }

    void build() {
        std::vector<Work> stack;
        tree.nodes.emplace_back();
        stack.push_back({0, 0, static_cast<std::int32_t>(samples.size())});
        while (!stack.empty()) {
            const Work w = stack.back();
            stack.pop_back();
            split_node(w, stack);
        }
    }

    void split_node(const Work& w, std::vector<Work>& stack) {
        const std::int32_t n = w.hi - w.lo;
        auto counts = histogram(w.lo, w.hi);
        const double parent_gini = gini_from_counts(counts, n);

        const bool pure = std::count(counts.begin(), counts.end(), 0) >=
                          static_cast<long>(counts.size()) - 1;
        if (pure || n < 2 * min_leaf || n < 2) {
            tree.nodes[static_cast<std::size_t>(w.node)].class_counts = std::move(counts);
            return;
        }

        // Candidate features: partial Fisher-Yates over the identity array,
        // undone afterwards so the next node samples from a clean deck.
        const int d = static_cast<int>(feature_ids.size());
        const int m = std::min(max_features, d);
        double best_decrease = 0.0;
        int best_feature = -1;
        double best_threshold = 0.0;

        std::vector<std::int32_t> left_counts(static_cast<std::size_t>(n_classes));
        for (int pick = 0; pick < m; ++pick) {
            const int j =
                pick + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(d - pick)));
            std::swap(feature_ids[static_cast<std::size_t>(pick)],
                      feature_ids[static_cast<std::size_t>(j)]);
            const int f = feature_ids[static_cast<std::size_t>(pick)];

            scratch.clear();
            for (std::int32_t i = w.lo; i < w.hi; ++i) {
                const std::size_t row = static_cast<std::size_t>(samples[i]);
                scratch.emplace_back(x(row, static_cast<std::size_t>(f)), y[row]);
            }
            std::sort(scratch.begin(), scratch.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

            std::fill(left_counts.begin(), left_counts.end(), 0);
            std::int32_t nl = 0;
            for (std::int32_t i = 0; i + 1 < n; ++i) {
                ++left_counts[static_cast<std::size_t>(scratch[static_cast<std::size_t>(i)].second)];
                ++nl;
                const double v = scratch[static_cast<std::size_t>(i)].first;
                const double next = scratch[static_cast<std::size_t>(i) + 1].first;
                if (v == next) continue;  // not a distinct-value boundary
                if (nl < min_leaf || n - nl < min_leaf) continue;
                double left_sumsq = 0.0;
                for (std::int32_t c = 0; c < n_classes; ++c) {
                    const std::int32_t lc = left_counts[static_cast<std::size_t>(c)];
                    const double pl = static_cast<double>(lc) / nl;
                    left_sumsq += pl * pl;
                    // right side finished below with parent counts
                }
                double right_sumsq = 0.0;
                const std::int32_t nr = n - nl;
                for (std::int32_t c = 0; c < n_classes; ++c) {
                    const std::int32_t rc = counts[static_cast<std::size_t>(c)] -
                                            left_counts[static_cast<std::size_t>(c)];
                    const double pr = static_cast<double>(rc) / nr;
                    right_sumsq += pr * pr;
                }
                const double gl = 1.0 - left_sumsq, gr = 1.0 - right_sumsq;
                const double decrease = parent_gini -
                                        (static_cast<double>(nl) / n) * gl -
                                        (static_cast<double>(nr) / n) * gr;
                // Strict >: ties keep the earliest-sampled feature, and within
                // a feature the lowest threshold (the sweep ascends).
                if (decrease > best_decrease) {
                    best_decrease = decrease;
                    best_feature = f;
                    best_threshold = v + (next - v) / 2.0;
                }
            }
        }

        if (best_feature < 0) {
            tree.nodes[static_cast<std::size_t>(w.node)].class_counts = std::move(counts);
            return;
        }

        const auto mid = std::partition(
            samples.begin() + w.lo, samples.begin() + w.hi, [&](std::int32_t row) {
                return x(static_cast<std::size_t>(row),
                         static_cast<std::size_t>(best_feature)) <= best_threshold;
            });
        const std::int32_t cut = static_cast<std::int32_t>(mid - samples.begin());

        const std::int32_t left_id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        const std::int32_t right_id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        TreeNode& node = tree.nodes[static_cast<std::size_t>(w.node)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = left_id;
        node.right = right_id;
        // Left child next (LIFO), so construction order matches recursion.
        stack.push_back({right_id, cut, w.hi});
        stack.push_back({left_id, w.lo, cut});
    }
};

int leaf_vote(const TreeNode& leaf) {
    int best = 0;
    for (std::size_t c = 1; c < leaf.class_counts.size(); ++c) {
        if (leaf.class_counts[c] > leaf.class_counts[static_cast<std::size_t>(best)]) {
            best = static_cast<int>(c);
        }
    }
    return best;
}

const TreeNode& route(const Tree& tree, const double* row) {
    const TreeNode* node = &tree.nodes[0];
    while (!node->is_leaf()) {
        node = row[node->feature] <= node->threshold
                   ? &tree.nodes[static_cast<std::size_t>(node->left)]
                   : &tree.nodes[static_cast<std::size_t>(node->right)];
    }
    return *node;
}

}  // namespace

ForestModel rf_train(const FeatureMatrix& m, const ForestConfig& cfg) {
    const std::size_t n = m.values.extent(0), d = m.values.extent(1);
    if (n < 2 || d < 1) throw BadParam("forest needs at least 2 samples and 1 feature");
    if (cfg.n_trees < 1 || cfg.min_leaf < 1) throw BadParam("forest config out of range");

    ForestConfig cfg_used = cfg;
    if (cfg_used.max_features <= 0) {
        cfg_used.max_features =
            std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
    }

    ForestModel model;
    model.n_features = static_cast<int>(d);
    model.n_classes = m.n_classes;
    model.config = cfg_used;
    model.trees.resize(static_cast<std::size_t>(cfg_used.n_trees));

    Rng forest_rng(cfg_used.seed);
    parallel_for(model.trees.size(), [&](std::size_t t) {
        TreeBuilder builder(m.values, m.labels, m.n_classes, cfg_used,
                            forest_rng.fork(t));
        builder.build();
        model.trees[t] = std::move(builder.tree);
    });
    return model;
}

std::vector<int> rf_predict(const ForestModel& model, const Tensor& rows,
                            Tensor* vote_fractions) {
    if (rows.rank() != 2 || rows.extent(1) != static_cast<std::size_t>(model.n_features)) {
        throw ShapeMismatch("rf_predict rows " + shape_string(rows.shape()) + " vs " +
                            std::to_string(model.n_features) + " features");
    }
    const std::size_t nrows = rows.extent(0);
    const std::size_t c = static_cast<std::size_t>(model.n_classes);
    std::vector<int> labels(nrows, 0);
    if (vote_fractions) *vote_fractions = Tensor({nrows, c});

    std::vector<std::int32_t> votes(c);
    for (std::size_t i = 0; i < nrows; ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        const double* row = rows.data() + i * rows.extent(1);
        for (const Tree& tree : model.trees) {
            ++votes[static_cast<std::size_t>(leaf_vote(route(tree, row)))];
        }
        std::size_t best = 0;
        for (std::size_t k = 1; k < c; ++k) {
            if (votes[k] > votes[best]) best = k;
        }
        labels[i] = static_cast<int>(best);
        if (vote_fractions) {
            for (std::size_t k = 0; k < c; ++k) {
                (*vote_fractions)(i, k) =
                    static_cast<double>(votes[k]) / static_cast<double>(model.trees.size());
            }
        }
    }
    return labels;
}

namespace {

// Sum over one tree of (n_node/N) * Gini decrease, credited to each split's
// feature, with `rows` routed from the root. Ranges partition `order`.
void tree_importance(const Tree& tree, const Tensor& rows, const std::vector<int>& labels,
                     int n_classes, std::vector<double>& acc) {
    const std::size_t n_total = rows.extent(0);
    if (n_total == 0) return;
    std::vector<std::int32_t> order(n_total);
    std::iota(order.begin(), order.end(), 0);

    struct Work {
        std::int32_t node, lo, hi;
    };
    std::vector<Work> stack{{0, 0, static_cast<std::int32_t>(n_total)}};
    std::vector<std::int32_t> counts(static_cast<std::size_t>(n_classes));
    std::vector<std::int32_t> left_counts(static_cast<std::size_t>(n_classes));

    while (!stack.empty()) {
        const Work w = stack.back();
        stack.pop_back();
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(w.node)];
        if (node.is_leaf() || w.hi == w.lo) continue;
        const auto mid =
            std::partition(order.begin() + w.lo, order.begin() + w.hi, [&](std::int32_t r) {
                return rows(static_cast<std::size_t>(r),
                            static_cast<std::size_t>(node.feature)) <= node.threshold;
            });
        const std::int32_t cut = static_cast<std::int32_t>(mid - order.begin());

        const std::int32_t n = w.hi - w.lo, nl = cut - w.lo, nr = w.hi - cut;
        std::fill(counts.begin(), counts.end(), 0);
        std::fill(left_counts.begin(), left_counts.end(), 0);
        for (std::int32_t i = w.lo; i < w.hi; ++i) {
            const std::size_t cls =
                static_cast<std::size_t>(labels[static_cast<std::size_t>(order[i])]);
            ++counts[cls];
            if (i < cut) ++left_counts[cls];
        }
        double gl = 0.0, gr = 0.0;
        if (nl > 0) gl = gini_from_counts(left_counts, nl);
        if (nr > 0) {
            for (std::size_t k = 0; k < counts.size(); ++k) left_counts[k] = counts[k] - left_counts[k];
            gr = gini_from_counts(left_counts, nr);
        }
        const double decrease = gini_from_counts(counts, n) -
                                (nl > 0 ? (static_cast<double>(nl) / n) * gl : 0.0) -
                                (nr > 0 ? (static_cast<double>(nr) / n) * gr : 0.0);
        acc[static_cast<std::size_t>(node.feature)] +=
            (static_cast<double>(n) / static_cast<double>(n_total)) * decrease;

        stack.push_back({node.right, cut, w.hi});
        stack.push_back({node.left, w.lo, cut});
    }
}

}  // namespace

ImportanceReport rf_importance(const ForestModel& model, const FeatureMatrix& m) {
    if (m.values.extent(1) != static_cast<std::size_t>(model.n_features)) {
        throw ShapeMismatch("importance matrix width disagrees with the model");
    }
    const std::size_t d = static_cast<std::size_t>(model.n_features);
    std::vector<std::vector<double>> per_tree(model.trees.size(),
                                              std::vector<double>(d, 0.0));
    parallel_for(model.trees.size(), [&](std::size_t t) {
        tree_importance(model.trees[t], m.values, m.labels, model.n_classes, per_tree[t]);
    });

    ImportanceReport report;
    report.scores.assign(d, 0.0);
    for (const auto& acc : per_tree) {
        for (std::size_t f = 0; f < d; ++f) report.scores[f] += acc[f];
    }
    double total = 0.0;
    for (double s : report.scores) total += s;
    if (total > 0.0) {
        for (double& s : report.scores) s /= total;
    } else {
        std::fill(report.scores.begin(), report.scores.end(), 0.0);
    }
    report.threshold = 1.0 / (100.0 * static_cast<double>(d));
    report.significant_mask.resize(d);
    for (std::size_t f = 0; f < d; ++f) {
        report.significant_mask[f] = report.scores[f] > report.threshold;
    }
    return report;
}

double significant_fraction(const ImportanceReport& report) {
    if (report.significant_mask.empty()) return 0.0;
    const auto hits = std::count(report.significant_mask.begin(),
                                 report.significant_mask.end(), true);
    return static_cast<double>(hits) / static_cast<double>(report.significant_mask.size());
}

void save_forest(const ForestModel& model, const std::filesystem::path& path) {
    nlohmann::json j;
    j["kind"] = "forest";
    j["n_features"] = model.n_features;
    j["n_classes"] = model.n_classes;
    j["config"] = {{"n_trees", model.config.n_trees},
                   {"min_leaf", model.config.min_leaf},
                   {"max_features", model.config.max_features},
                   {"seed", model.config.seed}};
    auto trees = nlohmann::json::array();
    for (const Tree& tree : model.trees) {
        auto nodes = nlohmann::json::array();
        for (const TreeNode& n : tree.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"counts", n.class_counts}});
            } else {
                nodes.push_back({{"f", n.feature},
                                 {"t", n.threshold},
                                 {"l", n.left},
                                 {"r", n.right}});
            }
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    j["trees"] = std::move(trees);
    std::ofstream os(path);
    if (!os) throw IoError("cannot write forest: " + path.string());
    os << j.dump() << "\n";
    if (!os) throw IoError("failed writing " + path.string());
}

ForestModel load_forest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read forest: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("forest json parse failure: " + std::string(e.what()));
    }
    try {
        if (j.value("kind", std::string()) != "forest") {
            throw FormatError("not a forest file: " + path.string());
        }
        ForestModel model;
        model.n_features = j.at("n_features").get<int>();
        model.n_classes = j.at("n_classes").get<int>();
        const auto& jc = j.at("config");
        model.config.n_trees = jc.at("n_trees").get<int>();
        model.config.min_leaf = jc.at("min_leaf").get<int>();
        model.config.max_features = jc.at("max_features").get<int>();
        model.config.seed = jc.at("seed").get<std::uint64_t>();
        for (const auto& jt : j.at("trees")) {
            Tree tree;
            for (const auto& jn : jt.at("nodes")) {
                TreeNode n;
                if (jn.contains("counts")) {
                    n.class_counts = jn.at("counts").get<std::vector<std::int32_t>>();
                } else {
                    n.feature = jn.at("f").get<int>();
                    n.threshold = jn.at("t").get<double>();
                    n.left = jn.at("l").get<std::int32_t>();
                    n.right = jn.at("r").get<std::int32_t>();
                }
                tree.nodes.push_back(std::move(n));
            }
            model.trees.push_back(std::move(tree));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("forest json field error: " + std::string(e.what()));
    }
}

void export_importance_csv(const ImportanceReport& report, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write importance csv: " + path.string());
    os << "feature_index,score,significant\n";
    char line[80];
    for (std::size_t f = 0; f < report.scores.size(); ++f) {
        std::snprintf(line, sizeof(line), "%zu,%.17g,%d\n", f, report.scores[f],
                      report.significant_mask[f] ? 1 : 0);
        os << line;
    }
    if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace convfeat
