#include "convfeat/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "convfeat/errors.hpp"

namespace convfeat {

CentroidSet centroids(const FeatureMatrix& m, std::vector<std::string> class_names) {
    const int c = m.n_classes;
    if (c < 1) throw MissingClass("feature matrix carries no classes");
    const std::size_t d = m.values.extent(1);

    CentroidSet cs;
    cs.centroids = Tensor({static_cast<std::size_t>(c), d});
    cs.counts.assign(static_cast<std::size_t>(c), 0);
    cs.layer_index = m.layer_index;

    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        const int y = m.labels[i];
        if (y < 0 || y >= c) throw LabelOutOfRange("label outside class range");
        ++cs.counts[static_cast<std::size_t>(y)];
        const double* row = m.values.data() + i * d;
        double* dst = cs.centroids.data() + static_cast<std::size_t>(y) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += row[j];
    }
    for (int k = 0; k < c; ++k) {
        if (cs.counts[static_cast<std::size_t>(k)] == 0) {
            throw MissingClass("class " + std::to_string(k) + " has no feature rows");
        }
        const double inv = 1.0 / cs.counts[static_cast<std::size_t>(k)];
        double* dst = cs.centroids.data() + static_cast<std::size_t>(k) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] *= inv;
    }

    if (class_names.empty()) {
        for (int k = 0; k < c; ++k) cs.class_names.push_back(std::to_string(k));
    } else {
        if (class_names.size() != static_cast<std::size_t>(c)) {
            throw BadParam("class name count disagrees with class count");
        }
        cs.class_names = std::move(class_names);
    }
    return cs;
}

Dendrogram agglomerate(const CentroidSet& cs, Linkage linkage) {
    const int c = static_cast<int>(cs.centroids.extent(0));
    if (c < 2) throw BadParam("clustering needs at least 2 classes");
    const std::size_t d = cs.centroids.extent(1);

    // Distance matrix over active nodes, indexed by node id; grows as merged
    // clusters get fresh ids C, C+1, ...
    const int max_nodes = 2 * c - 1;
    std::vector<double> dist(static_cast<std::size_t>(max_nodes) * max_nodes, 0.0);
    auto dref = [&](int a, int b) -> double& {
        return dist[static_cast<std::size_t>(a) * max_nodes + b];
    };
    for (int i = 0; i < c; ++i) {
        for (int j = i + 1; j < c; ++j) {
            const double v = euclidean_distance(
                std::span(cs.centroids.data() + static_cast<std::size_t>(i) * d, d),
                std::span(cs.centroids.data() + static_cast<std::size_t>(j) * d, d));
            dref(i, j) = dref(j, i) = v;
        }
    }

    std::vector<int> active;
    std::vector<int> sizes(static_cast<std::size_t>(max_nodes), 1);
    for (int i = 0; i < c; ++i) active.push_back(i);

    Dendrogram out;
    out.n_leaves = c;
    out.leaf_names = cs.class_names;

    for (int step = 0; step < c - 1; ++step) {
        int best_a = -1, best_b = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < active.size(); ++i) {
            for (std::size_t j = i + 1; j < active.size(); ++j) {
                const int a = std::min(active[i], active[j]);
                const int b = std::max(active[i], active[j]);
                const double v = dref(a, b);
                if (v < best_d ||
                    (v == best_d && (a < best_a || (a == best_a && b < best_b)))) {
                    best_d = v;
                    best_a = a;
                    best_b = b;
                }
            }
        }

        const int fresh = c + step;
        out.merges.push_back({best_a, best_b, best_d, fresh});

        // Lance-Williams update for every other active node.
        const double na = sizes[static_cast<std::size_t>(best_a)];
        const double nb = sizes[static_cast<std::size_t>(best_b)];
        for (int other : active) {
            if (other == best_a || other == best_b) continue;
            const double da = dref(best_a, other);
            const double db = dref(best_b, other);
            double v = 0.0;
            switch (linkage) {
                case Linkage::single:
                    v = std::min(da, db);
                    break;
                case Linkage::complete:
                    v = std::max(da, db);
                    break;
                case Linkage::average:
                    v = (na * da + nb * db) / (na + nb);
                    break;
            }
            dref(fresh, other) = dref(other, fresh) = v;
        }
        sizes[static_cast<std::size_t>(fresh)] =
            sizes[static_cast<std::size_t>(best_a)] + sizes[static_cast<std::size_t>(best_b)];
        active.erase(std::remove_if(active.begin(), active.end(),
                                    [&](int id) { return id == best_a || id == best_b; }),
                     active.end());
        active.push_back(fresh);
    }
    return out;
}

namespace {

std::string format_length(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string to_newick(const Dendrogram& d) {
    const int c = d.n_leaves;
    // height of every node (leaves 0), then recursive print from the root.
    std::vector<double> height(static_cast<std::size_t>(c) + d.merges.size(), 0.0);
    std::vector<std::pair<int, int>> children(height.size(), {-1, -1});
    for (const Merge& m : d.merges) {
        height[static_cast<std::size_t>(m.new_id)] = m.height;
        children[static_cast<std::size_t>(m.new_id)] = {m.node_a, m.node_b};
    }

    std::ostringstream os;
    auto print = [&](auto&& self, int node, double parent_height) -> void {
        const bool leaf = node < c;
        if (leaf) {
            os << d.leaf_names[static_cast<std::size_t>(node)];
        } else {
            os << "(";
            self(self, children[static_cast<std::size_t>(node)].first,
                 height[static_cast<std::size_t>(node)]);
            os << ",";
            self(self, children[static_cast<std::size_t>(node)].second,
                 height[static_cast<std::size_t>(node)]);
            os << ")";
        }
        if (parent_height >= 0.0) {
            os << ":"
               << format_length((parent_height - height[static_cast<std::size_t>(node)]) / 2.0);
        }
    };
    print(print, d.merges.empty() ? 0 : d.merges.back().new_id, -1.0);
    os << ";";
    return os.str();
}

void export_merges_csv(const Dendrogram& d, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write merges csv: " + path.string());
    os << "step,node_a,node_b,height,new_id\n";
    char line[120];
    for (std::size_t s = 0; s < d.merges.size(); ++s) {
        const Merge& m = d.merges[s];
        std::snprintf(line, sizeof(line), "%zu,%d,%d,%.17g,%d\n", s, m.node_a, m.node_b,
                      m.height, m.new_id);
        os << line;
    }
    if (!os) throw IoError("failed writing " + path.string());
}

std::vector<Merge> import_merges_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read merges csv: " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "step,node_a,node_b,height,new_id") {
        throw FormatError("bad merges csv header in " + path.string());
    }
    std::vector<Merge> merges;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        Merge m;
        std::size_t step = 0;
        if (std::sscanf(line.c_str(), "%zu,%d,%d,%lg,%d", &step, &m.node_a, &m.node_b,
                        &m.height, &m.new_id) != 5) {
            throw FormatError("bad merges csv row: " + line);
        }
        merges.push_back(m);
    }
    return merges;
}

std::vector<int> top_shared_features(const CentroidSet& cs, const std::vector<int>& class_subset,
                                     int k) {
    const int c = static_cast<int>(cs.centroids.extent(0));
    const std::size_t d = cs.centroids.extent(1);
    if (class_subset.empty()) throw BadSubset("class subset is empty");
    for (int id : class_subset) {
        if (id < 0 || id >= c) throw BadSubset("class id " + std::to_string(id) + " out of range");
    }
    if (k < 1 || static_cast<std::size_t>(k) > d) {
        throw BadSubset("k must lie in [1, D]");
    }

    std::vector<double> shared(d, std::numeric_limits<double>::infinity());
    for (int id : class_subset) {
        const double* row = cs.centroids.data() + static_cast<std::size_t>(id) * d;
        for (std::size_t j = 0; j < d; ++j) shared[j] = std::min(shared[j], row[j]);
    }
    std::vector<int> idx(d);
    for (std::size_t j = 0; j < d; ++j) idx[j] = static_cast<int>(j);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return shared[static_cast<std::size_t>(a)] > shared[static_cast<std::size_t>(b)];
    });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace convfeat
