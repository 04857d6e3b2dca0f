#include <benchmark/benchmark.h>

#include "convfeat/clustering.hpp"
#include "convfeat/features.hpp"
#include "convfeat/forest.hpp"
#include "convfeat/rng.hpp"
#include "convfeat/svm.hpp"

using namespace convfeat;

namespace {

FeatureMatrix random_features(std::size_t n, std::size_t d, int n_classes, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMatrix m;
    m.values = Tensor({n, d});
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        m.values[i] = rng.next_uniform(-1.0, 1.0);
    }
    m.n_classes = n_classes;
    for (std::size_t i = 0; i < n; ++i) {
        // Tie a few columns to the label so trees have real splits to find.
        const int label = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_classes)));
        m.labels.push_back(label);
        m.values(i, 0) += label;
        m.values(i, 1) -= label;
    }
    return m;
}

void bm_rf_train(benchmark::State& state) {
    const FeatureMatrix m =
        random_features(static_cast<std::size_t>(state.range(0)), 64, 10, 11);
    ForestConfig cfg;
    cfg.n_trees = 50;
    cfg.seed = 5;
    for (auto _ : state) {
        ForestModel model = rf_train(m, cfg);
        benchmark::DoNotOptimize(model.trees.data());
    }
}

void bm_svm_ovr_train(benchmark::State& state) {
    const FeatureMatrix m =
        random_features(static_cast<std::size_t>(state.range(0)), 64, 10, 13);
    for (auto _ : state) {
        MulticlassSvm model = svm_train_multiclass(m, SvmMode::one_vs_rest, 1.0, 10, 7);
        benchmark::DoNotOptimize(model.models.data());
    }
}

void bm_agglomerate(benchmark::State& state) {
    const FeatureMatrix m =
        random_features(static_cast<std::size_t>(state.range(0)) * 5,
                        static_cast<std::size_t>(64), static_cast<int>(state.range(0)), 17);
    const CentroidSet cs = centroids(m);
    for (auto _ : state) {
        Dendrogram d = agglomerate(cs, Linkage::average);
        benchmark::DoNotOptimize(d.merges.data());
    }
}

}  // namespace

BENCHMARK(bm_rf_train)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_svm_ovr_train)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_agglomerate)->Arg(10)->Arg(50)->Unit(benchmark::kMicrosecond);
