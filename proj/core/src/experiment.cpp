#include "convfeat/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "convfeat/deconv.hpp"
#include "convfeat/errors.hpp"
#include "convfeat/features.hpp"
#include "convfeat/parallel.hpp"
#include "convfeat/version.hpp"

namespace convfeat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Linkage linkage_from_name(const std::string& name) {
    if (name == "single") return Linkage::single;
    if (name == "complete") return Linkage::complete;
    if (name == "average") return Linkage::average;
    throw FormatError("unknown linkage: " + name);
}

const char* linkage_name(Linkage l) {
    switch (l) {
        case Linkage::single: return "single";
        case Linkage::complete: return "complete";
        default: return "average";
    }
}

Dtype dtype_from_name(const std::string& name) {
    if (name == "f32") return Dtype::f32;
    if (name == "f64") return Dtype::f64;
    throw FormatError("unknown precision: " + name);
}

json plan_to_json(const ExperimentPlan& p) {
    json j;
    j["spec"] = p.spec_path.string();
    if (!p.data.directory.empty()) {
        j["dataset"]["directory"] = p.data.directory.string();
    } else {
        j["dataset"]["synth"] = {{"classes", p.data.synth.n_classes},
                                 {"per_class", p.data.synth.per_class},
                                 {"side", p.data.synth.side}};
    }
    j["dataset"]["split"] = {{"train", p.data.synth.split.train},
                             {"validation", p.data.synth.split.validation}};
    j["train"] = {{"epochs", p.train.epochs},
                  {"batch_size", p.train.batch_size},
                  {"learning_rate", p.train.learning_rate},
                  {"momentum", p.train.momentum},
                  {"max_norm_cap", p.train.max_norm_cap},
                  {"checkpoint_every", p.train.checkpoint_every},
                  {"precision", p.train.precision == Dtype::f32 ? "f32" : "f64"}};
    j["seed"] = p.train.seed;
    j["layers"] = p.layers;
    j["epoch_sweep"] = p.epoch_sweep;
    json cls = json::array();
    if (p.run_rf) cls.push_back("rf");
    if (p.run_svm_ovr) cls.push_back("svm_ovr");
    if (p.run_svm_ovo) cls.push_back("svm_ovo");
    j["classifiers"] = cls;
    j["ensemble"] = p.ensemble;
    j["ensemble_epochs"] = p.ensemble_epochs;
    j["forest"] = {{"n_trees", p.forest.n_trees},
                   {"min_leaf", p.forest.min_leaf},
                   {"max_features", p.forest.max_features}};
    j["svm"] = {{"c_reg", p.svm_c}, {"epochs", p.svm_epochs}};
    j["feature_layer"] = p.feature_layer;
    j["linkage"] = linkage_name(p.linkage);
    j["out_dir"] = p.out_dir.string();
    return j;
}

ExperimentPlan plan_from_json(const json& j) {
    ExperimentPlan p;
    p.data.synth.side = 0;  // unset: resolved against the network spec
    if (j.contains("spec")) p.spec_path = j.at("spec").get<std::string>();
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        if (d.contains("directory")) p.data.directory = d.at("directory").get<std::string>();
        if (d.contains("synth")) {
            const json& s = d.at("synth");
            if (s.contains("classes")) p.data.synth.n_classes = s.at("classes").get<int>();
            if (s.contains("per_class")) p.data.synth.per_class = s.at("per_class").get<int>();
            if (s.contains("side")) p.data.synth.side = s.at("side").get<int>();
        }
        if (d.contains("split")) {
            const json& s = d.at("split");
            if (s.contains("train")) p.data.synth.split.train = s.at("train").get<double>();
            if (s.contains("validation")) {
                p.data.synth.split.validation = s.at("validation").get<double>();
            }
        }
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        if (t.contains("epochs")) p.train.epochs = t.at("epochs").get<int>();
        if (t.contains("batch_size")) p.train.batch_size = t.at("batch_size").get<int>();
        if (t.contains("learning_rate")) p.train.learning_rate = t.at("learning_rate").get<double>();
        if (t.contains("momentum")) p.train.momentum = t.at("momentum").get<double>();
        if (t.contains("max_norm_cap")) p.train.max_norm_cap = t.at("max_norm_cap").get<double>();
        if (t.contains("checkpoint_every")) {
            p.train.checkpoint_every = t.at("checkpoint_every").get<int>();
        }
        if (t.contains("precision")) {
            p.train.precision = dtype_from_name(t.at("precision").get<std::string>());
        }
    }
    if (j.contains("seed")) p.train.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("layers")) p.layers = j.at("layers").get<std::vector<int>>();
    if (j.contains("epoch_sweep")) p.epoch_sweep = j.at("epoch_sweep").get<std::vector<int>>();
    if (j.contains("classifiers")) {
        p.run_rf = p.run_svm_ovr = p.run_svm_ovo = false;
        for (const auto& c : j.at("classifiers")) {
            const std::string name = c.get<std::string>();
            if (name == "rf") p.run_rf = true;
            else if (name == "svm_ovr") p.run_svm_ovr = true;
            else if (name == "svm_ovo") p.run_svm_ovo = true;
            else throw FormatError("unknown classifier: " + name);
        }
    }
    if (j.contains("ensemble")) p.ensemble = j.at("ensemble").get<int>();
    if (j.contains("ensemble_epochs")) p.ensemble_epochs = j.at("ensemble_epochs").get<int>();
    if (j.contains("forest")) {
        const json& f = j.at("forest");
        if (f.contains("n_trees")) p.forest.n_trees = f.at("n_trees").get<int>();
        if (f.contains("min_leaf")) p.forest.min_leaf = f.at("min_leaf").get<int>();
        if (f.contains("max_features")) p.forest.max_features = f.at("max_features").get<int>();
    }
    if (j.contains("svm")) {
        const json& s = j.at("svm");
        if (s.contains("c_reg")) p.svm_c = s.at("c_reg").get<double>();
        if (s.contains("epochs")) p.svm_epochs = s.at("epochs").get<int>();
    }
    if (j.contains("feature_layer")) p.feature_layer = j.at("feature_layer").get<int>();
    if (j.contains("linkage")) p.linkage = linkage_from_name(j.at("linkage").get<std::string>());
    if (j.contains("out_dir")) p.out_dir = j.at("out_dir").get<std::string>();
    return p;
}

// Deterministic per-cell seed: master -> named stream -> index path. Every
// classifier fit in a sweep gets its own well-separated stream.
std::uint64_t cell_seed(const ExperimentPlan& plan, std::uint64_t stream,
                        std::initializer_list<std::uint64_t> path) {
    Rng r = Rng(plan.train.seed).fork(stream);
    for (std::uint64_t p : path) r = r.fork(p);
    return r.state();
}

std::vector<LabeledImage> fitting_pool(const SplitDataset& d) {
    std::vector<LabeledImage> pool = d.train;
    pool.insert(pool.end(), d.validation.begin(), d.validation.end());
    return pool;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& labels) {
    if (pred.size() != labels.size()) throw ShapeMismatch("prediction/label count mismatch");
    if (pred.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

FeatureMatrix tap_features(const Checkpoint& ckpt, const std::vector<LabeledImage>& images,
                           int layer, int n_classes) {
    FeatureMatrix m = extract(ckpt, images, layer);
    m.n_classes = n_classes;
    return m;
}

std::vector<int> sweep_layers(const ExperimentPlan& plan, const NetworkSpec& spec) {
    if (!plan.layers.empty()) return plan.layers;
    std::vector<int> all(feature_taps(spec).size());
    std::iota(all.begin(), all.end(), 0);
    return all;
}

std::string epoch_file(int epoch) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "ckpt_epoch_%04d.cpt", epoch);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    return os;
}

std::string fixed6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

ExperimentPlan load_plan(const fs::path& json_path) {
    std::ifstream is(json_path);
    if (!is) throw IoError("cannot read plan: " + json_path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError("bad plan JSON (" + json_path.string() + "): " + e.what());
    }
    return plan_from_json(j);
}

void save_plan(const ExperimentPlan& plan, const fs::path& json_path) {
    std::ofstream os = open_out(json_path);
    os << plan_to_json(plan).dump(2) << "\n";
}

SplitDataset load_data(const ExperimentPlan& plan) {
    int side = plan.data.synth.side;
    if (!plan.spec_path.empty()) side = load_network(plan.spec_path).input_side;
    if (side < 1) throw BadParam("image side unknown: give a network spec or a synth side");

    Rng rng(plan.train.seed);
    if (!plan.data.directory.empty()) {
        return load_directory(plan.data.directory, side, plan.data.synth.split, rng);
    }
    SynthParams params = plan.data.synth;
    params.side = side;
    return synth_generate(params, rng);
}

RunContext run_train(const ExperimentPlan& plan) {
    if (plan.spec_path.empty()) throw BadParam("plan has no network spec");
    RunContext ctx;
    ctx.spec = load_network(plan.spec_path);
    ctx.data = load_data(plan);
    write_manifest(plan, "train");
    ctx.result = train(ctx.spec, ctx.data, plan.train, plan.out_dir / "train");
    return ctx;
}

RunContext make_context(const ExperimentPlan& plan) {
    if (plan.spec_path.empty()) throw BadParam("plan has no network spec");
    RunContext ctx;
    ctx.spec = load_network(plan.spec_path);
    ctx.data = load_data(plan);

    const fs::path dir = plan.out_dir / "train";
    std::vector<fs::path> found;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("ckpt_epoch_", 0) == 0 && e.path().extension() == ".cpt") {
                found.push_back(e.path());
            }
        }
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) {
        throw MissingCheckpoint("no checkpoints under " + dir.string() + "; run train first");
    }
    ctx.result.checkpoint_paths = std::move(found);
    ctx.result.final_state = load_checkpoint(ctx.result.checkpoint_paths.back());
    return ctx;
}

std::vector<fs::path> run_extract(const ExperimentPlan& plan, const RunContext& ctx, int layer) {
    const int c = ctx.data.n_classes();
    const fs::path dir = plan.out_dir / "features";
    fs::create_directories(dir);
    write_manifest(plan, "extract");

    std::vector<fs::path> paths;
    const auto pool = fitting_pool(ctx.data);
    char name[64];
    std::snprintf(name, sizeof(name), "layer_%d_pool.cpt", layer);
    paths.push_back(dir / name);
    save_matrix(tap_features(ctx.result.final_state, pool, layer, c), paths.back(),
                plan.train.precision);
    std::snprintf(name, sizeof(name), "layer_%d_test.cpt", layer);
    paths.push_back(dir / name);
    save_matrix(tap_features(ctx.result.final_state, ctx.data.test, layer, c), paths.back(),
                plan.train.precision);
    return paths;
}

std::vector<SweepRow> run_layer_sweep(const ExperimentPlan& plan, const RunContext& ctx) {
    const Checkpoint& ckpt = ctx.result.final_state;
    const int c = ctx.data.n_classes();
    const auto pool = fitting_pool(ctx.data);
    std::vector<SweepRow> rows;

    for (int layer : sweep_layers(plan, ctx.spec)) {
        const FeatureMatrix ftr = tap_features(ckpt, pool, layer, c);
        const FeatureMatrix fte = tap_features(ckpt, ctx.data.test, layer, c);
        if (plan.run_rf) {
            ForestConfig fc = plan.forest;
            fc.seed = cell_seed(plan, rng_streams::forest, {0, static_cast<std::uint64_t>(layer)});
            const ForestModel fm = rf_train(ftr, fc);
            rows.push_back({std::to_string(layer), "rf", accuracy(rf_predict(fm, fte.values), fte.labels)});
        }
        if (plan.run_svm_ovr) {
            const auto seed =
                cell_seed(plan, rng_streams::svm, {0, static_cast<std::uint64_t>(layer), 0});
            const MulticlassSvm sm =
                svm_train_multiclass(ftr, SvmMode::one_vs_rest, plan.svm_c, plan.svm_epochs, seed);
            rows.push_back({std::to_string(layer), "svm_ovr", accuracy(svm_predict(sm, fte.values), fte.labels)});
        }
        if (plan.run_svm_ovo) {
            const auto seed =
                cell_seed(plan, rng_streams::svm, {0, static_cast<std::uint64_t>(layer), 1});
            const MulticlassSvm sm =
                svm_train_multiclass(ftr, SvmMode::one_vs_one, plan.svm_c, plan.svm_epochs, seed);
            rows.push_back({std::to_string(layer), "svm_ovo", accuracy(svm_predict(sm, fte.values), fte.labels)});
        }
    }
    rows.push_back({"baseline", "cnn", evaluate_accuracy(ckpt, ctx.data.test)});

    write_manifest(plan, "layer-sweep");
    std::ofstream os = open_out(plan.out_dir / "layer_sweep.csv");
    os << "layer,classifier,test_accuracy\n";
    for (const SweepRow& r : rows) {
        os << r.layer << "," << r.classifier << "," << fixed6(r.test_accuracy) << "\n";
    }
    return rows;
}

std::vector<EpochRow> run_epoch_sweep(const ExperimentPlan& plan, const RunContext& ctx) {
    const fs::path dir = plan.out_dir / "train";
    std::vector<int> epochs = plan.epoch_sweep;
    if (epochs.empty()) {
        for (const fs::path& p : ctx.result.checkpoint_paths) {
            const std::string stem = p.stem().string();
            epochs.push_back(std::stoi(stem.substr(stem.rfind('_') + 1)));
        }
        std::sort(epochs.begin(), epochs.end());
        epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());
    }

    const int c = ctx.data.n_classes();
    const auto pool = fitting_pool(ctx.data);
    std::vector<EpochRow> rows;
    for (int e : epochs) {
        const fs::path path = dir / epoch_file(e);
        if (!fs::exists(path)) {
            throw MissingCheckpoint("no checkpoint for epoch " + std::to_string(e) + " under " +
                                    dir.string());
        }
        const Checkpoint ckpt = load_checkpoint(path);
        EpochRow row;
        row.epoch = e;
        row.cnn_acc = evaluate_accuracy(ckpt, ctx.data.test);

        const FeatureMatrix ftr = tap_features(ckpt, pool, plan.feature_layer, c);
        const FeatureMatrix fte = tap_features(ckpt, ctx.data.test, plan.feature_layer, c);
        ForestConfig fc = plan.forest;
        fc.seed = cell_seed(plan, rng_streams::forest, {1, static_cast<std::uint64_t>(e)});
        row.rf_acc = accuracy(rf_predict(rf_train(ftr, fc), fte.values), fte.labels);

        const auto seed = cell_seed(plan, rng_streams::svm, {1, static_cast<std::uint64_t>(e), 0});
        const MulticlassSvm sm =
            svm_train_multiclass(ftr, SvmMode::one_vs_rest, plan.svm_c, plan.svm_epochs, seed);
        row.svm_acc = accuracy(svm_predict(sm, fte.values), fte.labels);
        rows.push_back(row);
    }

    write_manifest(plan, "epoch-sweep");
    std::ofstream os = open_out(plan.out_dir / "epoch_sweep.csv");
    os << "epoch,cnn_acc,rf_acc,svm_acc\n";
    for (const EpochRow& r : rows) {
        os << r.epoch << "," << fixed6(r.cnn_acc) << "," << fixed6(r.rf_acc) << ","
           << fixed6(r.svm_acc) << "\n";
    }
    return rows;
}

BagReport run_bag(const ExperimentPlan& plan) {
    if (plan.spec_path.empty()) throw BadParam("plan has no network spec");
    if (plan.ensemble < 1) throw BadParam("ensemble size must be >= 1");
    const NetworkSpec spec = load_network(plan.spec_path);
    const SplitDataset data = load_data(plan);
    const std::size_t k = static_cast<std::size_t>(plan.ensemble);

    BagReport report;
    report.member_seeds.resize(k);
    report.member_accuracy.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        report.member_seeds[i] = cell_seed(plan, rng_streams::bagging, {i});
    }

    std::vector<Checkpoint> members(k);
    parallel_for(k, [&](std::size_t i) {
        TrainConfig cfg = plan.train;
        if (plan.ensemble_epochs > 0) cfg.epochs = plan.ensemble_epochs;
        cfg.seed = report.member_seeds[i];
        members[i] = train(spec, data, cfg, {}).final_state;
        report.member_accuracy[i] = evaluate_accuracy(members[i], data.test);
    });

    report.mean_single =
        std::accumulate(report.member_accuracy.begin(), report.member_accuracy.end(), 0.0) /
        static_cast<double>(k);
    std::vector<int> test_labels;
    for (const LabeledImage& im : data.test) test_labels.push_back(im.class_id);
    report.bagged = accuracy(bagged_predict(members, data.test), test_labels);

    write_manifest(plan, "bag");
    json j;
    j["ensemble"] = plan.ensemble;
    j["epochs_per_member"] = plan.ensemble_epochs > 0 ? plan.ensemble_epochs : plan.train.epochs;
    j["members"] = json::array();
    for (std::size_t i = 0; i < k; ++i) {
        j["members"].push_back(
            {{"seed", report.member_seeds[i]}, {"test_accuracy", report.member_accuracy[i]}});
    }
    j["mean_single_accuracy"] = report.mean_single;
    j["bagged_accuracy"] = report.bagged;
    std::ofstream os = open_out(plan.out_dir / "bag_report.json");
    os << j.dump(2) << "\n";
    return report;
}

std::vector<ImportanceRow> run_importance(const ExperimentPlan& plan, const RunContext& ctx) {
    const Checkpoint& ckpt = ctx.result.final_state;
    const int c = ctx.data.n_classes();
    const auto pool = fitting_pool(ctx.data);
    const fs::path dir = plan.out_dir / "importance";

    std::vector<ImportanceRow> rows;
    for (int layer : sweep_layers(plan, ctx.spec)) {
        const FeatureMatrix ftr = tap_features(ckpt, pool, layer, c);
        ForestConfig fc = plan.forest;
        // Same stream as the layer sweep: this scores exactly the forest the
        // sweep evaluated.
        fc.seed = cell_seed(plan, rng_streams::forest, {0, static_cast<std::uint64_t>(layer)});
        const ForestModel fm = rf_train(ftr, fc);
        const ImportanceReport rep = rf_importance(fm, ftr);

        char name[48];
        std::snprintf(name, sizeof(name), "layer_%d.csv", layer);
        fs::create_directories(dir);
        export_importance_csv(rep, dir / name);
        rows.push_back(
            {layer, rep.scores.size(), rep.threshold, significant_fraction(rep)});
    }

    write_manifest(plan, "importance");
    std::ofstream os = open_out(dir / "summary.csv");
    os << "layer,n_features,threshold,significant_fraction\n";
    char line[120];
    for (const ImportanceRow& r : rows) {
        std::snprintf(line, sizeof(line), "%d,%zu,%.9g,%.6f\n", r.layer, r.n_features,
                      r.threshold, r.significant_fraction);
        os << line;
    }
    return rows;
}

Dendrogram run_cluster(const ExperimentPlan& plan, const RunContext& ctx) {
    const auto pool = fitting_pool(ctx.data);
    const FeatureMatrix ftr =
        tap_features(ctx.result.final_state, pool, plan.feature_layer, ctx.data.n_classes());
    const CentroidSet cs = centroids(ftr, ctx.data.class_names);
    const Dendrogram d = agglomerate(cs, plan.linkage);

    write_manifest(plan, "cluster");
    std::ofstream os = open_out(plan.out_dir / "cluster" / "dendrogram.newick");
    os << to_newick(d) << "\n";
    export_merges_csv(d, plan.out_dir / "cluster" / "merges.csv");
    return d;
}

std::vector<fs::path> run_deconv(const ExperimentPlan& plan, const RunContext& ctx, int layer,
                                 int feature, int top_k) {
    const Checkpoint& ckpt = ctx.result.final_state;
    const auto top = top_activating_samples(ckpt, ctx.data.test, layer, feature, top_k);

    write_manifest(plan, "deconv");
    const fs::path dir = plan.out_dir / "deconv";
    fs::create_directories(dir);
    std::vector<fs::path> paths;
    for (std::size_t r = 0; r < top.size(); ++r) {
        const int sample = top[r].first;
        const ForwardRecord rec =
            record_forward(ckpt, ctx.data.test[static_cast<std::size_t>(sample)], sample);
        const Projection proj = project(ckpt, rec, layer, feature);
        char name[64];
        std::snprintf(name, sizeof(name), "layer%d_feature%d_rank%zu.pgm", layer, feature, r);
        paths.push_back(dir / name);
        export_projection_pgm(proj, paths.back());
    }
    return paths;
}

void run_synth_export(const ExperimentPlan& plan) {
    if (!plan.data.directory.empty()) {
        throw BadParam("synth export needs a synthetic dataset source");
    }
    const SplitDataset data = load_data(plan);
    write_manifest(plan, "synth");
    export_images(data, plan.out_dir / "images");
    export_manifest(data, plan.out_dir / "dataset_index.csv");
}

void write_manifest(const ExperimentPlan& plan, const std::string& command) {
    json j;
    j["command"] = command;
    j["plan"] = plan_to_json(plan);
    j["seed"] = plan.train.seed;
    j["version"] = version_string();
    std::ofstream os = open_out(plan.out_dir / "manifest.json");
    os << j.dump(2) << "\n";
}

std::string version_string() { return CONVFEAT_VERSION; }

}  // namespace convfeat
