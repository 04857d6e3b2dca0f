// convfeat: train small CNNs, re-use their layer activations as features for
// random forests / SVMs, and export the analysis artifacts (accuracy sweeps,
// feature importance, class dendrograms, back-projected features).

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "convfeat/errors.hpp"
#include "convfeat/experiment.hpp"
#include "convfeat/parallel.hpp"

namespace {

using namespace convfeat;

// One flag set shared by every subcommand; a flag only overrides the plan
// when it was actually given.
struct Opts {
    std::string plan_file, spec, data_dir, synth, out_dir, precision, linkage;
    std::uint64_t seed = 0;
    int jobs = 0;
    int side = 0;
    int epochs = 0, batch_size = 0, checkpoint_every = 0;
    double learning_rate = 0.0, momentum = 0.0, max_norm = 0.0;
    std::vector<int> layers;
    std::vector<int> epoch_list;
    int feature_layer = -1;
    int trees = 0;
    double svm_c = 0.0;
    int svm_epochs = 0;
    int ensemble = 0, ensemble_epochs = -1;
    int layer = -1, feature = 0, top = 3;

    CLI::App* cmd = nullptr;
    // Safe on subcommands that never registered the option.
    bool given(const std::string& name) const {
        const CLI::Option* opt = cmd->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    }
};

void add_shared(CLI::App* cmd, Opts& o) {
    o.cmd = cmd;
    cmd->add_option("--plan", o.plan_file, "JSON experiment plan; other flags override it");
    cmd->add_option("--spec", o.spec, "network architecture JSON");
    cmd->add_option("--data", o.data_dir, "image directory (one subdirectory per class)");
    cmd->add_option("--synth", o.synth, "synthetic dataset CLASSESxPER_CLASS, e.g. 10x300");
    cmd->add_option("--side", o.side, "image side for --synth without a network spec");
    cmd->add_option("--seed", o.seed, "master seed for every random stream");
    cmd->add_option("--out-dir", o.out_dir, "run output directory (default: run)");
    cmd->add_option("--precision", o.precision, "on-disk scalar width: f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--jobs", o.jobs, "worker threads, 0 = all cores");
}

void add_train_flags(CLI::App* cmd, Opts& o) {
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--batch-size", o.batch_size);
    cmd->add_option("--learning-rate", o.learning_rate);
    cmd->add_option("--momentum", o.momentum);
    cmd->add_option("--max-norm", o.max_norm, "per-filter/row L2 cap");
    cmd->add_option("--checkpoint-every", o.checkpoint_every);
}

void add_classifier_flags(CLI::App* cmd, Opts& o) {
    cmd->add_option("--layers", o.layers, "feature taps to sweep")->delimiter(',');
    cmd->add_option("--trees", o.trees, "forest size");
    cmd->add_option("--svm-c", o.svm_c, "SVM soft-margin weight");
    cmd->add_option("--svm-epochs", o.svm_epochs);
    cmd->add_option("--feature-layer", o.feature_layer,
                    "tap for epoch sweeps and clustering (default 3)");
}

ExperimentPlan build_plan(const Opts& o) {
    ExperimentPlan plan;
    if (!o.plan_file.empty()) {
        plan = load_plan(o.plan_file);
    } else {
        plan.data.synth.side = 0;  // resolved against the network spec
    }
    if (o.given("--spec")) plan.spec_path = o.spec;
    if (o.given("--data")) {
        plan.data.directory = o.data_dir;
    }
    if (o.given("--synth")) {
        int classes = 0, per_class = 0;
        if (std::sscanf(o.synth.c_str(), "%dx%d", &classes, &per_class) != 2 || classes < 1 ||
            per_class < 1) {
            throw BadParam("--synth expects CLASSESxPER_CLASS, got '" + o.synth + "'");
        }
        plan.data.directory.clear();
        plan.data.synth.n_classes = classes;
        plan.data.synth.per_class = per_class;
    }
    if (o.given("--side")) plan.data.synth.side = o.side;
    if (o.given("--seed")) plan.train.seed = o.seed;
    if (o.given("--out-dir")) plan.out_dir = o.out_dir;
    if (o.given("--precision")) plan.train.precision = o.precision == "f32" ? Dtype::f32 : Dtype::f64;

    if (o.given("--epochs")) plan.train.epochs = o.epochs;
    if (o.given("--batch-size")) plan.train.batch_size = o.batch_size;
    if (o.given("--learning-rate")) plan.train.learning_rate = o.learning_rate;
    if (o.given("--momentum")) plan.train.momentum = o.momentum;
    if (o.given("--max-norm")) plan.train.max_norm_cap = o.max_norm;
    if (o.given("--checkpoint-every")) plan.train.checkpoint_every = o.checkpoint_every;

    if (o.given("--layers")) plan.layers = o.layers;
    if (o.given("--epoch-list")) plan.epoch_sweep = o.epoch_list;
    if (o.given("--trees")) plan.forest.n_trees = o.trees;
    if (o.given("--svm-c")) plan.svm_c = o.svm_c;
    if (o.given("--svm-epochs")) plan.svm_epochs = o.svm_epochs;
    if (o.given("--feature-layer")) plan.feature_layer = o.feature_layer;

    if (o.given("--ensemble")) plan.ensemble = o.ensemble;
    if (o.given("--ensemble-epochs")) plan.ensemble_epochs = o.ensemble_epochs;
    if (o.given("--linkage")) {
        if (o.linkage == "single") plan.linkage = Linkage::single;
        else if (o.linkage == "complete") plan.linkage = Linkage::complete;
        else plan.linkage = Linkage::average;
    }

    set_jobs(o.jobs);
    return plan;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CNN feature transfer experiments"};
    app.require_subcommand(1);

    Opts train_o, extract_o, lsweep_o, esweep_o, bag_o, imp_o, cluster_o, deconv_o, synth_o;

    CLI::App* c_train = app.add_subcommand("train", "train a network, writing checkpoints");
    add_shared(c_train, train_o);
    add_train_flags(c_train, train_o);

    CLI::App* c_extract =
        app.add_subcommand("extract", "save feature matrices of one tap (pool + test splits)");
    add_shared(c_extract, extract_o);
    c_extract->add_option("--layer", extract_o.layer, "feature tap (0 = raw pixels)")->required();

    CLI::App* c_lsweep = app.add_subcommand(
        "layer-sweep", "classifier accuracy per feature tap vs the network baseline");
    add_shared(c_lsweep, lsweep_o);
    add_classifier_flags(c_lsweep, lsweep_o);

    CLI::App* c_esweep =
        app.add_subcommand("epoch-sweep", "network vs feature-classifier accuracy per epoch");
    add_shared(c_esweep, esweep_o);
    add_classifier_flags(c_esweep, esweep_o);
    c_esweep->add_option("--epoch-list", esweep_o.epoch_list, "epochs to visit")->delimiter(',');

    CLI::App* c_bag =
        app.add_subcommand("bag", "train an ensemble and average predicted probabilities");
    add_shared(c_bag, bag_o);
    add_train_flags(c_bag, bag_o);
    c_bag->add_option("--ensemble", bag_o.ensemble, "member count (default 8)");
    c_bag->add_option("--ensemble-epochs", bag_o.ensemble_epochs,
                      "per-member epochs (default: training epochs)");

    CLI::App* c_imp =
        app.add_subcommand("importance", "forest feature importance + significance per tap");
    add_shared(c_imp, imp_o);
    add_classifier_flags(c_imp, imp_o);

    CLI::App* c_cluster =
        app.add_subcommand("cluster", "class centroid dendrogram on one tap's features");
    add_shared(c_cluster, cluster_o);
    add_classifier_flags(c_cluster, cluster_o);
    c_cluster->add_option("--linkage", cluster_o.linkage, "single | complete | average")
        ->check(CLI::IsMember({"single", "complete", "average"}));

    CLI::App* c_deconv =
        app.add_subcommand("deconv", "back-project a feature for its top activating samples");
    add_shared(c_deconv, deconv_o);
    c_deconv->add_option("--layer", deconv_o.layer, "feature tap (>= 1)");
    c_deconv->add_option("--feature", deconv_o.feature, "channel / unit index")->required();
    c_deconv->add_option("--top", deconv_o.top, "how many samples to project (default 3)");

    CLI::App* c_synth = app.add_subcommand("synth", "render the synthetic dataset to disk");
    add_shared(c_synth, synth_o);

    c_train->callback([&] { run_train(build_plan(train_o)); });
    c_extract->callback([&] {
        const ExperimentPlan plan = build_plan(extract_o);
        run_extract(plan, make_context(plan), extract_o.layer);
    });
    c_lsweep->callback([&] {
        const ExperimentPlan plan = build_plan(lsweep_o);
        run_layer_sweep(plan, make_context(plan));
    });
    c_esweep->callback([&] {
        const ExperimentPlan plan = build_plan(esweep_o);
        run_epoch_sweep(plan, make_context(plan));
    });
    c_bag->callback([&] { run_bag(build_plan(bag_o)); });
    c_imp->callback([&] {
        const ExperimentPlan plan = build_plan(imp_o);
        run_importance(plan, make_context(plan));
    });
    c_cluster->callback([&] {
        const ExperimentPlan plan = build_plan(cluster_o);
        run_cluster(plan, make_context(plan));
    });
    c_deconv->callback([&] {
        const ExperimentPlan plan = build_plan(deconv_o);
        const int layer = deconv_o.layer >= 0 ? deconv_o.layer : plan.feature_layer;
        run_deconv(plan, make_context(plan), layer, deconv_o.feature, deconv_o.top);
    });
    c_synth->callback([&] {
        ExperimentPlan plan = build_plan(synth_o);
        if (plan.data.synth.side < 1 && plan.spec_path.empty()) plan.data.synth.side = 28;
        run_synth_export(plan);
    });

    try {
        CLI11_PARSE(app, argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
