#include "convfeat/svm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "convfeat/errors.hpp"
#include "convfeat/parallel.hpp"
#include "convfeat/rng.hpp"
#include "container.hpp"

namespace convfeat {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double objective_value(const std::vector<double>& w, double b, double c_reg, const Tensor& rows,
                       const std::vector<int>& y) {
    const std::size_t n = rows.extent(0), d = rows.extent(1);
    double hinge = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = y[i] * (dot(w.data(), rows.data() + i * d, d) + b);
        hinge += std::max(0.0, 1.0 - m);
    }
    return 0.5 * dot(w.data(), w.data(), w.size()) + c_reg * hinge;
}

}  // namespace

double svm_objective(const LinearSvmModel& model, const Tensor& rows,
                     const std::vector<int>& y) {
    return objective_value(model.w, model.b, model.c_reg, rows, y);
}

LinearSvmModel svm_train_binary(const Tensor& rows, const std::vector<int>& y, double c_reg,
                                int epochs, std::uint64_t seed) {
    if (rows.rank() != 2 || rows.extent(0) != y.size()) {
        throw ShapeMismatch("svm rows/labels disagree");
    }
    if (c_reg <= 0.0 || epochs < 1) throw BadParam("svm c_reg/epochs out of range");
    const std::size_t n = rows.extent(0), d = rows.extent(1);
    bool pos = false, neg = false;
    for (int v : y) {
        if (v == 1) pos = true;
        else if (v == -1) neg = true;
        else throw BadParam("binary svm labels must be +1/-1");
    }
    if (!pos || !neg) throw SingleClassData("binary svm needs both labels present");

    const double lambda = 1.0 / (c_reg * static_cast<double>(n));

    // w is kept as scale*v so the per-step shrink w *= (1 - 1/t) is O(1).
    std::vector<double> v(d, 0.0);
    double scale = 1.0;
    double b = 0.0;

    LinearSvmModel best;
    best.w.assign(d, 0.0);
    best.b = 0.0;
    best.c_reg = c_reg;
    double best_obj = objective_value(best.w, best.b, c_reg, rows, y);
    best.objective_by_epoch.push_back(best_obj);

    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> w_now(d);

    std::uint64_t t = 0;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t idx : order) {
            ++t;
            const double* x = rows.data() + idx * d;
            const double margin = y[idx] * (scale * dot(v.data(), x, d) + b);
            if (t == 1) {
                // (1 - 1/1) annihilates w; restart the lazy representation.
                std::fill(v.begin(), v.end(), 0.0);
                scale = 1.0;
            } else {
                scale *= 1.0 - 1.0 / static_cast<double>(t);
            }
            if (margin < 1.0) {
                const double eta = 1.0 / (lambda * static_cast<double>(t));
                const double coef = eta * y[idx] / scale;
                for (std::size_t j = 0; j < d; ++j) v[j] += coef * x[j];
                b += y[idx] / static_cast<double>(t);
            }
        }
        for (std::size_t j = 0; j < d; ++j) w_now[j] = scale * v[j];
        const double obj = objective_value(w_now, b, c_reg, rows, y);
        if (obj < best_obj) {
            best_obj = obj;
            best.w = w_now;
            best.b = b;
        }
        best.objective_by_epoch.push_back(best_obj);
    }
    return best;
}

MulticlassSvm svm_train_multiclass(const FeatureMatrix& m, SvmMode mode, double c_reg,
                                   int epochs, std::uint64_t seed) {
    const int c = m.n_classes;
    if (c < 2) throw BadParam("multiclass svm needs at least 2 classes");
    std::vector<std::size_t> class_count(static_cast<std::size_t>(c), 0);
    for (int label : m.labels) {
        if (label < 0 || label >= c) {
            throw LabelOutOfRange("label " + std::to_string(label) + " outside class range");
        }
        ++class_count[static_cast<std::size_t>(label)];
    }
    for (int k = 0; k < c; ++k) {
        if (class_count[static_cast<std::size_t>(k)] == 0) {
            throw EmptyClassInSplit("class " + std::to_string(k) +
                                    " has no samples in the feature matrix");
        }
    }

    MulticlassSvm multi;
    multi.mode = mode;
    multi.n_classes = c;
    multi.n_features = static_cast<int>(m.values.extent(1));
    Rng root(seed);

    if (mode == SvmMode::one_vs_rest) {
        multi.models.resize(static_cast<std::size_t>(c));
        parallel_for(static_cast<std::size_t>(c), [&](std::size_t k) {
            std::vector<int> y(m.labels.size());
            for (std::size_t i = 0; i < m.labels.size(); ++i) {
                y[i] = m.labels[i] == static_cast<int>(k) ? 1 : -1;
            }
            LinearSvmModel model =
                svm_train_binary(m.values, y, c_reg, epochs, root.fork(k).state());
            model.positive_id = static_cast<int>(k);
            model.negative_id = -1;
            multi.models[k] = std::move(model);
        });
        return multi;
    }

    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < c; ++i) {
        for (int j = i + 1; j < c; ++j) pairs.emplace_back(i, j);
    }
    multi.models.resize(pairs.size());
    const std::size_t d = m.values.extent(1);
    parallel_for(pairs.size(), [&](std::size_t k) {
        const auto [i, j] = pairs[k];
        std::vector<std::size_t> keep;
        for (std::size_t r = 0; r < m.labels.size(); ++r) {
            if (m.labels[r] == i || m.labels[r] == j) keep.push_back(r);
        }
        Tensor sub({keep.size(), d});
        std::vector<int> y(keep.size());
        for (std::size_t r = 0; r < keep.size(); ++r) {
            std::copy(m.values.data() + keep[r] * d, m.values.data() + (keep[r] + 1) * d,
                      sub.data() + r * d);
            y[r] = m.labels[keep[r]] == i ? 1 : -1;
        }
        LinearSvmModel model = svm_train_binary(sub, y, c_reg, epochs, root.fork(k).state());
        model.positive_id = i;
        model.negative_id = j;
        multi.models[k] = std::move(model);
    });
    return multi;
}

std::vector<int> svm_predict(const MulticlassSvm& model, const Tensor& rows) {
    if (rows.rank() != 2 || rows.extent(1) != static_cast<std::size_t>(model.n_features)) {
        throw ShapeMismatch("svm_predict rows " + shape_string(rows.shape()) + " vs " +
                            std::to_string(model.n_features) + " features");
    }
    const std::size_t nrows = rows.extent(0), d = rows.extent(1);
    const std::size_t c = static_cast<std::size_t>(model.n_classes);
    std::vector<int> out(nrows, 0);

    for (std::size_t r = 0; r < nrows; ++r) {
        const double* x = rows.data() + r * d;
        if (model.mode == SvmMode::one_vs_rest) {
            std::size_t best = 0;
            double best_v = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < model.models.size(); ++k) {
                const double v = dot(model.models[k].w.data(), x, d) + model.models[k].b;
                if (v > best_v) {
                    best_v = v;
                    best = k;
                }
            }
            out[r] = model.models[best].positive_id;
        } else {
            std::vector<int> votes(c, 0);
            std::vector<double> margin_sum(c, 0.0);
            for (const LinearSvmModel& mdl : model.models) {
                const double v = dot(mdl.w.data(), x, d) + mdl.b;
                ++votes[static_cast<std::size_t>(v >= 0.0 ? mdl.positive_id : mdl.negative_id)];
                margin_sum[static_cast<std::size_t>(mdl.positive_id)] += v;
                margin_sum[static_cast<std::size_t>(mdl.negative_id)] -= v;
            }
            std::size_t best = 0;
            for (std::size_t k = 1; k < c; ++k) {
                if (votes[k] > votes[best] ||
                    (votes[k] == votes[best] && margin_sum[k] > margin_sum[best])) {
                    best = k;
                }
            }
            out[r] = static_cast<int>(best);
        }
    }
    return out;
}

void save_svm(const MulticlassSvm& model, const std::filesystem::path& path) {
    nlohmann::json header;
    header["kind"] = "svm";
    header["mode"] = model.mode == SvmMode::one_vs_rest ? "one_vs_rest" : "one_vs_one";
    header["n_classes"] = model.n_classes;
    header["n_features"] = model.n_features;
    auto jm = nlohmann::json::array();
    for (const LinearSvmModel& m : model.models) {
        jm.push_back({{"positive", m.positive_id},
                      {"negative", m.negative_id},
                      {"b", m.b},
                      {"c_reg", m.c_reg},
                      {"objective_by_epoch", m.objective_by_epoch}});
    }
    header["models"] = std::move(jm);

    std::vector<Tensor> weights;
    weights.reserve(model.models.size());
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (std::size_t k = 0; k < model.models.size(); ++k) {
        weights.emplace_back(Shape{model.models[k].w.size()}, model.models[k].w);
        char name[32];
        std::snprintf(name, sizeof(name), "model%05zu.w", k);
        tensors.emplace_back(name, nullptr);
    }
    for (std::size_t k = 0; k < weights.size(); ++k) tensors[k].second = &weights[k];
    detail::save_container(path, std::move(header), tensors, Dtype::f64);
}

MulticlassSvm load_svm(const std::filesystem::path& path) {
    detail::Container c = detail::load_container(path);
    if (c.header.value("kind", std::string()) != "svm") {
        throw FormatError("not an svm file: " + path.string());
    }
    MulticlassSvm model;
    try {
        model.mode = c.header.at("mode").get<std::string>() == "one_vs_one"
                         ? SvmMode::one_vs_one
                         : SvmMode::one_vs_rest;
        model.n_classes = c.header.at("n_classes").get<int>();
        model.n_features = c.header.at("n_features").get<int>();
        std::size_t k = 0;
        for (const auto& jm : c.header.at("models")) {
            LinearSvmModel m;
            m.positive_id = jm.at("positive").get<int>();
            m.negative_id = jm.at("negative").get<int>();
            m.b = jm.at("b").get<double>();
            m.c_reg = jm.at("c_reg").get<double>();
            m.objective_by_epoch = jm.at("objective_by_epoch").get<std::vector<double>>();
            char name[32];
            std::snprintf(name, sizeof(name), "model%05zu.w", k++);
            auto it = c.tensors.find(name);
            if (it == c.tensors.end()) {
                throw FormatError(std::string("svm file missing tensor ") + name);
            }
            m.w.assign(it->second.data(), it->second.data() + it->second.size());
            model.models.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("svm header field error: " + std::string(e.what()));
    }
    return model;
}

}  // namespace convfeat
