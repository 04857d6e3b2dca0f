#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "convfeat/features.hpp"
#include "convfeat/tensor.hpp"

namespace convfeat {

// Linear decision function w.x + b for the soft-margin objective
//   J(w,b) = 0.5*||w||^2 + c_reg * sum_i max(0, 1 - y_i*(w.x_i + b)).
struct LinearSvmModel {
    std::vector<double> w;
    double b = 0.0;
    double c_reg = 1.0;
    int positive_id = 1;
    int negative_id = -1;
    // Best objective value seen up to each epoch checkpoint (index 0 = the
    // zero model); non-increasing by construction.
    std::vector<double> objective_by_epoch;
};

enum class SvmMode { one_vs_rest, one_vs_one };

struct MulticlassSvm {
    SvmMode mode = SvmMode::one_vs_rest;
    int n_classes = 0;
    int n_features = 0;
    std::vector<LinearSvmModel> models;  // OvR: class order; OvO: (i,j), i<j, row-major
};

// Epoch-based subgradient descent with the 1/(lambda*t) step schedule,
// lambda = 1/(c_reg*N); the bias moves by 1/t on violations and is not
// regularized. After every epoch the primal objective is evaluated and the
// best iterate so far is kept — the returned model is the argmin over
// checkpoints, so its objective series never increases. `y` entries must be
// +1/-1, both present (SingleClassData otherwise).
LinearSvmModel svm_train_binary(const Tensor& rows, const std::vector<int>& y, double c_reg,
                                int epochs, std::uint64_t seed);

// J(w,b) on (+1/-1)-labelled rows; what svm_train_binary minimizes.
double svm_objective(const LinearSvmModel& model, const Tensor& rows,
                     const std::vector<int>& y);

// OvR trains C binary problems (class i against the rest), OvO one per
// unordered pair on the pair's subset. Every class id in [0, n_classes)
// must occur in the matrix (EmptyClassInSplit).
MulticlassSvm svm_train_multiclass(const FeatureMatrix& m, SvmMode mode, double c_reg,
                                   int epochs, std::uint64_t seed);

// OvR: argmax decision value. OvO: majority vote of pairwise winners (a
// zero decision counts for the positive class); vote ties go to the class
// with the highest summed signed margin, then the lowest id.
std::vector<int> svm_predict(const MulticlassSvm& model, const Tensor& rows);

void save_svm(const MulticlassSvm& model, const std::filesystem::path& path);
MulticlassSvm load_svm(const std::filesystem::path& path);

}  // namespace convfeat
