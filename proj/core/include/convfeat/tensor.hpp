#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "convfeat/errors.hpp"

namespace convfeat {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense N-dimensional array of doubles.
//
// Layout convention for the whole library: row-major, last axis fastest.
// The flat offset of index (i0, i1, ..., ik) is
//   ((i0 * e1 + i1) * e2 + i2) * ... + ik
// where e1..ek are the trailing extents. Every module (image pixels,
// feature maps, weights, feature matrices) uses this one convention.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor full(Shape shape, double value);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) {
        return data_[i * shape_[1] + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        return data_[i * shape_[1] + j];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

// Same data, new shape. Throws ShapeMismatch if the element counts differ.
Tensor reshape(const Tensor& t, Shape new_shape);

// Standard matrix product of two rank-2 tensors. Throws ShapeMismatch on
// rank or inner-dimension disagreement.
Tensor matmul(const Tensor& a, const Tensor& b);

// a (n,k) x b(m,k)^T -> (n,m); saves materializing transposes in the hot
// paths (fully connected forward, convolution weight gradients).
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// a (k,n)^T x b (k,m) -> (n,m).
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// sqrt(sum((a-b)^2)). Throws ShapeMismatch on length disagreement.
double euclidean_distance(std::span<const double> a, std::span<const double> b);
double euclidean_distance(const Tensor& a, const Tensor& b);

// Throws NonFiniteActivation naming `context` if any element is NaN/Inf.
void require_finite(const Tensor& t, const char* context);

}  // namespace convfeat
