#include "convfeat/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace convfeat {

std::size_t shape_volume(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(shape_volume(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_volume(shape_) != data_.size()) {
        throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = value;
    return t;
}

Tensor reshape(const Tensor& t, Shape new_shape) {
    if (shape_volume(new_shape) != t.size()) {
        throw ShapeMismatch("cannot reshape " + shape_string(t.shape()) + " to " +
                            shape_string(new_shape));
    }
    return Tensor(std::move(new_shape), std::vector<double>(t.data(), t.data() + t.size()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeMismatch("matmul expects rank-2 tensors, got " +
                            shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1);
    const std::size_t k2 = b.extent(0), n = b.extent(1);
    if (k != k2) {
        throw ShapeMismatch("matmul inner dimensions disagree: " +
                            shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    // i-k-j order: the inner loop streams both b and c rows.
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        const double* arow = pa + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            const double* brow = pb + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    require_finite(c, "matmul");
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1)) {
        throw ShapeMismatch("matmul_nt shape disagreement: " + shape_string(a.shape()) +
                            " x " + shape_string(b.shape()) + "^T");
    }
    const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(0);
    Tensor c({n, m});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    // Row-by-row dot products; both operands stream contiguously.
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = pa + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = pb + j * k;
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += arow[l] * brow[l];
            pc[i * m + j] = s;
        }
    }
    require_finite(c, "matmul_nt");
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0)) {
        throw ShapeMismatch("matmul_tn shape disagreement: " + shape_string(a.shape()) +
                            "^T x " + shape_string(b.shape()));
    }
    const std::size_t k = a.extent(0), n = a.extent(1), m = b.extent(1);
    Tensor c({n, m});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t l = 0; l < k; ++l) {
        const double* arow = pa + l * n;
        const double* brow = pb + l * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double av = arow[i];
            double* crow = pc + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
    require_finite(c, "matmul_tn");
    return c;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeMismatch("euclidean_distance length mismatch: " +
                            std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double euclidean_distance(const Tensor& a, const Tensor& b) {
    return euclidean_distance(a.values(), b.values());
}

void require_finite(const Tensor& t, const char* context) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i])) {
            throw NonFiniteActivation(std::string(context) + ": non-finite value at index " +
                                      std::to_string(i));
        }
    }
}

}  // namespace convfeat
