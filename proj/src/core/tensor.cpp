#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hsrnn {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw ArgumentError("tensor extents must be positive, got " + shape_string(shape));
        n *= e;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_product(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + hsrnn::shape_string(shape_));
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = rows.begin()->size();
    std::vector<double> data;
    data.reserve(m * n);
    for (const auto& row : rows) {
        if (row.size() != n) throw DimensionError("ragged matrix initializer");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({m, n}, std::move(data));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ArgumentError("axis " + std::to_string(axis) + " out of range for rank " +
                            std::to_string(shape_.size()));
    }
    return shape_[axis];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_string() const { return hsrnn::shape_string(shape_); }

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ')';
    return out.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() +
                             " vs " + b.shape_string());
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul expects rank-2 operands, got " + a.shape_string() +
                             " and " + b.shape_string());
    }
    const std::size_t m = a.extent(0), k = a.extent(1);
    if (b.extent(0) != k) {
        throw DimensionError("matmul: inner extents differ, " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    const std::size_t n = b.extent(1);
    Tensor c({m, n});
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ap[i * k + p];
            const double* brow = bp + p * n;
            double* crow = cp + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
    if (a.rank() != 2 || x.rank() != 1 || a.extent(1) != x.extent(0)) {
        throw DimensionError("matvec: shape mismatch " + a.shape_string() + " vs " +
                             x.shape_string());
    }
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor y({m});
    const double* ap = a.data();
    const double* xp = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* row = ap + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * xp[j];
        y[i] = acc;
    }
    return y;
}

Tensor matvec_transposed(const Tensor& a, const Tensor& y) {
    if (a.rank() != 2 || y.rank() != 1 || a.extent(0) != y.extent(0)) {
        throw DimensionError("matvec_transposed: shape mismatch " + a.shape_string() +
                             " vs " + y.shape_string());
    }
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor x({n});
    const double* ap = a.data();
    double* xp = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double yi = y[i];
        const double* row = ap + i * n;
        for (std::size_t j = 0; j < n; ++j) xp[j] += yi * row[j];
    }
    return x;
}

void add_outer(Tensor& dest, const Tensor& u, const Tensor& v) {
    if (dest.rank() != 2 || dest.extent(0) != u.extent(0) || dest.extent(1) != v.extent(0)) {
        throw DimensionError("add_outer: shape mismatch " + dest.shape_string() + " vs " +
                             u.shape_string() + " outer " + v.shape_string());
    }
    const std::size_t m = u.extent(0), n = v.extent(0);
    double* dp = dest.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double ui = u[i];
        double* row = dp + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += ui * v[j];
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= s;
    return c;
}

void add_inplace(Tensor& dest, const Tensor& src) {
    require_same_shape(dest, src, "add_inplace");
    for (std::size_t i = 0; i < dest.size(); ++i) dest[i] += src[i];
}

void scale_add_inplace(Tensor& dest, const Tensor& src, double s) {
    require_same_shape(dest, src, "scale_add_inplace");
    for (std::size_t i = 0; i < dest.size(); ++i) dest[i] += s * src[i];
}

double sigmoid_scalar(double x) {
    // Split on sign so exp never overflows.
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid_scalar(y[i]);
    return y;
}

Tensor tanh_act(const Tensor& x) {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
    return y;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.size() < 2) {
        throw ArgumentError("softmax expects a rank-1 tensor with at least 2 entries, got " +
                            logits.shape_string());
    }
    double max = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) max = std::max(max, logits[i]);
    Tensor p = logits;
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(p[i] - max);
        sum += p[i];
    }
    for (std::size_t i = 0; i < p.size(); ++i) p[i] /= sum;
    return p;
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "?";
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    throw ArgumentError("unknown activation '" + name +
                        "' (expected identity, sigmoid, tanh or relu)");
}

double apply_activation_scalar(double x, Activation a) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::sigmoid: return sigmoid_scalar(x);
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
    }
    return x;
}

Tensor apply_activation(const Tensor& x, Activation a) {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = apply_activation_scalar(y[i], a);
    return y;
}

double activation_grad_from_output(double y, Activation a) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::tanh: return 1.0 - y * y;
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

}  // namespace hsrnn
