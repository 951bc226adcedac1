#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace hsrnn {

// Dense row-major float64 tensor. Invariant: data().size() equals the
// product of the extents at all times. Values are immutable from the
// outside except through the mutable accessors, and every free-function
// operation below is a pure function of its inputs with a fixed loop
// order, so identical inputs give bit-identical outputs.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor full(std::vector<std::size_t> shape, double value);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Row-major indexed access; rank is the caller's responsibility.
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double value);

    std::string shape_string() const;

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Throws DimensionError naming both shapes unless they match.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

// --- linear algebra ---------------------------------------------------

// Standard matrix product, fixed i-k-j loop order.
Tensor matmul(const Tensor& a, const Tensor& b);

// A (m x n) times x (n) -> (m).
Tensor matvec(const Tensor& a, const Tensor& x);

// A^T (n x m)... i.e. A (m x n), y (m) -> A^T y (n).
Tensor matvec_transposed(const Tensor& a, const Tensor& y);

// dest (m x n) += outer(u (m), v (n)).
void add_outer(Tensor& dest, const Tensor& u, const Tensor& v);

// --- elementwise -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& dest, const Tensor& src);
void scale_add_inplace(Tensor& dest, const Tensor& src, double s);  // dest += s * src

// --- nonlinearities ----------------------------------------------------

double sigmoid_scalar(double x);

Tensor sigmoid(const Tensor& x);
Tensor tanh_act(const Tensor& x);

// Softmax over a rank-1 tensor with max-subtraction; requires size >= 2.
Tensor softmax(const Tensor& logits);

enum class Activation { identity, sigmoid, tanh, relu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

double apply_activation_scalar(double x, Activation a);
Tensor apply_activation(const Tensor& x, Activation a);

// d(act)/d(pre-activation) recovered from the activation output. Works for
// all four activations (relu output 0 maps to slope 0).
double activation_grad_from_output(double y, Activation a);

}  // namespace hsrnn
