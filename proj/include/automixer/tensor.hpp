#pragma once

// Dense 64-bit tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage. Operations that touch a
// tensor with requires_grad() append an adjoint closure to the calling
// thread's tape; backward() replays the tape in reverse and then clears it.
// One training step therefore owns one tape on one thread.

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace automixer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct TensorData;
struct TensorAccess;
}  // namespace detail

class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor from_values(std::initializer_list<double> values);

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    /// Writable view of the storage; only meaningful for leaves (parameters, inputs).
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t flat_index) const { return values()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    /// Copy of the values with no gradient tracking.
    Tensor detach() const;
    /// Deep copy that keeps the requires_grad flag but not the gradient.
    Tensor clone() const;
    bool shares_storage_with(const Tensor& other) const { return data_ == other.data_; }

private:
    friend struct detail::TensorAccess;
    std::shared_ptr<detail::TensorData> data_;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};
using ParameterList = std::vector<NamedTensor>;

std::size_t parameter_count(const ParameterList& params);

// ---- graph control --------------------------------------------------------

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();
/// Number of recorded nodes on this thread's tape.
std::size_t graph_size();
void clear_graph();

/// Populates grad on every requires_grad ancestor of a scalar loss, then clears the tape.
void backward(const Tensor& loss);

// ---- linear algebra -------------------------------------------------------

/// a: [..., k] (leading axes folded into rows), b: [k, p] -> [..., p].
Tensor matmul(const Tensor& a, const Tensor& b);
/// matmul(x, weight) + bias
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// ---- elementwise ----------------------------------------------------------
//
// Binary ops accept equal shapes, or b whose shape is a proper suffix of a's
// shape (b broadcast over a's leading axes).

enum class ElementwiseKind { add, sub, mul, sigmoid, tanh, relu, gelu, scale };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& a);

/// Dispatcher over the kinds above; `b` is required for binary kinds and
/// `factor` is used by `scale`.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor* b = nullptr,
                   double factor = 1.0);

// ---- layout ---------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
/// out.shape[i] = a.shape[axes[i]]
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Stacks equally shaped tensors along a new axis inserted at `axis`.
Tensor stack(std::span<const Tensor> parts, std::size_t axis);

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_axis(const Tensor& a, std::size_t axis);

// ---- layers and losses ----------------------------------------------------

inline constexpr double kNormEps = 1e-5;

/// Standardizes the last axis (biased variance, eps in the denominator), then applies gamma/beta.
Tensor normalize_layer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = kNormEps);

/// Inverted dropout. Identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);

Tensor loss_mse(const Tensor& pred, const Tensor& target);
/// Mean binary cross-entropy on logits; labels must be exactly 0 or 1.
Tensor loss_bce_logits(const Tensor& logits, const Tensor& labels);

}  // namespace automixer
