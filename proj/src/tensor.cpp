#include "automixer/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <utility>

#include "automixer/errors.hpp"

namespace automixer {

namespace detail {

struct TensorData {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until the first adjoint lands
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

using DataPtr = std::shared_ptr<TensorData>;

struct TensorAccess {
    static const DataPtr& data(const Tensor& t) { return t.data_; }
    static Tensor wrap(DataPtr p) {
        Tensor t;
        t.data_ = std::move(p);
        return t;
    }
};

struct Tape {
    std::vector<std::function<void()>> nodes;
    bool enabled = true;
};

Tape& tape() {
    thread_local Tape instance;
    return instance;
}

}  // namespace detail

using detail::DataPtr;
using detail::TensorAccess;
using detail::TensorData;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

const DataPtr& raw(const Tensor& t) {
    if (!t.defined()) throw UsageError("operation on an undefined tensor");
    return TensorAccess::data(t);
}

bool tracks(const Tensor& t) { return detail::tape().enabled && raw(t)->requires_grad; }

DataPtr make_data(Shape shape, std::vector<double> values) {
    auto d = std::make_shared<TensorData>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    return d;
}

DataPtr make_data(Shape shape) {
    const auto n = shape_numel(shape);
    return make_data(std::move(shape), std::vector<double>(n, 0.0));
}

void record(const DataPtr& out, std::function<void()> fn) {
    out->requires_grad = true;
    detail::tape().nodes.push_back(std::move(fn));
}

// b broadcasts over a when b.shape is a proper suffix of a.shape.
bool is_suffix(const Shape& a, const Shape& b) {
    if (b.size() >= a.size()) return false;
    return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

enum class BinaryOp { add, sub, mul };

template <BinaryOp Op>
Tensor binary_impl(const Tensor& a, const Tensor& b) {
    const auto& da = raw(a);
    const auto& db = raw(b);
    if (da->shape != db->shape && !is_suffix(da->shape, db->shape)) {
        throw DimensionError("cannot broadcast " + shape_to_string(db->shape) + " onto " +
                             shape_to_string(da->shape));
    }
    const std::size_t n = da->values.size();
    const std::size_t period = db->values.size();
    auto out = make_data(da->shape);
    double* ov = out->values.data();
    const double* av = da->values.data();
    const double* bv = db->values.data();
    for (std::size_t base = 0; base < n; base += period) {
        for (std::size_t j = 0; j < period; ++j) {
            const double x = av[base + j];
            const double y = bv[j];
            ov[base + j] = Op == BinaryOp::add ? x + y : Op == BinaryOp::sub ? x - y : x * y;
        }
    }
    if (tracks(a) || tracks(b)) {
        record(out, [da, db, out, n, period] {
            if (out->grad.empty()) return;
            const double* g = out->grad.data();
            if (da->requires_grad) {
                da->ensure_grad();
                double* ga = da->grad.data();
                const double* y = db->values.data();
                for (std::size_t base = 0; base < n; base += period) {
                    for (std::size_t j = 0; j < period; ++j) {
                        ga[base + j] += Op == BinaryOp::mul ? g[base + j] * y[j] : g[base + j];
                    }
                }
            }
            if (db->requires_grad) {
                db->ensure_grad();
                double* gb = db->grad.data();
                const double* x = da->values.data();
                for (std::size_t base = 0; base < n; base += period) {
                    for (std::size_t j = 0; j < period; ++j) {
                        gb[j] += Op == BinaryOp::add   ? g[base + j]
                                 : Op == BinaryOp::sub ? -g[base + j]
                                                       : g[base + j] * x[base + j];
                    }
                }
            }
        });
    }
    return TensorAccess::wrap(out);
}

Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b) {
    switch (op) {
        case BinaryOp::add: return binary_impl<BinaryOp::add>(a, b);
        case BinaryOp::sub: return binary_impl<BinaryOp::sub>(a, b);
        case BinaryOp::mul: return binary_impl<BinaryOp::mul>(a, b);
    }
    throw UsageError("unknown binary op");
}

// Pointwise map with derivative expressed through (input, output).
template <class Forward, class Derivative>
Tensor unary(const Tensor& a, Forward fwd, Derivative deriv) {
    const auto& da = raw(a);
    const std::size_t n = da->values.size();
    auto out = make_data(da->shape);
    for (std::size_t i = 0; i < n; ++i) out->values[i] = fwd(da->values[i]);
    if (tracks(a)) {
        record(out, [da, out, n, deriv] {
            if (out->grad.empty()) return;
            da->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                da->grad[i] += out->grad[i] * deriv(da->values[i], out->values[i]);
            }
        });
    }
    return TensorAccess::wrap(out);
}

double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::vector<std::size_t> strides_of(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

std::size_t checked_axis(const Tensor& a, std::size_t axis, const char* op) {
    if (axis >= a.rank()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                             " out of range for " + shape_to_string(a.shape()));
    }
    return axis;
}

std::size_t product(const Shape& s, std::size_t begin, std::size_t end) {
    std::size_t p = 1;
    for (std::size_t i = begin; i < end; ++i) p *= s[i];
    return p;
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto extent : shape) {
        if (extent == 0) throw DimensionError("zero extent in shape " + shape_to_string(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_to_string(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
    }
    data_ = make_data(std::move(shape), std::move(values));
    data_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> v;
    const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimensionError("ragged rows");
        v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(v));
}

Tensor Tensor::from_values(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

const Shape& Tensor::shape() const { return raw(*this)->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw DimensionError("axis out of range for " + shape_to_string(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return raw(*this)->values.size(); }

std::span<const double> Tensor::values() const { return raw(*this)->values; }

std::span<double> Tensor::mutable_values() { return raw(*this)->values; }

double Tensor::item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_to_string(shape()));
    return values()[0];
}

bool Tensor::requires_grad() const { return raw(*this)->requires_grad; }

void Tensor::set_requires_grad(bool flag) { raw(*this)->requires_grad = flag; }

bool Tensor::has_grad() const { return !raw(*this)->grad.empty(); }

std::span<const double> Tensor::grad() const { return raw(*this)->grad; }

std::span<double> Tensor::mutable_grad() {
    raw(*this)->ensure_grad();
    return raw(*this)->grad;
}

void Tensor::zero_grad() {
    auto& g = raw(*this)->grad;
    g.clear();
    g.shrink_to_fit();
}

Tensor Tensor::detach() const { return TensorAccess::wrap(make_data(shape(), raw(*this)->values)); }

Tensor Tensor::clone() const {
    auto t = detach();
    t.set_requires_grad(requires_grad());
    return t;
}

std::size_t parameter_count(const ParameterList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

// ---- graph control --------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(detail::tape().enabled) { detail::tape().enabled = false; }
NoGradGuard::~NoGradGuard() { detail::tape().enabled = previous_; }

bool grad_enabled() { return detail::tape().enabled; }
std::size_t graph_size() { return detail::tape().nodes.size(); }
void clear_graph() { detail::tape().nodes.clear(); }

void backward(const Tensor& loss) {
    const auto& d = raw(loss);
    if (d->values.size() != 1) {
        throw UsageError("backward() needs a scalar loss, got " + shape_to_string(d->shape));
    }
    if (!d->requires_grad) throw UsageError("backward() on a tensor outside any recorded graph");
    d->ensure_grad();
    d->grad[0] += 1.0;
    auto& nodes = detail::tape().nodes;
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) (*it)();
    nodes.clear();
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& da = raw(a);
    const auto& db = raw(b);
    if (db->shape.size() != 2 || da->shape.empty() || da->shape.back() != db->shape[0]) {
        throw DimensionError("matmul: incompatible shapes " + shape_to_string(da->shape) + " and " +
                             shape_to_string(db->shape));
    }
    const auto k = db->shape[0];
    const auto p = db->shape[1];
    const auto m = da->values.size() / k;
    Shape out_shape = da->shape;
    out_shape.back() = p;
    auto out = make_data(std::move(out_shape));
    MutMap(out->values.data(), m, p).noalias() =
        ConstMap(da->values.data(), m, k) * ConstMap(db->values.data(), k, p);
    if (tracks(a) || tracks(b)) {
        record(out, [da, db, out, m, k, p] {
            if (out->grad.empty()) return;
            ConstMap g(out->grad.data(), m, p);
            if (da->requires_grad) {
                da->ensure_grad();
                MutMap(da->grad.data(), m, k).noalias() += g * ConstMap(db->values.data(), k, p).transpose();
            }
            if (db->requires_grad) {
                db->ensure_grad();
                MutMap(db->grad.data(), k, p).noalias() += ConstMap(da->values.data(), m, k).transpose() * g;
            }
        });
    }
    return TensorAccess::wrap(out);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return add(matmul(x, weight), bias);
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryOp::mul, a, b); }

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double x) { return factor * x; },
                 [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
    return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, logistic, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; },
                 [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
    const auto& da = raw(a);
    const std::size_t n = da->values.size();
    auto out = make_data(da->shape);
    const bool track = tracks(a);
    std::vector<double> slope(track ? n : 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = da->values[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        out->values[i] = x * cdf;
        if (track) slope[i] = cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    }
    if (track) {
        record(out, [da, out, n, slope = std::move(slope)] {
            if (out->grad.empty()) return;
            da->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) da->grad[i] += out->grad[i] * slope[i];
        });
    }
    return TensorAccess::wrap(out);
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor* b, double factor) {
    auto need_b = [&]() -> const Tensor& {
        if (b == nullptr) throw UsageError("binary elementwise op without second operand");
        return *b;
    };
    switch (kind) {
        case ElementwiseKind::add: return add(a, need_b());
        case ElementwiseKind::sub: return sub(a, need_b());
        case ElementwiseKind::mul: return mul(a, need_b());
        case ElementwiseKind::sigmoid: return sigmoid(a);
        case ElementwiseKind::tanh: return tanh(a);
        case ElementwiseKind::relu: return relu(a);
        case ElementwiseKind::gelu: return gelu(a);
        case ElementwiseKind::scale: return scale(a, factor);
    }
    throw UsageError("unknown elementwise kind");
}

// ---- layout ---------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    const auto& da = raw(a);
    if (shape_numel(shape) != da->values.size()) {
        throw DimensionError("reshape: cannot view " + shape_to_string(da->shape) + " as " +
                             shape_to_string(shape));
    }
    auto out = make_data(std::move(shape), da->values);
    if (tracks(a)) {
        record(out, [da, out] {
            if (out->grad.empty()) return;
            da->ensure_grad();
            for (std::size_t i = 0; i < out->grad.size(); ++i) da->grad[i] += out->grad[i];
        });
    }
    return TensorAccess::wrap(out);
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
    const auto& da = raw(a);
    const auto r = da->shape.size();
    std::vector<bool> seen(r, false);
    if (axes.size() != r) throw DimensionError("permute: axis list does not match rank");
    for (auto ax : axes) {
        if (ax >= r || seen[ax]) throw DimensionError("permute: invalid axis permutation");
        seen[ax] = true;
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = da->shape[axes[i]];
    const auto in_strides = strides_of(da->shape);
    // source offset for every destination index, walked with an odometer
    const std::size_t n = da->values.size();
    std::vector<std::size_t> src(n);
    std::vector<std::size_t> idx(r, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        src[flat] = offset;
        for (std::size_t ax = r; ax-- > 0;) {
            offset += in_strides[axes[ax]];
            if (++idx[ax] < out_shape[ax]) break;
            offset -= in_strides[axes[ax]] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    auto out = make_data(std::move(out_shape));
    for (std::size_t i = 0; i < n; ++i) out->values[i] = da->values[src[i]];
    if (tracks(a)) {
        record(out, [da, out, src = std::move(src)] {
            if (out->grad.empty()) return;
            da->ensure_grad();
            for (std::size_t i = 0; i < src.size(); ++i) da->grad[src[i]] += out->grad[i];
        });
    }
    return TensorAccess::wrap(out);
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
    checked_axis(a, axis, "narrow");
    const auto& da = raw(a);
    const auto extent = da->shape[axis];
    if (length == 0 || start + length > extent) {
        throw DimensionError("narrow: range [" + std::to_string(start) + ", " +
                             std::to_string(start + length) + ") exceeds extent " +
                             std::to_string(extent));
    }
    const auto outer = product(da->shape, 0, axis);
    const auto inner = product(da->shape, axis + 1, da->shape.size());
    Shape out_shape = da->shape;
    out_shape[axis] = length;
    auto out = make_data(std::move(out_shape));
    const auto block = length * inner;
    for (std::size_t o = 0; o < outer; ++o) {
        const auto* s = da->values.data() + (o * extent + start) * inner;
        std::copy(s, s + block, out->values.data() + o * block);
    }
    if (tracks(a)) {
        record(out, [da, out, outer, extent, start, inner, block] {
            if (out->grad.empty()) return;
            da->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o) {
                auto* d = da->grad.data() + (o * extent + start) * inner;
                const auto* g = out->grad.data() + o * block;
                for (std::size_t i = 0; i < block; ++i) d[i] += g[i];
            }
        });
    }
    return TensorAccess::wrap(out);
}

Tensor stack(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw UsageError("stack of zero tensors");
    const Shape& base = parts.front().shape();
    if (axis > base.size()) throw DimensionError("stack: axis out of range");
    std::vector<DataPtr> ins;
    bool any_grad = false;
    for (const auto& p : parts) {
        if (p.shape() != base) {
            throw DimensionError("stack: mismatched shapes " + shape_to_string(base) + " and " +
                                 shape_to_string(p.shape()));
        }
        ins.push_back(raw(p));
        any_grad = any_grad || tracks(p);
    }
    const auto count = parts.size();
    const auto outer = product(base, 0, axis);
    const auto inner = product(base, axis, base.size());
    Shape out_shape = base;
    out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
    auto out = make_data(std::move(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t c = 0; c < count; ++c) {
            const auto* s = ins[c]->values.data() + o * inner;
            std::copy(s, s + inner, out->values.data() + (o * count + c) * inner);
        }
    }
    if (any_grad) {
        record(out, [ins = std::move(ins), out, outer, count, inner] {
            if (out->grad.empty()) return;
            for (std::size_t c = 0; c < count; ++c) {
                if (!ins[c]->requires_grad) continue;
                ins[c]->ensure_grad();
                for (std::size_t o = 0; o < outer; ++o) {
                    const auto* g = out->grad.data() + (o * count + c) * inner;
                    auto* d = ins[c]->grad.data() + o * inner;
                    for (std::size_t i = 0; i < inner; ++i) d[i] += g[i];
                }
            }
        });
    }
    return TensorAccess::wrap(out);
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
    const auto& da = raw(a);
    double s = 0.0;
    for (double v : da->values) s += v;
    auto out = make_data({1}, {s});
    if (tracks(a)) {
        record(out, [da, out] {
            if (out->grad.empty()) return;
            da->ensure_grad();
            for (auto& g : da->grad) g += out->grad[0];
        });
    }
    return TensorAccess::wrap(out);
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean_axis(const Tensor& a, std::size_t axis) {
    checked_axis(a, axis, "mean_axis");
    const auto& da = raw(a);
    const auto extent = da->shape[axis];
    const auto outer = product(da->shape, 0, axis);
    const auto inner = product(da->shape, axis + 1, da->shape.size());
    Shape out_shape = da->shape;
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape.push_back(1);
    auto out = make_data(std::move(out_shape));
    const double w = 1.0 / static_cast<double>(extent);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < extent; ++e)
            for (std::size_t i = 0; i < inner; ++i)
                out->values[o * inner + i] += w * da->values[(o * extent + e) * inner + i];
    if (tracks(a)) {
        record(out, [da, out, outer, extent, inner, w] {
            if (out->grad.empty()) return;
            da->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t e = 0; e < extent; ++e)
                    for (std::size_t i = 0; i < inner; ++i)
                        da->grad[(o * extent + e) * inner + i] += w * out->grad[o * inner + i];
        });
    }
    return TensorAccess::wrap(out);
}

// ---- layers and losses ----------------------------------------------------

Tensor normalize_layer(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const auto& dx = raw(x);
    const auto& dg = raw(gamma);
    const auto& db = raw(beta);
    if (dx->shape.empty()) throw DimensionError("normalize_layer on rank-0 tensor");
    const auto d = dx->shape.back();
    if (dg->shape != Shape{d} || db->shape != Shape{d}) {
        throw DimensionError("normalize_layer: gamma/beta must be [" + std::to_string(d) + "], got " +
                             shape_to_string(dg->shape) + " and " + shape_to_string(db->shape));
    }
    const auto rows = dx->values.size() / d;
    auto out = make_data(dx->shape);
    std::vector<double> xhat(dx->values.size());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* v = dx->values.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += v[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (v[j] - mu) * (v[j] - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (v[j] - mu) * inv_std[r];
            xhat[r * d + j] = h;
            out->values[r * d + j] = dg->values[j] * h + db->values[j];
        }
    }
    if (tracks(x) || tracks(gamma) || tracks(beta)) {
        record(out, [dx, dg, db, out, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            if (out->grad.empty()) return;
            const auto& g = out->grad;
            if (dg->requires_grad) dg->ensure_grad();
            if (db->requires_grad) db->ensure_grad();
            if (dx->requires_grad) dx->ensure_grad();
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t r = 0; r < rows; ++r) {
                double mean_dh = 0.0;
                double mean_dh_h = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const auto i = r * d + j;
                    if (dg->requires_grad) dg->grad[j] += g[i] * xhat[i];
                    if (db->requires_grad) db->grad[j] += g[i];
                    const double dh = g[i] * dg->values[j];
                    mean_dh += dh;
                    mean_dh_h += dh * xhat[i];
                }
                if (!dx->requires_grad) continue;
                mean_dh *= inv_d;
                mean_dh_h *= inv_d;
                for (std::size_t j = 0; j < d; ++j) {
                    const auto i = r * d + j;
                    const double dh = g[i] * dg->values[j];
                    dx->grad[i] += inv_std[r] * (dh - mean_dh - xhat[i] * mean_dh_h);
                }
            }
        });
    }
    return TensorAccess::wrap(out);
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ParameterError("dropout probability must lie in [0, 1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return x;
    const auto& dx = raw(x);
    const std::size_t n = dx->values.size();
    std::vector<double> mask(n);
    // one 53-bit uniform per element
    const double keep = 1.0 - p;
    const double s = 1.0 / keep;
    for (auto& m : mask) m = static_cast<double>(rng() >> 11) * 0x1.0p-53 < keep ? s : 0.0;
    return mul(x, Tensor(dx->shape, std::move(mask)));
}

Tensor loss_mse(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw DimensionError("loss_mse: prediction " + shape_to_string(pred.shape()) +
                             " vs target " + shape_to_string(target.shape()));
    }
    const auto d = sub(pred, target);
    return mean(mul(d, d));
}

Tensor loss_bce_logits(const Tensor& logits, const Tensor& labels) {
    const auto& dl = raw(logits);
    const auto& dy = raw(labels);
    if (dl->shape != dy->shape) {
        throw DimensionError("loss_bce_logits: logits " + shape_to_string(dl->shape) + " vs labels " +
                             shape_to_string(dy->shape));
    }
    for (double y : dy->values) {
        if (y != 0.0 && y != 1.0) throw DataError("loss_bce_logits: labels must be 0 or 1");
    }
    const std::size_t n = dl->values.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = dl->values[i];
        const double y = dy->values[i];
        total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    auto out = make_data({1}, {total / static_cast<double>(n)});
    if (tracks(logits)) {
        record(out, [dl, dy, out, n] {
            if (out->grad.empty()) return;
            dl->ensure_grad();
            const double w = out->grad[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                dl->grad[i] += w * (logistic(dl->values[i]) - dy->values[i]);
            }
        });
    }
    return TensorAccess::wrap(out);
}

}  // namespace automixer
