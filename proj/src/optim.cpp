#include "automixer/optim.hpp"

#include <cmath>
#include <sstream>

#include "automixer/errors.hpp"

namespace automixer {

AdamState::AdamState(const ParameterList& params, AdamOptions options) : options_(options) {
    first_.reserve(params.size());
    second_.reserve(params.size());
    for (const auto& p : params) {
        first_.emplace_back(p.tensor.numel(), 0.0);
        second_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void adam_step(const ParameterList& params, AdamState& state) {
    if (params.size() != state.first_.size()) {
        throw UsageError("adam_step: parameter list does not match optimizer state");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = params[i].tensor;
        if (t.numel() != state.first_[i].size()) {
            throw DimensionError("adam_step: moment buffer for '" + params[i].name +
                                 "' does not match " + shape_to_string(t.shape()));
        }
        if (!t.has_grad()) continue;
        for (double g : t.grad()) {
            if (!std::isfinite(g)) {
                std::ostringstream os;
                os << "non-finite gradient in parameter '" << params[i].name << "' "
                   << shape_to_string(t.shape()) << " at optimizer step " << state.step_ + 1;
                throw TrainingError(os.str());
            }
        }
    }

    const auto& o = state.options_;
    ++state.step_;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step_));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        if (!t.has_grad()) continue;
        auto w = t.mutable_values();
        auto g = t.grad();
        auto& m = state.first_[i];
        auto& v = state.second_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
            v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
            w[j] -= o.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + o.eps);
        }
    }
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && std::isfinite(norm)) {
        const double s = max_norm / norm;
        for (const auto& p : params) {
            Tensor t = p.tensor;
            if (!t.has_grad()) continue;
            for (auto& g : t.mutable_grad()) g *= s;
        }
    }
    return norm;
}

void zero_grads(const ParameterList& params) {
    for (const auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
    }
}

}  // namespace automixer
