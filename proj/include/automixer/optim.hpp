#pragma once

#include <cstdint>
#include <vector>

#include "automixer/tensor.hpp"

namespace automixer {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment buffers for one fixed parameter list.
class AdamState {
public:
    AdamState(const ParameterList& params, AdamOptions options = {});

    const AdamOptions& options() const { return options_; }
    std::int64_t step() const { return step_; }

private:
    friend void adam_step(const ParameterList& params, AdamState& state);
    AdamOptions options_;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
    std::int64_t step_ = 0;
};

/// One bias-corrected Adam update in place. Parameters without a gradient are
/// treated as having a zero gradient. Throws TrainingError on non-finite gradients.
void adam_step(const ParameterList& params, AdamState& state);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm measured before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

void zero_grads(const ParameterList& params);

}  // namespace automixer
