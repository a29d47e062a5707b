#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "automixer/tensor.hpp"
#include "json.hpp"

namespace automixer {

using LabelMatrix = std::vector<std::vector<int>>;

/// Per-channel MSE over every leading index ([.., C] inputs; windows and horizon steps pooled).
std::vector<double> per_channel_mse(const Tensor& pred, const Tensor& actual);

/// Mean over `mask` of per-channel MSE. UsageError on an empty mask.
double mse_masked(const Tensor& pred, const Tensor& actual, const std::vector<std::size_t>& mask);

/// Pearson correlation of two equal-length series. Returns nullopt when `b` is
/// constant; 0 when only `a` is constant.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Per masked channel, Pearson between concatenated predictions and actuals,
/// then averaged. Channels with constant actuals are skipped with a warning
/// and reported through `excluded`; DataError if every channel is skipped.
double pcc_masked(const Tensor& pred, const Tensor& actual, const std::vector<std::size_t>& mask,
                  std::vector<std::size_t>* excluded = nullptr);

/// Fraction of rows whose label vectors match exactly. UsageError on size or width mismatch.
double subset_accuracy(const LabelMatrix& pred, const LabelMatrix& truth);

/// Label = 1 where sigmoid(logit) > 0.5. logits: [B, E].
LabelMatrix threshold_labels(const Tensor& logits);

/// Repeats the last row of x ([sl, C] or [B, sl, C]) `horizon` times.
Tensor baseline_persistence(const Tensor& x, std::size_t horizon);

struct MetricReport {
    std::string task;
    std::vector<std::string> channel_names;
    std::vector<double> per_channel_mse;
    std::optional<double> kpi_mse;
    std::optional<double> kpi_pcc;
    std::optional<double> event_mse;
    std::optional<double> event_pcc;
    std::optional<double> subset_accuracy;
    std::optional<double> baseline_mse;       // persistence on the task's mask
    std::optional<double> baseline_accuracy;  // all-zeros predictor
    std::size_t windows = 0;
    std::string config_hash;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
    static MetricReport from_json(const nlohmann::ordered_json& j);
};

}  // namespace automixer
