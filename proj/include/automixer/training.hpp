#pragma once

// Pretraining (autoencoder reconstruction) and finetuning (end-to-end task
// loss) loops with best-validation selection and early stopping.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "automixer/checkpoint.hpp"
#include "automixer/config.hpp"
#include "automixer/data.hpp"
#include "automixer/metrics.hpp"
#include "automixer/model.hpp"
#include "automixer/recurrent.hpp"

namespace automixer {

struct EpochRecord {
    std::string phase;  // "pretrain" | "finetune"
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool improved = false;

    nlohmann::ordered_json to_json() const;
};

using ProgressSink = std::function<void(const EpochRecord&)>;

struct TrainSpec {
    TrainMode mode = TrainMode::pretrained;
    std::size_t epochs_max = 100;
    std::size_t patience = 10;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double clip_norm = 5.0;
    std::uint64_t seed = 0;
    bool early_stop = true;
    /// Ends training once an epoch's mean training loss falls below this value.
    std::optional<double> stop_below_train_loss;
    ProgressSink progress;

    void validate() const;
};

struct EarlyStopState {
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t epochs_since_improve = 0;
    std::size_t patience = 10;
    std::size_t epoch = 0;  // epochs seen so far (1-based after the first update)
    std::string diagnostic;
};

enum class StopDecision { keep_going, stop };

inline constexpr double kMinImprovement = 1e-6;

/// An epoch improves when val_loss < best - 1e-6; the counter resets then and
/// increments otherwise. Stops once the counter reaches `patience`, or at once on a non-finite loss.
StopDecision early_stop_update(EarlyStopState& state, double val_loss);

struct PretrainResult {
    ChannelAutoEncoder autoencoder;  // best-validation parameters
    Checkpoint checkpoint;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
};

/// Trains the channel autoencoder on reconstruction MSE over sl-length training windows.
PretrainResult pretrain(const PreparedDataset& data, const AutoMixerConfig& config, const TrainSpec& spec);

struct FinetuneResult {
    AutoMixerModel model;  // best-validation parameters
    Checkpoint checkpoint;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    MetricReport test_metrics;
};

/// End-to-end training on the task loss. PT mode copies `pretrained` into the
/// model after initialization; NPT keeps the random autoencoder. Test windows
/// are read exactly once, after the best epoch is restored.
FinetuneResult finetune(const PreparedDataset& data, const AutoMixerConfig& config, const TrainSpec& spec,
                        const ChannelAutoEncoder* pretrained = nullptr);

/// Task loss of `model` over a window set in eval mode.
double evaluate_loss(const AutoMixerModel& model, const WindowSet& windows, const WindowSet& raw_windows,
                     std::size_t batch_size = 64);

/// [B, H, C] standardized forecasts for every window in `windows`, eval mode.
Tensor predict_forecasts(const AutoMixerModel& model, const WindowSet& windows, std::size_t batch_size = 64);

/// Metrics on the test split (reads test windows once).
MetricReport evaluate(const AutoMixerModel& model, const PreparedDataset& data, std::uint64_t seed);

/// Persistence forecast metrics for a forecasting task on the test split.
MetricReport evaluate_persistence(const PreparedDataset& data, Task task);

/// Event labels for every window of a raw-unit window set, [B, E].
Tensor window_labels(const WindowSet& raw_windows, const ChannelSchema& schema,
                     std::span<const std::size_t> indices);

}  // namespace automixer
