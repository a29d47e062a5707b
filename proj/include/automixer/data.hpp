#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "automixer/tensor.hpp"

namespace automixer {

// ---- warnings -------------------------------------------------------------

using WarningSink = std::function<void(std::string_view)>;
/// Replaces the process-wide warning sink; returns the previous one. The default writes to stderr.
WarningSink set_warning_sink(WarningSink sink);
void log_warning(std::string_view message);

// ---- schema and frames ----------------------------------------------------

enum class ChannelRole { biz_kpi, it_event };

std::string to_string(ChannelRole role);
ChannelRole parse_channel_role(std::string_view text);

struct ChannelDescriptor {
    std::string name;
    ChannelRole role = ChannelRole::biz_kpi;

    bool operator==(const ChannelDescriptor&) const = default;
};

class ChannelSchema {
public:
    ChannelSchema() = default;
    /// DataError on duplicate or empty names.
    explicit ChannelSchema(std::vector<ChannelDescriptor> channels);

    /// Sidecar format: one `name,role` line per channel; '#' comments and a
    /// leading `name,role` header are ignored.
    static ChannelSchema load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return channels_.size(); }
    const ChannelDescriptor& operator[](std::size_t i) const { return channels_[i]; }
    const std::vector<ChannelDescriptor>& channels() const { return channels_; }
    std::vector<std::size_t> kpi_indices() const;
    std::vector<std::size_t> event_indices() const;
    /// DataError unless at least one channel of each role is present.
    void require_both_roles() const;

    bool operator==(const ChannelSchema&) const = default;

private:
    std::vector<ChannelDescriptor> channels_;
};

/// Timestamped multivariate series, row-major values (rows = time).
struct BizITObsFrame {
    std::vector<double> timestamps;  // seconds since the Unix epoch
    std::vector<double> values;      // rows * channels
    ChannelSchema schema;

    std::size_t rows() const { return timestamps.size(); }
    std::size_t channels() const { return schema.size(); }
    double at(std::size_t row, std::size_t channel) const { return values[row * channels() + channel]; }
    double& at(std::size_t row, std::size_t channel) { return values[row * channels() + channel]; }

    /// Rows [begin, end).
    BizITObsFrame slice(std::size_t begin, std::size_t end) const;
    /// Checks shape, finiteness, strictly increasing and equally spaced (1%) timestamps.
    void validate() const;
};

/// Comma-delimited file with header; column 1 holds ISO-8601 or integer-epoch
/// timestamps, the rest must match the schema order. DataError with row/column on failure.
BizITObsFrame load_frame(const std::filesystem::path& data_path, const std::filesystem::path& schema_path);
/// Writes the data file (integer-epoch timestamps, round-trip precision values).
void save_frame(const BizITObsFrame& frame, const std::filesystem::path& data_path);

/// Seconds since the epoch for `YYYY-MM-DDTHH:MM:SS[Z]` (or a space separator) or a plain number.
double parse_timestamp(std::string_view text);

// ---- splitting and normalization -------------------------------------------

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct FrameSplits {
    BizITObsFrame train;
    BizITObsFrame val;
    BizITObsFrame test;
};

/// Contiguous ordered split: train = floor(r_train * N), val = floor(r_val * N),
/// test gets the remainder. Requires N >= 3 * (sl + fl).
FrameSplits chronological_split(const BizITObsFrame& frame, SplitRatios ratios, std::size_t sl,
                                std::size_t fl);

/// Per-channel standardization with statistics from the training split only.
class Normalizer {
public:
    Normalizer() = default;
    Normalizer(std::vector<double> mean, std::vector<double> stddev);

    /// DataError naming the channel when a channel is constant.
    static Normalizer fit(const BizITObsFrame& train);

    BizITObsFrame apply(const BizITObsFrame& frame) const;
    BizITObsFrame inverse(const BizITObsFrame& frame) const;
    double apply_value(std::size_t channel, double v) const { return (v - mean_[channel]) / std_[channel]; }
    double inverse_value(std::size_t channel, double v) const { return v * std_[channel] + mean_[channel]; }

    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stddev() const { return std_; }

private:
    std::vector<double> mean_;
    std::vector<double> std_;
};

struct NormalizedSplits {
    FrameSplits standardized;
    Normalizer normalizer;
};

NormalizedSplits fit_apply_normalizer(const FrameSplits& splits);

// ---- windows --------------------------------------------------------------

struct WindowSample {
    Tensor x;  // [sl, C]
    Tensor y;  // [fl, C]
    std::size_t origin = 0;
};

/// Windows over one frame: sample i covers rows origin_i .. origin_i + sl + fl.
class WindowSet {
public:
    WindowSet() = default;
    WindowSet(std::shared_ptr<const BizITObsFrame> frame, std::size_t sl, std::size_t fl,
              std::vector<std::size_t> origins);

    std::size_t size() const { return origins_.size(); }
    bool empty() const { return origins_.empty(); }
    std::size_t sl() const { return sl_; }
    std::size_t fl() const { return fl_; }
    const std::vector<std::size_t>& origins() const { return origins_; }
    const BizITObsFrame& frame() const { return *frame_; }

    WindowSample operator[](std::size_t i) const;
    /// [B, sl, C] histories / [B, fl, C] targets for the given sample indices.
    Tensor batch_x(std::span<const std::size_t> indices) const;
    Tensor batch_y(std::span<const std::size_t> indices) const;
    /// Returns the first `count` windows as a new set.
    WindowSet prefix(std::size_t count) const;

private:
    std::shared_ptr<const BizITObsFrame> frame_;
    std::size_t sl_ = 0;
    std::size_t fl_ = 0;
    std::vector<std::size_t> origins_;
};

/// floor((len - sl - fl) / stride) + 1 windows; an empty set plus a warning when the frame is too short.
WindowSet make_windows(std::shared_ptr<const BizITObsFrame> frame, std::size_t sl, std::size_t fl,
                       std::size_t stride);

/// Label e is 1 iff event channel e is > 0 anywhere in the raw target window [fl, C].
std::vector<int> event_labels(const Tensor& y_raw, const ChannelSchema& schema);

// ---- prepared dataset -----------------------------------------------------

/// Everything a training run needs: raw and standardized splits, the
/// train-fitted normalizer, and window sets (train stride 1, val/test stride fl).
/// Test windows sit behind an access counter so training code can prove it never read them.
class PreparedDataset {
public:
    static PreparedDataset prepare(const BizITObsFrame& frame, std::size_t sl, std::size_t fl,
                                   SplitRatios ratios = {});

    const ChannelSchema& schema() const { return schema_; }
    const Normalizer& normalizer() const { return normalizer_; }
    const FrameSplits& raw() const { return *raw_; }
    std::size_t sl() const { return sl_; }
    std::size_t fl() const { return fl_; }

    const WindowSet& train_windows() const { return train_; }
    const WindowSet& val_windows() const { return val_; }
    const WindowSet& test_windows() const;
    /// Raw-unit windows aligned with the standardized ones (used for event labels).
    const WindowSet& raw_train_windows() const { return raw_train_; }
    const WindowSet& raw_val_windows() const { return raw_val_; }
    const WindowSet& raw_test_windows() const;

    std::uint64_t test_access_count() const { return test_reads_->load(); }

    /// Copy restricted to the first `count` training windows.
    PreparedDataset with_train_limit(std::size_t count) const;

private:
    ChannelSchema schema_;
    Normalizer normalizer_;
    std::shared_ptr<const FrameSplits> raw_;
    std::size_t sl_ = 0;
    std::size_t fl_ = 0;
    WindowSet train_, val_, test_;
    WindowSet raw_train_, raw_val_, raw_test_;
    std::shared_ptr<std::atomic<std::uint64_t>> test_reads_ =
        std::make_shared<std::atomic<std::uint64_t>>(0);
};

}  // namespace automixer
