#pragma once

// Task heads and the assembled AutoMixer model.
//
//   forecast:  x -> encoder -> backbone -> forecast head -> [reconcile] -> decoder -> y_hat
//   classify:  x -> encoder -> backbone -> mean pool -> affine -> logits
//
// With compress=false the encoder/decoder are absent and the same pipeline
// is a plain TSMixer (optionally with the reconciliation head) over raw channels.

#include <cstddef>
#include <optional>
#include <random>
#include <string>

#include "automixer/config.hpp"
#include "automixer/mixer.hpp"
#include "automixer/recurrent.hpp"
#include "automixer/tensor.hpp"

namespace automixer {

struct ForecastHead {
    Tensor weight;  // [n * hf, H]
    Tensor bias;    // [H]

    static ForecastHead random(std::size_t patches, std::size_t hf, std::size_t horizon,
                               std::mt19937_64& rng);
    static ForecastHead zeros(std::size_t patches, std::size_t hf, std::size_t horizon);
    void collect(ParameterList& out, const std::string& prefix) const;
};

/// Residual MLP across channels, applied per time step.
struct ReconciliationHead {
    Tensor w1, b1;  // [C', ef], [ef]
    Tensor w2, b2;  // [ef, C'], [C']

    static ReconciliationHead random(std::size_t channels, std::size_t ef, std::mt19937_64& rng);
    static ReconciliationHead zeros(std::size_t channels, std::size_t ef);
    void collect(ParameterList& out, const std::string& prefix) const;
};

struct ClassificationHead {
    Tensor weight;  // [hf, E]
    Tensor bias;    // [E]

    static ClassificationHead random(std::size_t hf, std::size_t labels, std::mt19937_64& rng);
    void collect(ParameterList& out, const std::string& prefix) const;
};

/// [.., C', n, hf] -> [.., H, C']
Tensor forecast_head(const Tensor& features, const ForecastHead& head);
/// y' + MLP(y') across the channel axis; shape preserved.
Tensor reconcile_channels(const Tensor& y, const ReconciliationHead& head);
/// Mean over channels and patches, then affine hf -> E. [.., C', n, hf] -> [.., E]
Tensor classification_logits(const Tensor& features, const ClassificationHead& head);

class AutoMixerModel {
public:
    AutoMixerModel() = default;

    /// Draws every parameter from `rng` in a fixed order: encoder, decoder,
    /// backbone, forecast head, reconciliation head, classification head.
    static AutoMixerModel create(const AutoMixerConfig& config, std::size_t channels,
                                 std::size_t event_labels, std::mt19937_64& rng);

    /// [T, C] -> [H, C] or [B, T, C] -> [B, H, C]
    Tensor forecast(const Tensor& x, const ForwardContext& ctx) const;
    /// [T, C] -> [E] or [B, T, C] -> [B, E]
    Tensor classify(const Tensor& x, const ForwardContext& ctx) const;

    /// Copies autoencoder weights into this model; the decoder part is
    /// skipped when this model has no decoder. Throws ConfigError listing
    /// mismatched fields when the autoencoder is incompatible.
    void load_autoencoder(const ChannelAutoEncoder& ae);

    const AutoMixerConfig& config() const { return config_; }
    std::size_t channels() const { return channels_; }
    /// Width seen by the backbone: C' when compressing, else C.
    std::size_t backbone_channels() const { return backbone_channels_; }
    std::size_t event_labels() const { return event_labels_; }
    bool has_decoder() const { return decoder_.has_value(); }

    const std::optional<CellParams>& encoder() const { return encoder_; }
    const std::optional<RecurrentDecoder>& decoder() const { return decoder_; }
    Backbone& backbone() { return backbone_; }
    std::optional<ForecastHead>& head() { return head_; }
    std::optional<ReconciliationHead>& reconciler() { return reconciler_; }
    std::optional<ClassificationHead>& classifier() { return classifier_; }

    ParameterList parameters() const;

private:
    Tensor compress(const Tensor& x) const;

    AutoMixerConfig config_;
    std::size_t channels_ = 0;
    std::size_t backbone_channels_ = 0;
    std::size_t event_labels_ = 0;
    std::optional<CellParams> encoder_;
    std::optional<RecurrentDecoder> decoder_;
    Backbone backbone_;
    std::optional<ForecastHead> head_;
    std::optional<ReconciliationHead> reconciler_;
    std::optional<ClassificationHead> classifier_;
};

/// Copies values from `source` into same-named tensors of `target`. Throws
/// DimensionError on shape mismatch and, when `require_all`, ConfigError on
/// a target tensor missing from `source`.
void copy_parameters(const ParameterList& source, const ParameterList& target, bool require_all);

}  // namespace automixer
