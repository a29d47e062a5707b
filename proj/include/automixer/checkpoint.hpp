#pragma once

// Checkpoint container: a single JSON document
//
//   { "format": "automixer-checkpoint", "version": 1, "kind": ...,
//     "meta": {...}, "tensors": [{"name", "shape", "values"}...],
//     "content_hash": "<sha256>" }
//
// content_hash covers the compact dump of the document without that field.
// Layout details live in docs/checkpoint-format.md.

#include <filesystem>
#include <string>
#include <vector>

#include "automixer/config.hpp"
#include "automixer/data.hpp"
#include "automixer/model.hpp"
#include "automixer/recurrent.hpp"
#include "automixer/tensor.hpp"
#include "json.hpp"

namespace automixer {

inline constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json config_to_json(const AutoMixerConfig& config);
AutoMixerConfig config_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json schema_to_json(const ChannelSchema& schema);
ChannelSchema schema_from_json(const nlohmann::ordered_json& j);

class Checkpoint {
public:
    std::string kind;             // "autoencoder" or "model"
    nlohmann::ordered_json meta;  // seed, config, mode, epoch, ...
    ParameterList tensors;        // detached copies

    /// Deep-copies `params`, so later training does not alter the checkpoint.
    static Checkpoint capture(std::string kind, const ParameterList& params, nlohmann::ordered_json meta);

    nlohmann::ordered_json to_json() const;
    /// DataError on malformed input or a content-hash mismatch.
    static Checkpoint from_json(const nlohmann::ordered_json& j);

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    std::string content_hash() const;
    bool has_prefix(const std::string& prefix) const;
    const Tensor& tensor(const std::string& name) const;
};

/// Builds an autoencoder from a kind="autoencoder" checkpoint (meta: cell, channels, compressed).
ChannelAutoEncoder autoencoder_from_checkpoint(const Checkpoint& ckpt);
Checkpoint autoencoder_checkpoint(const ChannelAutoEncoder& ae, nlohmann::ordered_json meta);

/// Rebuilds a model from a kind="model" checkpoint (meta: config, channels, event_labels).
AutoMixerModel model_from_checkpoint(const Checkpoint& ckpt);
Checkpoint model_checkpoint(const AutoMixerModel& model, nlohmann::ordered_json meta);

}  // namespace automixer
