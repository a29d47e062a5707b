#pragma once

// Channel-independent patched MLP-Mixer backbone.
//
// Every channel of z is cut into n = T / pl non-overlapping patches, each
// patch is embedded to hf features, and nl gated mixer layers alternate
// mixing across patches and across features. All weights are shared across
// channels, so the parameter count does not depend on the channel count.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "automixer/config.hpp"
#include "automixer/tensor.hpp"

namespace automixer {

struct BackboneConfig {
    std::size_t context = 24;  // T
    std::size_t pl = 8;
    std::size_t nl = 8;
    std::size_t hf = 16;
    std::size_t ef = 32;
    double dropout = 0.4;

    std::size_t patches() const { return context / pl; }
    static BackboneConfig from(const AutoMixerConfig& config);
};

/// Dropout switch and randomness source threaded through a forward pass.
struct ForwardContext {
    bool training = false;
    std::mt19937_64* rng = nullptr;
};

struct MixerLayerParams {
    Tensor norm1_gamma, norm1_beta;  // [hf]
    Tensor patch_w1, patch_b1;       // [n, ef], [ef]
    Tensor patch_w2, patch_b2;       // [ef, n], [n]
    Tensor norm2_gamma, norm2_beta;  // [hf]
    Tensor feat_w1, feat_b1;         // [hf, ef], [ef]
    Tensor feat_w2, feat_b2;         // [ef, hf], [hf]
    Tensor gate_w, gate_b;           // [hf, hf], [hf]

    static MixerLayerParams random(std::size_t patches, std::size_t hf, std::size_t ef,
                                   std::mt19937_64& rng);
    static MixerLayerParams zeros(std::size_t patches, std::size_t hf, std::size_t ef);
    void collect(ParameterList& out, const std::string& prefix) const;
};

/// [T, C'] -> [C', n, pl] or [B, T, C'] -> [B, C', n, pl]. ConfigError when pl does not divide T.
Tensor patchify(const Tensor& z, std::size_t pl);
/// Exact inverse of patchify.
Tensor unpatchify(const Tensor& patches);

/// Shared affine pl -> hf over the last axis.
Tensor patch_embed(const Tensor& patches, const Tensor& weight, const Tensor& bias);

/// Two residual blocks on [..., n, hf]: (1) norm, MLP across patches;
/// (2) norm, MLP across features gated by sigmoid(affine(input)).
Tensor mixer_layer(const Tensor& u, const MixerLayerParams& params, double dropout_p,
                   const ForwardContext& ctx);

struct BackboneOutput {
    Tensor features;  // [C', n, hf] or [B, C', n, hf]
    std::size_t patches = 0;
};

class Backbone {
public:
    Backbone() = default;
    static Backbone random(const BackboneConfig& config, std::mt19937_64& rng);
    static Backbone zeros(const BackboneConfig& config);

    BackboneOutput forward(const Tensor& z, const ForwardContext& ctx) const;

    const BackboneConfig& config() const { return config_; }
    Tensor& embed_weight() { return embed_w_; }
    Tensor& embed_bias() { return embed_b_; }
    std::vector<MixerLayerParams>& layers() { return layers_; }

    ParameterList parameters(const std::string& prefix = "backbone.") const;

private:
    BackboneConfig config_;
    Tensor embed_w_;  // [pl, hf]
    Tensor embed_b_;  // [hf]
    std::vector<MixerLayerParams> layers_;
};

/// Uniform +-1/sqrt(fan_in) weight matrix, used by every affine layer outside the cells.
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace automixer
