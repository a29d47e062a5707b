#include "automixer/mixer.hpp"

#include <cmath>
#include <numeric>

#include "automixer/errors.hpp"

namespace automixer {

namespace {

// Swaps the last two axes.
Tensor swap_last(const Tensor& t) {
    std::vector<std::size_t> axes(t.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(t, axes);
}

Tensor mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
           double dropout_p, const ForwardContext& ctx) {
    Tensor h = gelu(linear(x, w1, b1));
    if (ctx.training && dropout_p > 0.0) {
        if (ctx.rng == nullptr) throw UsageError("training forward pass without an RNG");
        h = dropout(h, dropout_p, true, *ctx.rng);
    }
    return linear(h, w2, b2);
}

}  // namespace

BackboneConfig BackboneConfig::from(const AutoMixerConfig& c) {
    return BackboneConfig{c.sl, c.pl, c.nl, c.hf, c.ef, c.dropout};
}

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(fan_in * fan_out);
    for (auto& x : v) x = dist(rng);
    return Tensor({fan_in, fan_out}, std::move(v), true);
}

MixerLayerParams MixerLayerParams::random(std::size_t n, std::size_t hf, std::size_t ef,
                                          std::mt19937_64& rng) {
    MixerLayerParams p = zeros(n, hf, ef);
    p.patch_w1 = init_weight(n, ef, rng);
    p.patch_w2 = init_weight(ef, n, rng);
    p.feat_w1 = init_weight(hf, ef, rng);
    p.feat_w2 = init_weight(ef, hf, rng);
    p.gate_w = init_weight(hf, hf, rng);
    return p;
}

MixerLayerParams MixerLayerParams::zeros(std::size_t n, std::size_t hf, std::size_t ef) {
    auto z = [](Shape s) { return Tensor::zeros(std::move(s), true); };
    MixerLayerParams p;
    p.norm1_gamma = Tensor::full({hf}, 1.0, true);
    p.norm1_beta = z({hf});
    p.patch_w1 = z({n, ef});
    p.patch_b1 = z({ef});
    p.patch_w2 = z({ef, n});
    p.patch_b2 = z({n});
    p.norm2_gamma = Tensor::full({hf}, 1.0, true);
    p.norm2_beta = z({hf});
    p.feat_w1 = z({hf, ef});
    p.feat_b1 = z({ef});
    p.feat_w2 = z({ef, hf});
    p.feat_b2 = z({hf});
    p.gate_w = z({hf, hf});
    p.gate_b = z({hf});
    return p;
}

void MixerLayerParams::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + "norm1_gamma", norm1_gamma});
    out.push_back({prefix + "norm1_beta", norm1_beta});
    out.push_back({prefix + "patch_w1", patch_w1});
    out.push_back({prefix + "patch_b1", patch_b1});
    out.push_back({prefix + "patch_w2", patch_w2});
    out.push_back({prefix + "patch_b2", patch_b2});
    out.push_back({prefix + "norm2_gamma", norm2_gamma});
    out.push_back({prefix + "norm2_beta", norm2_beta});
    out.push_back({prefix + "feat_w1", feat_w1});
    out.push_back({prefix + "feat_b1", feat_b1});
    out.push_back({prefix + "feat_w2", feat_w2});
    out.push_back({prefix + "feat_b2", feat_b2});
    out.push_back({prefix + "gate_w", gate_w});
    out.push_back({prefix + "gate_b", gate_b});
}

Tensor patchify(const Tensor& z, std::size_t pl) {
    if (z.rank() != 2 && z.rank() != 3) {
        throw DimensionError("patchify expects [T, C] or [B, T, C], got " + shape_to_string(z.shape()));
    }
    const bool batched = z.rank() == 3;
    const auto steps = z.dim(batched ? 1 : 0);
    const auto channels = z.dim(batched ? 2 : 1);
    if (pl == 0 || steps % pl != 0) {
        throw ConfigError("sequence length " + std::to_string(steps) +
                          " is not divisible by patch length " + std::to_string(pl));
    }
    const auto n = steps / pl;
    if (!batched) return reshape(permute(z, {1, 0}), {channels, n, pl});
    return reshape(permute(z, {0, 2, 1}), {z.dim(0), channels, n, pl});
}

Tensor unpatchify(const Tensor& p) {
    if (p.rank() == 3) {
        const auto channels = p.dim(0);
        return permute(reshape(p, {channels, p.dim(1) * p.dim(2)}), {1, 0});
    }
    if (p.rank() == 4) {
        return permute(reshape(p, {p.dim(0), p.dim(1), p.dim(2) * p.dim(3)}), {0, 2, 1});
    }
    throw DimensionError("unpatchify expects rank 3 or 4, got " + shape_to_string(p.shape()));
}

Tensor patch_embed(const Tensor& patches, const Tensor& weight, const Tensor& bias) {
    return linear(patches, weight, bias);
}

Tensor mixer_layer(const Tensor& u, const MixerLayerParams& p, double dropout_p,
                   const ForwardContext& ctx) {
    if (u.rank() < 2) throw DimensionError("mixer_layer expects [..., n, hf]");
    // block 1: mix across patches
    Tensor v = normalize_layer(u, p.norm1_gamma, p.norm1_beta);
    v = swap_last(mlp(swap_last(v), p.patch_w1, p.patch_b1, p.patch_w2, p.patch_b2, dropout_p, ctx));
    const Tensor u1 = add(u, v);
    // block 2: mix across features, gated
    const Tensor w = normalize_layer(u1, p.norm2_gamma, p.norm2_beta);
    const Tensor m = mlp(w, p.feat_w1, p.feat_b1, p.feat_w2, p.feat_b2, dropout_p, ctx);
    const Tensor g = sigmoid(linear(u1, p.gate_w, p.gate_b));
    return add(u1, mul(m, g));
}

Backbone Backbone::random(const BackboneConfig& config, std::mt19937_64& rng) {
    Backbone b = zeros(config);
    b.embed_w_ = init_weight(config.pl, config.hf, rng);
    for (auto& layer : b.layers_) layer = MixerLayerParams::random(config.patches(), config.hf, config.ef, rng);
    return b;
}

Backbone Backbone::zeros(const BackboneConfig& config) {
    if (config.pl == 0 || config.context % config.pl != 0) {
        throw ConfigError("context " + std::to_string(config.context) +
                          " is not divisible by patch length " + std::to_string(config.pl));
    }
    Backbone b;
    b.config_ = config;
    b.embed_w_ = Tensor::zeros({config.pl, config.hf}, true);
    b.embed_b_ = Tensor::zeros({config.hf}, true);
    b.layers_.reserve(config.nl);
    for (std::size_t i = 0; i < config.nl; ++i) {
        b.layers_.push_back(MixerLayerParams::zeros(config.patches(), config.hf, config.ef));
    }
    return b;
}

BackboneOutput Backbone::forward(const Tensor& z, const ForwardContext& ctx) const {
    const auto steps = z.dim(z.rank() - 2);
    if (steps != config_.context) {
        throw ConfigError("backbone built for context " + std::to_string(config_.context) +
                          ", got sequence of length " + std::to_string(steps));
    }
    Tensor u = patch_embed(patchify(z, config_.pl), embed_w_, embed_b_);
    for (const auto& layer : layers_) u = mixer_layer(u, layer, config_.dropout, ctx);
    return {u, config_.patches()};
}

ParameterList Backbone::parameters(const std::string& prefix) const {
    ParameterList out;
    out.push_back({prefix + "embed_w", embed_w_});
    out.push_back({prefix + "embed_b", embed_b_});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].collect(out, prefix + "layer" + std::to_string(i) + ".");
    }
    return out;
}

}  // namespace automixer
