#include "automixer/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "automixer/errors.hpp"

namespace automixer {

namespace {

std::vector<std::size_t> swap_last_axes(std::size_t rank) {
    std::vector<std::size_t> axes(rank);
    for (std::size_t i = 0; i < rank; ++i) axes[i] = i;
    std::swap(axes[rank - 1], axes[rank - 2]);
    return axes;
}

}  // namespace

ForecastHead ForecastHead::random(std::size_t patches, std::size_t hf, std::size_t horizon,
                                  std::mt19937_64& rng) {
    return {init_weight(patches * hf, horizon, rng), Tensor::zeros({horizon}, true)};
}

ForecastHead ForecastHead::zeros(std::size_t patches, std::size_t hf, std::size_t horizon) {
    return {Tensor::zeros({patches * hf, horizon}, true), Tensor::zeros({horizon}, true)};
}

void ForecastHead::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + "weight", weight});
    out.push_back({prefix + "bias", bias});
}

ReconciliationHead ReconciliationHead::random(std::size_t channels, std::size_t ef,
                                              std::mt19937_64& rng) {
    return {init_weight(channels, ef, rng), Tensor::zeros({ef}, true), init_weight(ef, channels, rng),
            Tensor::zeros({channels}, true)};
}

ReconciliationHead ReconciliationHead::zeros(std::size_t channels, std::size_t ef) {
    return {Tensor::zeros({channels, ef}, true), Tensor::zeros({ef}, true),
            Tensor::zeros({ef, channels}, true), Tensor::zeros({channels}, true)};
}

void ReconciliationHead::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + "w1", w1});
    out.push_back({prefix + "b1", b1});
    out.push_back({prefix + "w2", w2});
    out.push_back({prefix + "b2", b2});
}

ClassificationHead ClassificationHead::random(std::size_t hf, std::size_t labels,
                                              std::mt19937_64& rng) {
    if (labels == 0) throw ConfigError("classification head needs at least one label");
    return {init_weight(hf, labels, rng), Tensor::zeros({labels}, true)};
}

void ClassificationHead::collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + "weight", weight});
    out.push_back({prefix + "bias", bias});
}

Tensor forecast_head(const Tensor& features, const ForecastHead& head) {
    const auto r = features.rank();
    if (r < 3) throw DimensionError("forecast_head expects [.., C, n, hf]");
    Shape flat(features.shape().begin(), features.shape().end() - 2);
    flat.push_back(features.dim(r - 2) * features.dim(r - 1));
    const Tensor y = linear(reshape(features, flat), head.weight, head.bias);  // [.., C, H]
    return permute(y, swap_last_axes(y.rank()));
}

Tensor reconcile_channels(const Tensor& y, const ReconciliationHead& head) {
    return add(y, linear(gelu(linear(y, head.w1, head.b1)), head.w2, head.b2));
}

Tensor classification_logits(const Tensor& features, const ClassificationHead& head) {
    const auto r = features.rank();
    if (r < 3) throw DimensionError("classification_logits expects [.., C, n, hf]");
    Shape pooled_shape(features.shape().begin(), features.shape().end() - 3);
    pooled_shape.push_back(features.dim(r - 3) * features.dim(r - 2));
    pooled_shape.push_back(features.dim(r - 1));
    const Tensor pooled = mean_axis(reshape(features, pooled_shape), pooled_shape.size() - 2);
    return linear(pooled, head.weight, head.bias);
}

AutoMixerModel AutoMixerModel::create(const AutoMixerConfig& config, std::size_t channels,
                                      std::size_t event_labels, std::mt19937_64& rng) {
    config.validate();
    AutoMixerModel m;
    m.config_ = config;
    m.channels_ = channels;
    m.event_labels_ = event_labels;
    const bool classify = config.task == Task::event_classify;
    if (config.compress) {
        m.backbone_channels_ = compressed_channels(channels, config.cr);
        m.encoder_ = CellParams::random(config.cell, channels, m.backbone_channels_, rng);
        if (!classify) {
            // same draw order as ChannelAutoEncoder::random
            RecurrentDecoder dec;
            dec.cell = CellParams::random(config.cell, m.backbone_channels_, m.backbone_channels_, rng);
            const double bound = 1.0 / std::sqrt(static_cast<double>(m.backbone_channels_));
            std::uniform_real_distribution<double> dist(-bound, bound);
            std::vector<double> w(m.backbone_channels_ * channels);
            for (auto& v : w) v = dist(rng);
            dec.proj_w = Tensor({m.backbone_channels_, channels}, std::move(w), true);
            dec.proj_b = Tensor::zeros({channels}, true);
            m.decoder_ = std::move(dec);
        }
    } else {
        if (channels == 0) throw ConfigError("model needs at least one channel");
        m.backbone_channels_ = channels;
    }
    const auto bc = BackboneConfig::from(config);
    m.backbone_ = Backbone::random(bc, rng);
    if (classify) {
        m.classifier_ = ClassificationHead::random(config.hf, event_labels, rng);
    } else {
        m.head_ = ForecastHead::random(bc.patches(), config.hf, config.fl, rng);
        if (config.cc) m.reconciler_ = ReconciliationHead::random(m.backbone_channels_, config.ef, rng);
    }
    return m;
}

Tensor AutoMixerModel::compress(const Tensor& x) const {
    const auto c = x.dim(x.rank() - 1);
    if (c != channels_) {
        throw SchemaError("model expects " + std::to_string(channels_) + " channels, input has " +
                          std::to_string(c));
    }
    return encoder_ ? encode_channels(*encoder_, x) : x;
}

Tensor AutoMixerModel::forecast(const Tensor& x, const ForwardContext& ctx) const {
    if (!head_) throw ConfigError("model was built for classification, not forecasting");
    const auto features = backbone_.forward(compress(x), ctx).features;
    Tensor y = forecast_head(features, *head_);
    if (reconciler_) y = reconcile_channels(y, *reconciler_);
    return decoder_ ? decode_channels(*decoder_, y) : y;
}

Tensor AutoMixerModel::classify(const Tensor& x, const ForwardContext& ctx) const {
    if (!classifier_) throw ConfigError("model was built for forecasting, not classification");
    return classification_logits(backbone_.forward(compress(x), ctx).features, *classifier_);
}

void AutoMixerModel::load_autoencoder(const ChannelAutoEncoder& ae) {
    std::vector<std::string> mismatches;
    if (!encoder_) mismatches.push_back("compress (model has no autoencoder)");
    else {
        if (ae.kind() != encoder_->kind) {
            mismatches.push_back("cell: checkpoint " + to_string(ae.kind()) + " vs model " +
                                 to_string(encoder_->kind));
        }
        if (ae.channels() != channels_) {
            mismatches.push_back("C: checkpoint " + std::to_string(ae.channels()) + " vs model " +
                                 std::to_string(channels_));
        }
        if (ae.compressed() != backbone_channels_) {
            mismatches.push_back("C': checkpoint " + std::to_string(ae.compressed()) + " vs model " +
                                 std::to_string(backbone_channels_));
        }
    }
    if (!mismatches.empty()) {
        std::ostringstream os;
        os << "incompatible pretrained autoencoder:";
        for (const auto& m : mismatches) os << ' ' << m << ';';
        throw ConfigError(os.str());
    }
    ParameterList target;
    encoder_->collect(target, "encoder.");
    if (decoder_) decoder_->collect(target, "decoder.");
    copy_parameters(ae.parameters(), target, true);
}

ParameterList AutoMixerModel::parameters() const {
    ParameterList out;
    if (encoder_) encoder_->collect(out, "encoder.");
    if (decoder_) decoder_->collect(out, "decoder.");
    auto bb = backbone_.parameters();
    out.insert(out.end(), bb.begin(), bb.end());
    if (head_) head_->collect(out, "head.");
    if (reconciler_) reconciler_->collect(out, "reconcile.");
    if (classifier_) classifier_->collect(out, "classifier.");
    return out;
}

void copy_parameters(const ParameterList& source, const ParameterList& target, bool require_all) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& p : source) by_name[p.name] = &p.tensor;
    for (const auto& p : target) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) {
            if (require_all) throw ConfigError("missing parameter '" + p.name + "'");
            continue;
        }
        if (it->second->shape() != p.tensor.shape()) {
            throw DimensionError("parameter '" + p.name + "' has shape " +
                                 shape_to_string(it->second->shape()) + ", expected " +
                                 shape_to_string(p.tensor.shape()));
        }
        Tensor dst = p.tensor;
        auto src = it->second->values();
        std::copy(src.begin(), src.end(), dst.mutable_values().begin());
    }
}

}  // namespace automixer
