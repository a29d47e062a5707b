#include "automixer/checkpoint.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <tuple>

#include "automixer/errors.hpp"
#include "automixer/hashing.hpp"

namespace automixer {

namespace {

constexpr const char* kFormat = "automixer-checkpoint";

std::string hash_document(nlohmann::ordered_json doc) {
    doc.erase("content_hash");
    return sha256_hex(doc.dump());
}

template <class F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

nlohmann::ordered_json config_to_json(const AutoMixerConfig& c) {
    return {{"cell", to_string(c.cell)}, {"cr", c.cr},        {"sl", c.sl},          {"fl", c.fl},
            {"pl", c.pl},                {"nl", c.nl},        {"fs", c.fs},          {"hf", c.hf},
            {"ef", c.ef},                {"dropout", c.dropout}, {"cc", c.cc},       {"compress", c.compress},
            {"task", to_string(c.task)}};
}

AutoMixerConfig config_from_json(const nlohmann::ordered_json& j) {
    return guarded("config", [&] {
        AutoMixerConfig c;
        c.cell = parse_cell_kind(j.at("cell").get<std::string>());
        c.cr = j.at("cr").get<double>();
        c.sl = j.at("sl").get<std::size_t>();
        c.fl = j.at("fl").get<std::size_t>();
        c.pl = j.at("pl").get<std::size_t>();
        c.nl = j.at("nl").get<std::size_t>();
        c.fs = j.at("fs").get<std::size_t>();
        c.hf = j.at("hf").get<std::size_t>();
        c.ef = j.at("ef").get<std::size_t>();
        c.dropout = j.at("dropout").get<double>();
        c.cc = j.at("cc").get<bool>();
        c.compress = j.at("compress").get<bool>();
        c.task = parse_task(j.at("task").get<std::string>());
        return c;
    });
}

nlohmann::ordered_json schema_to_json(const ChannelSchema& schema) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : schema.channels()) arr.push_back({{"name", c.name}, {"role", to_string(c.role)}});
    return arr;
}

ChannelSchema schema_from_json(const nlohmann::ordered_json& j) {
    return guarded("schema", [&] {
        std::vector<ChannelDescriptor> channels;
        for (const auto& c : j) {
            channels.push_back({c.at("name").get<std::string>(), parse_channel_role(c.at("role").get<std::string>())});
        }
        return ChannelSchema(std::move(channels));
    });
}

Checkpoint Checkpoint::capture(std::string kind, const ParameterList& params, nlohmann::ordered_json meta) {
    Checkpoint c;
    c.kind = std::move(kind);
    c.meta = std::move(meta);
    for (const auto& p : params) c.tensors.push_back({p.name, p.tensor.clone()});
    return c;
}

nlohmann::ordered_json Checkpoint::to_json() const {
    nlohmann::ordered_json doc;
    doc["format"] = kFormat;
    doc["version"] = kCheckpointVersion;
    doc["kind"] = kind;
    doc["meta"] = meta;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& t : tensors) {
        const auto v = t.tensor.values();
        arr.push_back({{"name", t.name},
                       {"shape", t.tensor.shape()},
                       {"values", std::vector<double>(v.begin(), v.end())}});
    }
    doc["tensors"] = std::move(arr);
    doc["content_hash"] = hash_document(doc);
    return doc;
}

Checkpoint Checkpoint::from_json(const nlohmann::ordered_json& doc) {
    return guarded("checkpoint", [&] {
        if (doc.at("format").get<std::string>() != kFormat) throw DataError("not an automixer checkpoint");
        const auto version = doc.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw DataError("unsupported checkpoint version " + std::to_string(version));
        }
        const auto stored = doc.at("content_hash").get<std::string>();
        if (stored != hash_document(doc)) throw DataError("checkpoint content hash mismatch (file corrupted or edited)");
        Checkpoint c;
        c.kind = doc.at("kind").get<std::string>();
        c.meta = doc.at("meta");
        for (const auto& t : doc.at("tensors")) {
            auto shape = t.at("shape").get<Shape>();
            auto values = t.at("values").get<std::vector<double>>();
            c.tensors.push_back({t.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values), true)});
        }
        return c;
    });
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << to_json().dump() << '\n';
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("checkpoint not found: " + path.string());
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(doc);
}

std::string Checkpoint::content_hash() const { return to_json().at("content_hash").get<std::string>(); }

bool Checkpoint::has_prefix(const std::string& prefix) const {
    for (const auto& t : tensors)
        if (t.name.rfind(prefix, 0) == 0) return true;
    return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.tensor;
    throw ConfigError("checkpoint has no tensor '" + name + "'");
}

ChannelAutoEncoder autoencoder_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "autoencoder") throw ConfigError("expected an autoencoder checkpoint, got '" + ckpt.kind + "'");
    const auto [kind, channels, compressed] = guarded("checkpoint meta", [&] {
        return std::tuple{parse_cell_kind(ckpt.meta.at("cell").get<std::string>()),
                          ckpt.meta.at("channels").get<std::size_t>(), ckpt.meta.at("compressed").get<std::size_t>()};
    });
    auto ae = ChannelAutoEncoder::zeros(kind, channels, compressed);
    copy_parameters(ckpt.tensors, ae.parameters(), true);
    return ae;
}

Checkpoint autoencoder_checkpoint(const ChannelAutoEncoder& ae, nlohmann::ordered_json meta) {
    meta["cell"] = to_string(ae.kind());
    meta["channels"] = ae.channels();
    meta["compressed"] = ae.compressed();
    return Checkpoint::capture("autoencoder", ae.parameters(), std::move(meta));
}

AutoMixerModel model_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "model") throw ConfigError("expected a model checkpoint, got '" + ckpt.kind + "'");
    const auto config = config_from_json(ckpt.meta.at("config"));
    const auto [channels, labels] = guarded("checkpoint meta", [&] {
        return std::pair{ckpt.meta.at("channels").get<std::size_t>(), ckpt.meta.at("event_labels").get<std::size_t>()};
    });
    std::mt19937_64 scratch(0);
    auto model = AutoMixerModel::create(config, channels, labels, scratch);
    const auto params = model.parameters();
    if (params.size() != ckpt.tensors.size()) {
        throw ConfigError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
    }
    copy_parameters(ckpt.tensors, params, true);
    return model;
}

Checkpoint model_checkpoint(const AutoMixerModel& model, nlohmann::ordered_json meta) {
    meta["config"] = config_to_json(model.config());
    meta["config_hash"] = model.config().hash();
    meta["channels"] = model.channels();
    meta["event_labels"] = model.event_labels();
    return Checkpoint::capture("model", model.parameters(), std::move(meta));
}

}  // namespace automixer
