#include "automixer/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "automixer/data.hpp"
#include "automixer/errors.hpp"

namespace automixer {

namespace {

void check_pair(const Tensor& pred, const Tensor& actual, const char* what) {
    if (pred.shape() != actual.shape()) {
        throw DimensionError(std::string(what) + ": prediction " + shape_to_string(pred.shape()) +
                             " vs actual " + shape_to_string(actual.shape()));
    }
}

void check_mask(const std::vector<std::size_t>& mask, std::size_t channels, const char* what) {
    if (mask.empty()) throw UsageError(std::string(what) + ": empty channel mask");
    for (auto m : mask) {
        if (m >= channels) throw UsageError(std::string(what) + ": mask channel " + std::to_string(m) + " out of range");
    }
}

std::vector<double> column(const Tensor& t, std::size_t channel) {
    const auto c = t.dim(t.rank() - 1);
    const auto rows = t.numel() / c;
    const auto v = t.values();
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = v[r * c + channel];
    return out;
}

}  // namespace

std::vector<double> per_channel_mse(const Tensor& pred, const Tensor& actual) {
    check_pair(pred, actual, "per_channel_mse");
    const auto c = pred.dim(pred.rank() - 1);
    const auto rows = pred.numel() / c;
    const auto p = pred.values();
    const auto a = actual.values();
    std::vector<double> out(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
            const double d = p[r * c + j] - a[r * c + j];
            out[j] += d * d;
        }
    }
    for (auto& v : out) v /= static_cast<double>(rows);
    return out;
}

double mse_masked(const Tensor& pred, const Tensor& actual, const std::vector<std::size_t>& mask) {
    check_pair(pred, actual, "mse_masked");
    check_mask(mask, pred.dim(pred.rank() - 1), "mse_masked");
    const auto per = per_channel_mse(pred, actual);
    double s = 0.0;
    for (auto m : mask) s += per[m];
    return s / static_cast<double>(mask.size());
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw UsageError("pearson: series must be non-empty and equal length");
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(sbb > 0.0)) return std::nullopt;
    if (!(saa > 0.0)) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double pcc_masked(const Tensor& pred, const Tensor& actual, const std::vector<std::size_t>& mask,
                  std::vector<std::size_t>* excluded) {
    check_pair(pred, actual, "pcc_masked");
    check_mask(mask, pred.dim(pred.rank() - 1), "pcc_masked");
    double s = 0.0;
    std::size_t used = 0;
    for (auto m : mask) {
        const auto r = pearson(column(pred, m), column(actual, m));
        if (!r) {
            log_warning("pcc: channel " + std::to_string(m) + " has constant actuals; excluded");
            if (excluded) excluded->push_back(m);
            continue;
        }
        s += *r;
        ++used;
    }
    if (used == 0) throw DataError("pcc undefined: every masked channel has constant actuals");
    return s / static_cast<double>(used);
}

double subset_accuracy(const LabelMatrix& pred, const LabelMatrix& truth) {
    if (pred.size() != truth.size()) throw UsageError("subset_accuracy: row count mismatch");
    if (pred.empty()) throw UsageError("subset_accuracy: no rows");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].size() != truth[i].size()) {
            throw UsageError("subset_accuracy: width " + std::to_string(pred[i].size()) + " vs " +
                             std::to_string(truth[i].size()) + " at row " + std::to_string(i));
        }
        if (pred[i] == truth[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

LabelMatrix threshold_labels(const Tensor& logits) {
    if (logits.rank() != 2) throw DimensionError("threshold_labels expects [B, E]");
    const auto b = logits.dim(0), e = logits.dim(1);
    const auto v = logits.values();
    LabelMatrix out(b, std::vector<int>(e, 0));
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < e; ++j) out[i][j] = v[i * e + j] > 0.0 ? 1 : 0;
    return out;
}

Tensor baseline_persistence(const Tensor& x, std::size_t horizon) {
    if (horizon == 0) throw ConfigError("persistence horizon must be positive");
    if (x.rank() != 2 && x.rank() != 3) throw DimensionError("baseline_persistence expects [sl, C] or [B, sl, C]");
    const bool batched = x.rank() == 3;
    const auto b = batched ? x.dim(0) : 1;
    const auto sl = x.dim(x.rank() - 2);
    const auto c = x.dim(x.rank() - 1);
    const auto v = x.values();
    std::vector<double> out;
    out.reserve(b * horizon * c);
    for (std::size_t i = 0; i < b; ++i) {
        const auto* last = v.data() + (i * sl + sl - 1) * c;
        for (std::size_t h = 0; h < horizon; ++h) out.insert(out.end(), last, last + c);
    }
    return batched ? Tensor({b, horizon, c}, std::move(out)) : Tensor({horizon, c}, std::move(out));
}

nlohmann::ordered_json MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["task"] = task;
    j["windows"] = windows;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    auto opt = [&](const char* key, const std::optional<double>& v) {
        j[key] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    };
    opt("kpi_mse", kpi_mse);
    opt("kpi_pcc", kpi_pcc);
    opt("event_mse", event_mse);
    opt("event_pcc", event_pcc);
    opt("subset_accuracy", subset_accuracy);
    opt("baseline_mse", baseline_mse);
    opt("baseline_accuracy", baseline_accuracy);
    auto per = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < per_channel_mse.size(); ++i) {
        per[i < channel_names.size() ? channel_names[i] : std::to_string(i)] = per_channel_mse[i];
    }
    j["per_channel_mse"] = per;
    return j;
}

MetricReport MetricReport::from_json(const nlohmann::ordered_json& j) {
    MetricReport r;
    r.task = j.at("task").get<std::string>();
    r.windows = j.at("windows").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    auto opt = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        return j.at(key).get<double>();
    };
    r.kpi_mse = opt("kpi_mse");
    r.kpi_pcc = opt("kpi_pcc");
    r.event_mse = opt("event_mse");
    r.event_pcc = opt("event_pcc");
    r.subset_accuracy = opt("subset_accuracy");
    r.baseline_mse = opt("baseline_mse");
    r.baseline_accuracy = opt("baseline_accuracy");
    if (j.contains("per_channel_mse")) {
        for (const auto& [name, v] : j.at("per_channel_mse").items()) {
            r.channel_names.push_back(name);
            r.per_channel_mse.push_back(v.get<double>());
        }
    }
    return r;
}

}  // namespace automixer
