#include "automixer/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "automixer/errors.hpp"

namespace automixer {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a number");
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
    return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "an integer");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "true or false");
}

template <class F>
auto parse_enum(const std::string& key, const std::string& v, F parse) {
    try {
        return parse(v);
    } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto sz = [](std::size_t RunConfig::*field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) {
                c.*field = static_cast<std::size_t>(to_uint(k, v));
            };
        };
        auto dbl = [](double RunConfig::*field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = to_double(k, v); };
        };
        auto model_sz = [](std::size_t AutoMixerConfig::*field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) {
                c.model.*field = static_cast<std::size_t>(to_uint(k, v));
            };
        };
        auto synth_sz = [](std::size_t SynthSpec::*field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) {
                c.synth.*field = static_cast<std::size_t>(to_uint(k, v));
            };
        };
        auto synth_dbl = [](double SynthSpec::*field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) { c.synth.*field = to_double(k, v); };
        };
        auto latent_sz = [](std::size_t LatentSpec::*field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) {
                c.latent.*field = static_cast<std::size_t>(to_uint(k, v));
            };
        };
        auto latent_dbl = [](double LatentSpec::*field) {
            return [field](RunConfig& c, const std::string& k, const std::string& v) {
                c.latent.*field = to_double(k, v);
            };
        };

        t["data.series"] = [](RunConfig& c, const std::string&, const std::string& v) { c.series = v; };
        t["data.schema"] = [](RunConfig& c, const std::string&, const std::string& v) { c.schema = v; };
        t["data.incidents"] = [](RunConfig& c, const std::string&, const std::string& v) { c.incidents = v; };
        t["data.train_ratio"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.split.train = to_double(k, v); };
        t["data.val_ratio"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.split.val = to_double(k, v); };
        t["data.test_ratio"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.split.test = to_double(k, v); };

        t["model.cell"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.cell = parse_enum(k, v, parse_cell_kind);
        };
        t["model.cr"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.model.cr = to_double(k, v); };
        t["model.sl"] = model_sz(&AutoMixerConfig::sl);
        t["model.fl"] = model_sz(&AutoMixerConfig::fl);
        t["model.pl"] = model_sz(&AutoMixerConfig::pl);
        t["model.nl"] = model_sz(&AutoMixerConfig::nl);
        t["model.fs"] = model_sz(&AutoMixerConfig::fs);
        t["model.hf"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.hf = static_cast<std::size_t>(to_uint(k, v));
            c.hf_explicit = true;
        };
        t["model.ef"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.ef = static_cast<std::size_t>(to_uint(k, v));
            c.ef_explicit = true;
        };
        t["model.do"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.model.dropout = to_double(k, v); };
        t["model.cc"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.model.cc = to_bool(k, v); };
        t["model.compress"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.compress = to_bool(k, v);
        };
        t["model.task"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.task = parse_enum(k, v, parse_task);
        };

        t["train.mode"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.mode = parse_enum(k, v, parse_train_mode);
        };
        t["train.b"] = sz(&RunConfig::batch_size);
        t["train.lr"] = dbl(&RunConfig::lr);
        t["train.clip"] = dbl(&RunConfig::clip);
        t["train.epochs_max"] = sz(&RunConfig::epochs_max);
        t["train.patience"] = sz(&RunConfig::patience);
        t["train.pretrain_epochs_max"] = sz(&RunConfig::pretrain_epochs_max);
        t["train.pretrain_patience"] = sz(&RunConfig::pretrain_patience);
        t["train.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_uint(k, v); };

        t["synth.kind"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "events") c.synth_kind = SynthKind::events;
            else if (v == "latent") c.synth_kind = SynthKind::latent;
            else bad_value(k, v, "events or latent");
        };
        t["synth.kpis"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.kpis = c.latent.kpis = static_cast<std::size_t>(to_uint(k, v));
        };
        t["synth.length"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.length = c.latent.length = static_cast<std::size_t>(to_uint(k, v));
        };
        t["synth.start_epoch"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.start_epoch = c.latent.start_epoch = to_int(k, v);
        };
        t["synth.interval_seconds"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.interval_seconds = c.latent.interval_seconds = to_int(k, v);
        };
        t["synth.season_period"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.season_period = c.latent.season_period = static_cast<std::size_t>(to_uint(k, v));
        };
        t["synth.ar_coef"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.synth.ar_coef = c.latent.ar_coef = to_double(k, v);
        };
        t["synth.causal_events"] = synth_sz(&SynthSpec::causal_events);
        t["synth.noise_events"] = synth_sz(&SynthSpec::noise_events);
        t["synth.lag_min"] = synth_sz(&SynthSpec::lag_min);
        t["synth.lag_max"] = synth_sz(&SynthSpec::lag_max);
        t["synth.event_prob"] = synth_dbl(&SynthSpec::event_prob);
        t["synth.duration_min"] = synth_sz(&SynthSpec::duration_min);
        t["synth.duration_max"] = synth_sz(&SynthSpec::duration_max);
        t["synth.count_mean"] = synth_dbl(&SynthSpec::count_mean);
        t["synth.impulse_magnitude"] = synth_dbl(&SynthSpec::impulse_magnitude);
        t["synth.impulse_decay"] = synth_dbl(&SynthSpec::impulse_decay);
        t["synth.kpis_per_event"] = synth_sz(&SynthSpec::kpis_per_event);
        t["synth.season_amplitude"] = synth_dbl(&SynthSpec::season_amplitude);
        t["synth.trend"] = synth_dbl(&SynthSpec::trend);
        t["synth.noise_std"] = synth_dbl(&SynthSpec::noise_std);
        t["synth.latent_channels"] = latent_sz(&LatentSpec::channels);
        t["synth.latent_rank"] = latent_sz(&LatentSpec::rank);
        t["synth.latent_noise"] = latent_dbl(&LatentSpec::noise);
        t["synth.incidents_per_kpi"] = sz(&RunConfig::incidents_per_kpi);

        t["report.top_k"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.report.top_k = static_cast<std::size_t>(to_uint(k, v));
        };
        t["report.hit_threshold"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.report.hit_threshold = to_double(k, v);
        };

        t["bench.variants"] = [](RunConfig& c, const std::string&, const std::string& v) {
            c.variants = split_list(v);
            for (const auto& name : c.variants) variant_by_name(name);
        };
        t["bench.cr_list"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.cr_list.clear();
            for (const auto& item : split_list(v)) c.cr_list.push_back(to_double(k, item));
        };
        t["bench.seeds"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.seeds.clear();
            for (const auto& item : split_list(v)) c.seeds.push_back(to_uint(k, item));
        };
        t["bench.variant"] = [](RunConfig& c, const std::string&, const std::string& v) {
            variant_by_name(v);
            c.focus_variant = v;
        };
        return t;
    }();
    return table;
}

}  // namespace

void apply_setting(RunConfig& config, const std::string& section, const std::string& key, const std::string& value) {
    const std::string full = section + "." + key;
    // per-KPI priority weights: [report] weight.<kpi> = value
    if (section == "report" && key.rfind("weight.", 0) == 0 && key.size() > 7) {
        const double w = to_double(full, value);
        if (w < 0.0) bad_value(full, value, "a non-negative weight");
        config.report.weights[key.substr(7)] = w;
        return;
    }
    const auto& table = setters();
    auto it = table.find(full);
    if (it == table.end()) throw ConfigError("unknown config key '" + full + "'");
    it->second(config, full, value);
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    }
    apply_setting(config, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
                  trim(assignment.substr(eq + 1)));
    config.resolve_derived();
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    RunConfig config;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    static const std::vector<std::string> sections{"data", "model", "train", "synth", "report", "bench"};
    while (std::getline(in, line)) {
        ++lineno;
        const auto where = origin + ":" + std::to_string(lineno) + ": ";
        auto s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        // trailing comment: '#' or ';' after whitespace
        for (std::size_t i = 1; i < s.size(); ++i) {
            if ((s[i] == '#' || s[i] == ';') && std::isspace(static_cast<unsigned char>(s[i - 1]))) {
                s = trim(s.substr(0, i));
                break;
            }
        }
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(where + "malformed section header '" + s + "'");
            section = trim(s.substr(1, s.size() - 2));
            if (std::find(sections.begin(), sections.end(), section) == sections.end()) {
                throw ConfigError(where + "unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value, got '" + s + "'");
        if (section.empty()) throw ConfigError(where + "key outside of any section");
        try {
            apply_setting(config, section, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    config.resolve_derived();
    return config;
}

RunConfig run_config_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_object()) throw ConfigError("config snapshot must be an object");
    auto text = [](const nlohmann::ordered_json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_array()) {
            std::string out;
            for (const auto& x : v) out += (out.empty() ? "" : ",") + (x.is_string() ? x.get<std::string>() : x.dump());
            return out;
        }
        return v.dump();
    };
    RunConfig config;
    for (const auto& [section, keys] : j.items()) {
        if (!keys.is_object()) throw ConfigError("config snapshot section '" + section + "' must be an object");
        for (const auto& [key, value] : keys.items()) {
            if (section == "report" && key == "weights") {
                for (const auto& [kpi, w] : value.items()) apply_setting(config, section, "weight." + kpi, text(w));
            } else {
                apply_setting(config, section, key, text(value));
            }
        }
    }
    config.resolve_derived();
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    if (path.extension() == ".json") {
        try {
            const auto j = nlohmann::ordered_json::parse(buf.str());
            if (!j.contains("config")) throw ConfigError(path.string() + ": manifest has no config snapshot");
            return run_config_from_json(j["config"]);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
    }
    return parse_run_config(buf.str(), path.string());
}

void RunConfig::resolve_derived() {
    if (!hf_explicit) model.hf = model.fs * model.pl;
    if (!ef_explicit) model.ef = model.fs * model.hf;
}

void RunConfig::validate() const {
    model.validate();
    const double total = split.train + split.val + split.test;
    if (split.train <= 0.0 || split.val <= 0.0 || split.test <= 0.0 || std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be positive and sum to 1");
    }
    pretrain_spec().validate();
    finetune_spec().validate();
    if (synth_kind == SynthKind::events) synth.validate();
    else latent.validate();
    if (report.top_k == 0) throw ConfigError("report.top_k must be at least 1");
    if (!(report.hit_threshold > 0.0)) throw ConfigError("report.hit_threshold must be positive");
    if (seeds.empty()) throw ConfigError("bench.seeds must list at least one seed");
    if (cr_list.empty()) throw ConfigError("bench.cr_list must list at least one ratio");
}

TrainSpec RunConfig::pretrain_spec() const {
    TrainSpec s;
    s.mode = mode;
    s.epochs_max = pretrain_epochs_max;
    s.patience = pretrain_patience;
    s.batch_size = batch_size;
    s.lr = lr;
    s.clip_norm = clip;
    s.seed = seed;
    return s;
}

TrainSpec RunConfig::finetune_spec() const {
    TrainSpec s = pretrain_spec();
    s.epochs_max = epochs_max;
    s.patience = patience;
    return s;
}

HarnessSpec RunConfig::harness_spec() const {
    HarnessSpec h;
    h.config = model;
    h.pretrain = pretrain_spec();
    h.finetune = finetune_spec();
    h.seeds = seeds;
    return h;
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json weights = nlohmann::ordered_json::object();
    for (const auto& [k, v] : report.weights) weights[k] = v;
    return {
        {"data",
         {{"series", series},
          {"schema", schema},
          {"incidents", incidents},
          {"train_ratio", split.train},
          {"val_ratio", split.val},
          {"test_ratio", split.test}}},
        {"model",
         {{"cell", to_string(model.cell)},
          {"cr", model.cr},
          {"sl", model.sl},
          {"fl", model.fl},
          {"pl", model.pl},
          {"nl", model.nl},
          {"fs", model.fs},
          {"hf", model.hf},
          {"ef", model.ef},
          {"do", model.dropout},
          {"cc", model.cc},
          {"compress", model.compress},
          {"task", to_string(model.task)}}},
        {"train",
         {{"mode", to_string(mode)},
          {"b", batch_size},
          {"lr", lr},
          {"clip", clip},
          {"epochs_max", epochs_max},
          {"patience", patience},
          {"pretrain_epochs_max", pretrain_epochs_max},
          {"pretrain_patience", pretrain_patience},
          {"seed", seed}}},
        {"synth",
         {{"kind", synth_kind == SynthKind::events ? "events" : "latent"},
          {"kpis", synth.kpis},
          {"length", synth.length},
          {"start_epoch", synth.start_epoch},
          {"interval_seconds", synth.interval_seconds},
          {"season_period", synth.season_period},
          {"ar_coef", synth.ar_coef},
          {"causal_events", synth.causal_events},
          {"noise_events", synth.noise_events},
          {"lag_min", synth.lag_min},
          {"lag_max", synth.lag_max},
          {"event_prob", synth.event_prob},
          {"duration_min", synth.duration_min},
          {"duration_max", synth.duration_max},
          {"count_mean", synth.count_mean},
          {"impulse_magnitude", synth.impulse_magnitude},
          {"impulse_decay", synth.impulse_decay},
          {"kpis_per_event", synth.kpis_per_event},
          {"season_amplitude", synth.season_amplitude},
          {"trend", synth.trend},
          {"noise_std", synth.noise_std},
          {"latent_channels", latent.channels},
          {"latent_rank", latent.rank},
          {"latent_noise", latent.noise},
          {"incidents_per_kpi", incidents_per_kpi}}},
        {"report", {{"top_k", report.top_k}, {"hit_threshold", report.hit_threshold}, {"weights", weights}}},
        {"bench", {{"variants", variants}, {"cr_list", cr_list}, {"seeds", seeds}, {"variant", focus_variant}}},
    };
}

}  // namespace automixer
