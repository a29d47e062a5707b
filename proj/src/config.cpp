#include "automixer/config.hpp"

#include <sstream>

#include "automixer/errors.hpp"
#include "automixer/hashing.hpp"

namespace automixer {

std::string to_string(CellKind kind) { return kind == CellKind::gru ? "gru" : "lstm"; }

std::string to_string(Task task) {
    switch (task) {
        case Task::kpi_forecast: return "kpi-forecast";
        case Task::event_forecast: return "event-forecast";
        case Task::event_classify: return "event-classify";
    }
    return "?";
}

std::string to_string(TrainMode mode) { return mode == TrainMode::pretrained ? "PT" : "NPT"; }

CellKind parse_cell_kind(std::string_view text) {
    if (text == "gru") return CellKind::gru;
    if (text == "lstm") return CellKind::lstm;
    throw ConfigError("unknown cell kind '" + std::string(text) + "' (expected gru|lstm)");
}

Task parse_task(std::string_view text) {
    if (text == "kpi-forecast") return Task::kpi_forecast;
    if (text == "event-forecast") return Task::event_forecast;
    if (text == "event-classify") return Task::event_classify;
    throw ConfigError("unknown task '" + std::string(text) +
                      "' (expected kpi-forecast|event-forecast|event-classify)");
}

TrainMode parse_train_mode(std::string_view text) {
    if (text == "PT" || text == "pt") return TrainMode::pretrained;
    if (text == "NPT" || text == "npt") return TrainMode::no_pretrain;
    throw ConfigError("unknown training mode '" + std::string(text) + "' (expected PT|NPT)");
}

void AutoMixerConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (sl == 0 || fl == 0 || pl == 0 || fs == 0) fail("sl, fl, pl and fs must be positive");
    if (sl % pl != 0) {
        fail("context length sl=" + std::to_string(sl) + " is not a multiple of patch length pl=" +
             std::to_string(pl));
    }
    if (hf != fs * pl) {
        fail("hf=" + std::to_string(hf) + " inconsistent with fs*pl=" + std::to_string(fs * pl));
    }
    if (ef != fs * hf) {
        fail("ef=" + std::to_string(ef) + " inconsistent with fs*hf=" + std::to_string(fs * hf));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (compress && !(cr > 0.0 && cr < 1.0)) fail("compression ratio cr must lie in (0, 1)");
}

std::string AutoMixerConfig::canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "cell=" << to_string(cell) << '\n'
       << "cr=" << cr << '\n'
       << "sl=" << sl << '\n'
       << "fl=" << fl << '\n'
       << "pl=" << pl << '\n'
       << "nl=" << nl << '\n'
       << "fs=" << fs << '\n'
       << "hf=" << hf << '\n'
       << "ef=" << ef << '\n'
       << "dropout=" << dropout << '\n'
       << "cc=" << (cc ? "true" : "false") << '\n'
       << "compress=" << (compress ? "true" : "false") << '\n'
       << "task=" << to_string(task) << '\n';
    return os.str();
}

std::string AutoMixerConfig::hash() const { return sha256_hex(canonical()); }

}  // namespace automixer
