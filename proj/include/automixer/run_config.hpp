#pragma once

// Run configuration: an INI-style `key = value` file with [data], [model],
// [train], [synth], [report] and [bench] sections. Keys are documented in
// docs/config.md; unknown sections or keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "automixer/config.hpp"
#include "automixer/data.hpp"
#include "automixer/harness.hpp"
#include "automixer/report.hpp"
#include "automixer/synth.hpp"
#include "automixer/training.hpp"
#include "json.hpp"

namespace automixer {

enum class SynthKind { events, latent };

struct RunConfig {
    // [data]; empty paths default to files under <out>/data
    std::string series;
    std::string schema;
    std::string incidents;
    SplitRatios split;

    // [model]; hf and ef follow fs and pl unless given explicitly
    AutoMixerConfig model;
    bool hf_explicit = false;
    bool ef_explicit = false;

    // [train]
    TrainMode mode = TrainMode::pretrained;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double clip = 5.0;
    std::size_t epochs_max = 100;
    std::size_t patience = 10;
    std::size_t pretrain_epochs_max = 100;
    std::size_t pretrain_patience = 10;
    std::uint64_t seed = 0;

    // [synth]
    SynthKind synth_kind = SynthKind::events;
    SynthSpec synth;
    LatentSpec latent;
    std::size_t incidents_per_kpi = 6;

    // [report]
    ReportSpec report;

    // [bench]
    std::vector<std::string> variants;  // empty: all default variants
    std::vector<double> cr_list{0.2, 0.4, 0.6, 0.8};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::string focus_variant = "AutoMixer GRU";  // sweep and ablation target

    /// Recomputes hf = fs * pl and ef = fs * hf where they were not set explicitly.
    void resolve_derived();
    /// Cross-field checks (model consistency, split ratios, synth ranges).
    void validate() const;

    TrainSpec pretrain_spec() const;
    TrainSpec finetune_spec() const;
    HarnessSpec harness_spec() const;

    /// Every key with its effective value, in section order.
    nlohmann::ordered_json to_json() const;
};

/// Applies one `section.key=value` assignment. ConfigError for unknown keys or bad values.
void apply_setting(RunConfig& config, const std::string& section, const std::string& key, const std::string& value);

/// `section.key=value`, as given on the command line.
void apply_override(RunConfig& config, const std::string& assignment);

/// Parses INI text (`#`/`;` comments). `origin` prefixes error messages.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");

/// Rebuilds a config from RunConfig::to_json output (e.g. a run manifest's snapshot).
RunConfig run_config_from_json(const nlohmann::ordered_json& j);

/// ConfigError naming the path when the file is missing. A `.json` path is
/// read as a run manifest and its config snapshot is replayed.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace automixer
