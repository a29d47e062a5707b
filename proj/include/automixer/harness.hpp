#pragma once

// Benchmark, compression-ratio sweep and pretraining ablation over one
// prepared dataset. Every cell is an independent (variant, seed) run; a
// failing run becomes a failed cell and the table is still produced.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "automixer/config.hpp"
#include "automixer/data.hpp"
#include "automixer/metrics.hpp"
#include "automixer/training.hpp"
#include "json.hpp"

namespace automixer {

struct Variant {
    std::string name;
    bool persistence = false;
    bool compress = true;
    CellKind cell = CellKind::gru;
    bool cc = false;

    /// Applies the variant's structural switches to a base config.
    AutoMixerConfig apply(AutoMixerConfig base) const;
};

/// AutoMixer GRU, AutoMixer GRU CC, AutoMixer LSTM, AutoMixer LSTM CC, TSMixer, TSMixer CC, Persistence.
std::vector<Variant> default_variants();
/// Looks a variant up by name (case-sensitive); ConfigError if unknown.
Variant variant_by_name(const std::string& name);

struct BenchCell {
    std::string variant;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::optional<double> mse;   // task-masked test MSE (forecasting)
    std::optional<double> pcc;   // task-masked test PCC (forecasting)
    std::optional<double> accuracy;  // subset accuracy (classification)
    std::optional<double> val_loss;

    nlohmann::ordered_json to_json() const;
};

enum class Marker { none, best, second };

struct BenchRow {
    std::string variant;
    std::optional<double> mse, pcc, accuracy;  // medians over successful seeds
    Marker mse_marker = Marker::none;
    Marker pcc_marker = Marker::none;
    Marker accuracy_marker = Marker::none;
    std::size_t failed = 0;
};

struct BenchTable {
    std::string task;
    std::vector<BenchRow> rows;
    std::vector<BenchCell> cells;

    const BenchRow* row(const std::string& variant) const;
    /// Aligned text with `*` for best and `+` for second best per column.
    std::string to_text() const;
    /// One JSON object per cell, then one per row.
    std::string to_jsonl() const;
};

double median(std::vector<double> values);

/// Recomputes medians and markers from `cells` (row order follows first appearance).
void assemble_rows(BenchTable& table);

using CellSink = std::function<void(const BenchCell&)>;

struct HarnessSpec {
    AutoMixerConfig config;   // base config; variants override cell/cc/compress
    TrainSpec pretrain;       // seed is replaced per run
    TrainSpec finetune;       // mode decides PT vs NPT for AutoMixer variants
    std::vector<std::uint64_t> seeds{0};
    CellSink on_cell;         // progress hook
};

BenchTable run_benchmark(const PreparedDataset& data, const std::vector<Variant>& variants, const HarnessSpec& spec);

struct SweepEntry {
    double cr = 0.0;
    bool feasible = false;
    std::size_t compressed = 0;
    std::optional<double> val_mse;   // median best validation loss
    std::optional<double> test_mse;  // median task-masked test MSE
    std::string error;
};

struct SweepTable {
    std::string variant;
    std::vector<SweepEntry> entries;
    std::optional<double> selected_cr;  // argmin of the validation column

    std::string to_text() const;
    std::string to_jsonl() const;
};

/// ConfigError when every cr is infeasible for the dataset's channel count.
SweepTable sweep_cr(const PreparedDataset& data, const std::vector<double>& cr_list, const Variant& variant,
                    const HarnessSpec& spec);

struct AblationPair {
    std::uint64_t seed = 0;
    std::optional<double> pt_mse, npt_mse;
    std::string error;
};

struct AblationTable {
    std::string variant;
    std::vector<AblationPair> pairs;
    std::optional<double> median_pt, median_npt;
    std::optional<double> improvement_pct;  // (NPT - PT) / NPT * 100 on the medians

    std::string to_text() const;
    std::string to_jsonl() const;
};

AblationTable ablate_pretraining(const PreparedDataset& data, const Variant& variant, const HarnessSpec& spec);

/// Task-masked test MSE of a report (KPI mask, or event mask for event-forecast).
std::optional<double> task_mse(const MetricReport& report);
std::optional<double> task_pcc(const MetricReport& report);

}  // namespace automixer
