#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace automixer {

enum class CellKind { gru, lstm };
enum class Task { kpi_forecast, event_forecast, event_classify };
/// PT: finetune from a pretrained autoencoder. NPT: autoencoder starts from random init.
enum class TrainMode { pretrained, no_pretrain };

std::string to_string(CellKind kind);
std::string to_string(Task task);
std::string to_string(TrainMode mode);
CellKind parse_cell_kind(std::string_view text);
Task parse_task(std::string_view text);
TrainMode parse_train_mode(std::string_view text);

/// Model hyperparameters shared by the autoencoder, backbone and heads.
struct AutoMixerConfig {
    CellKind cell = CellKind::gru;
    double cr = 0.6;        // fraction of channels removed by the autoencoder
    std::size_t sl = 24;    // context length T
    std::size_t fl = 24;    // horizon H
    std::size_t pl = 8;     // patch length
    std::size_t nl = 8;     // mixer layers
    std::size_t fs = 2;     // feature scalar
    std::size_t hf = 16;    // = fs * pl
    std::size_t ef = 32;    // = fs * hf
    double dropout = 0.4;
    bool cc = false;        // channel-reconciliation head
    bool compress = true;   // false: plain TSMixer on the raw channels
    Task task = Task::kpi_forecast;

    /// Throws ConfigError on any inconsistency (hf/ef vs fs, sl vs pl, ranges).
    void validate() const;
    /// Canonical `key=value` lines, one per field, in a fixed order.
    std::string canonical() const;
    /// Hex SHA-256 of canonical().
    std::string hash() const;
};

}  // namespace automixer
