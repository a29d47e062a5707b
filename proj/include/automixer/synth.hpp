#pragma once

// Synthetic BizITObs data.
//
// synth_generate: KPIs follow seasonality + trend + AR(1) noise; events are
// sparse count processes (point events by default, multi-step episodes when
// duration_max > 1). Each causal event pushes a subset of KPIs through a
// lagged, geometrically decaying impulse response. Noise events touch nothing.
//
// synth_latent: C channels driven by r smooth latent factors,
// x_t = tanh(L f_t) + eps, used for compression-capacity experiments.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "automixer/data.hpp"

namespace automixer {

struct SynthSpec {
    std::size_t kpis = 4;
    std::size_t causal_events = 3;
    std::size_t noise_events = 20;
    std::size_t length = 3000;
    std::size_t lag_min = 2;
    std::size_t lag_max = 12;
    double event_prob = 0.02;          // per-step start probability
    std::size_t duration_min = 1;      // episode length range in steps
    std::size_t duration_max = 1;
    double count_mean = 1.0;           // mean count on an active step, >= 1
    double impulse_magnitude = 3.0;
    double impulse_decay = 0.7;
    std::size_t kpis_per_event = 2;
    std::size_t season_period = 24;
    double season_amplitude = 1.0;
    double trend = 0.0002;
    double ar_coef = 0.7;
    double noise_std = 0.3;
    std::int64_t start_epoch = 1700000000;
    std::int64_t interval_seconds = 300;

    /// ConfigError on nonpositive counts or inconsistent ranges.
    void validate() const;
};

struct CausalLink {
    std::size_t event = 0;  // index among event channels
    std::size_t kpi = 0;    // index among KPI channels
    std::size_t lag = 0;
    double magnitude = 0.0;

    bool operator==(const CausalLink&) const = default;
};

struct GroundTruth {
    std::vector<std::string> event_names;
    std::vector<std::string> kpi_names;
    std::vector<CausalLink> links;

    /// Text table `event,kpi,lag,magnitude` with channel names.
    void save(const std::filesystem::path& path) const;
};

struct SynthOutput {
    BizITObsFrame frame;
    GroundTruth truth;
};

SynthOutput synth_generate(const SynthSpec& spec, std::uint64_t seed);

struct LatentSpec {
    std::size_t channels = 8;
    std::size_t rank = 3;
    std::size_t kpis = 4;   // leading channels tagged biz-kpi, the rest it-event
    std::size_t length = 2000;
    double noise = 0.05;
    double ar_coef = 0.95;
    std::size_t season_period = 24;
    std::int64_t start_epoch = 1700000000;
    std::int64_t interval_seconds = 300;

    void validate() const;
};

BizITObsFrame synth_latent(const LatentSpec& spec, std::uint64_t seed);

struct Incident {
    std::string kpi;
    double deviation = 0.0;       // training-std units
    double downtime_minutes = 0.0;
    double revenue_loss = 0.0;

    bool operator==(const Incident&) const = default;
};

/// Plausible historical incidents for each KPI (downtime and revenue grow with deviation).
std::vector<Incident> synth_incidents(const std::vector<std::string>& kpi_names, std::size_t per_kpi,
                                      std::uint64_t seed);

/// `kpi,deviation,downtime_minutes,revenue_loss` with a header row.
std::vector<Incident> load_incidents(const std::filesystem::path& path);
void save_incidents(const std::vector<Incident>& incidents, const std::filesystem::path& path);

}  // namespace automixer
