#pragma once

// Static actionable-insight report: a forecast view ranking KPIs by how far
// their forecast leaves recent history, and a past view checking how the
// previous period's forecast compared with what happened.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "automixer/data.hpp"
#include "automixer/metrics.hpp"
#include "automixer/model.hpp"
#include "automixer/synth.hpp"
#include "json.hpp"

namespace automixer {

struct ReportSpec {
    std::size_t top_k = 3;
    double hit_threshold = 0.25;             // masked window MSE, normalized units
    std::map<std::string, double> weights;   // per-KPI priority weight, default 1
};

/// Raw-unit series for one KPI, as the report sees it.
struct KpiSeries {
    std::string name;
    double train_std = 1.0;
    std::vector<double> history;       // trailing context before the forecast
    std::vector<double> forecast;      // next-period forecast
    std::vector<double> past_history;  // context of the last complete test window
    std::vector<double> past_forecast;
    std::vector<double> past_actual;
};

struct ReportInputs {
    double generated_at = 0.0;  // epoch seconds of the last observed row
    std::vector<KpiSeries> kpis;
    std::optional<MetricReport> metrics;
};

struct IncidentEstimate {
    std::size_t incident_index = 0;  // row in the incident table
    Incident incident;
};

struct ForecastEntry {
    std::string kpi;
    std::vector<double> trajectory;
    double deviation = 0.0;
    double weight = 1.0;
    double priority = 0.0;
    std::optional<IncidentEstimate> estimate;
};

struct PastEntry {
    std::string kpi;
    double deviation = 0.0;  // realized deviation of the actuals
    double priority = 0.0;
    double window_mse = 0.0;
    bool hit = false;
    std::optional<IncidentEstimate> estimate;  // revenue counts as saved on a hit, lost on a miss
};

struct InsightReport {
    std::string generated_at;  // ISO-8601 UTC
    std::size_t top_k = 0;
    double hit_threshold = 0.0;
    std::vector<ForecastEntry> forecast_view;
    std::vector<PastEntry> past_view;
    std::vector<std::string> notices;
    std::optional<MetricReport> metrics;

    /// Stable key order; every double rounded to 6 significant digits.
    nlohmann::ordered_json to_json() const;
    /// Self-contained page rendering only values present in to_json().
    std::string to_html() const;
};

/// max |v - mean(history)| / train_std; 0 for an empty trajectory.
double deviation_score(const std::vector<double>& trajectory, const std::vector<double>& history, double train_std);

/// Index of the incident for `kpi` whose deviation is closest to `deviation`
/// (first in table order on ties); nullopt when the KPI has no incidents.
std::optional<std::size_t> nearest_incident(const std::vector<Incident>& incidents, const std::string& kpi,
                                            double deviation);

/// Rounds to 6 significant digits (non-finite values pass through).
double round6(double v);

InsightReport build_report(const ReportInputs& inputs, const std::vector<Incident>& incidents,
                           const ReportSpec& spec);

/// Forecasts the period after the data and replays the last complete test
/// window. ConfigError for a classification model.
ReportInputs collect_report_inputs(const AutoMixerModel& model, const PreparedDataset& data);

/// Writes report.json and report.html into `dir`; returns their paths.
std::vector<std::filesystem::path> write_report(const InsightReport& report, const std::filesystem::path& dir);

std::string format_utc(double epoch_seconds);

}  // namespace automixer
