#include "automixer/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <numeric>
#include <sstream>

#include "automixer/errors.hpp"
#include "automixer/tensor.hpp"

namespace automixer {

using nlohmann::ordered_json;

double round6(double v) {
    if (!std::isfinite(v) || v == 0.0) return v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::strtod(buf, nullptr);
}

std::string format_utc(double epoch_seconds) {
    const auto t = static_cast<std::time_t>(std::llround(epoch_seconds));
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

double deviation_score(const std::vector<double>& trajectory, const std::vector<double>& history, double train_std) {
    if (trajectory.empty()) return 0.0;
    if (history.empty()) throw UsageError("deviation score needs a non-empty history");
    if (!(train_std > 0.0)) throw UsageError("deviation score needs a positive training std");
    const double mean = std::accumulate(history.begin(), history.end(), 0.0) / static_cast<double>(history.size());
    double worst = 0.0;
    for (double v : trajectory) worst = std::max(worst, std::abs(v - mean));
    return worst / train_std;
}

std::optional<std::size_t> nearest_incident(const std::vector<Incident>& incidents, const std::string& kpi,
                                            double deviation) {
    std::optional<std::size_t> best;
    double best_gap = 0.0;
    for (std::size_t i = 0; i < incidents.size(); ++i) {
        if (incidents[i].kpi != kpi) continue;
        const double gap = std::abs(incidents[i].deviation - deviation);
        if (!best || gap < best_gap) {
            best = i;
            best_gap = gap;
        }
    }
    return best;
}

namespace {

double weight_for(const ReportSpec& spec, const std::string& kpi) {
    auto it = spec.weights.find(kpi);
    return it == spec.weights.end() ? 1.0 : it->second;
}

std::optional<IncidentEstimate> estimate_for(const std::vector<Incident>& incidents, const std::string& kpi,
                                             double deviation) {
    auto idx = nearest_incident(incidents, kpi, deviation);
    if (!idx) return std::nullopt;
    return IncidentEstimate{*idx, incidents[*idx]};
}

// Descending priority, ties broken by name.
template <class Entry>
void rank(std::vector<Entry>& entries, std::size_t k) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.priority != b.priority) return a.priority > b.priority;
        return a.kpi < b.kpi;
    });
    if (entries.size() > k) entries.resize(k);
}

double window_mse(const std::vector<double>& pred, const std::vector<double>& actual, double std) {
    if (pred.size() != actual.size() || pred.empty()) throw DimensionError("past forecast and actuals differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = (pred[i] - actual[i]) / std;
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

void round_tree(ordered_json& j) {
    if (j.is_number_float()) {
        j = round6(j.get<double>());
    } else if (j.is_structured()) {
        for (auto& v : j) round_tree(v);
    }
}

ordered_json estimate_json(const std::optional<IncidentEstimate>& e) {
    if (!e) return nullptr;
    return {{"incident_index", e->incident_index},
            {"incident_kpi", e->incident.kpi},
            {"incident_deviation", e->incident.deviation},
            {"downtime_minutes", e->incident.downtime_minutes},
            {"revenue_loss", e->incident.revenue_loss}};
}

std::string escape_html(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Renders a JSON scalar exactly as it appears in report.json.
std::string cell(const ordered_json& v) {
    if (v.is_null()) return "&ndash;";
    if (v.is_string()) return escape_html(v.get<std::string>());
    if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
    if (v.is_array()) {
        std::string out;
        for (const auto& x : v) out += (out.empty() ? "" : ", ") + x.dump();
        return out;
    }
    return v.dump();
}

}  // namespace

InsightReport build_report(const ReportInputs& inputs, const std::vector<Incident>& incidents,
                           const ReportSpec& spec) {
    if (spec.top_k == 0) throw ConfigError("report top_k must be at least 1");
    if (!(spec.hit_threshold > 0.0)) throw ConfigError("report hit_threshold must be positive");
    InsightReport report;
    report.generated_at = format_utc(inputs.generated_at);
    report.top_k = spec.top_k;
    report.hit_threshold = spec.hit_threshold;
    report.metrics = inputs.metrics;
    if (incidents.empty()) {
        report.notices.push_back("incident table is empty; downtime and revenue estimates are omitted");
    }
    for (const auto& k : inputs.kpis) {
        ForecastEntry f;
        f.kpi = k.name;
        f.trajectory = k.forecast;
        f.deviation = deviation_score(k.forecast, k.history, k.train_std);
        f.weight = weight_for(spec, k.name);
        f.priority = f.deviation * f.weight;
        f.estimate = estimate_for(incidents, k.name, f.deviation);
        report.forecast_view.push_back(std::move(f));

        if (k.past_actual.empty()) continue;
        PastEntry p;
        p.kpi = k.name;
        p.deviation = deviation_score(k.past_actual, k.past_history, k.train_std);
        p.priority = p.deviation * weight_for(spec, k.name);
        p.window_mse = window_mse(k.past_forecast, k.past_actual, k.train_std);
        p.hit = p.window_mse < spec.hit_threshold;
        p.estimate = estimate_for(incidents, k.name, p.deviation);
        report.past_view.push_back(std::move(p));
    }
    rank(report.forecast_view, spec.top_k);
    rank(report.past_view, spec.top_k);
    if (!incidents.empty()) {
        for (const auto& f : report.forecast_view)
            if (!f.estimate) report.notices.push_back("no historical incident for " + f.kpi);
    }
    return report;
}

ordered_json InsightReport::to_json() const {
    ordered_json forecast = ordered_json::array();
    for (const auto& f : forecast_view) {
        forecast.push_back({{"kpi", f.kpi},
                            {"deviation", f.deviation},
                            {"weight", f.weight},
                            {"priority", f.priority},
                            {"estimated_downtime_minutes",
                             f.estimate ? ordered_json(f.estimate->incident.downtime_minutes) : ordered_json(nullptr)},
                            {"estimated_revenue_impact",
                             f.estimate ? ordered_json(f.estimate->incident.revenue_loss) : ordered_json(nullptr)},
                            {"matched_incident", estimate_json(f.estimate)},
                            {"trajectory", f.trajectory}});
    }
    ordered_json past = ordered_json::array();
    double saved = 0.0, lost = 0.0;
    for (const auto& p : past_view) {
        const double revenue = p.estimate ? p.estimate->incident.revenue_loss : 0.0;
        (p.hit ? saved : lost) += revenue;
        past.push_back({{"kpi", p.kpi},
                        {"deviation", p.deviation},
                        {"priority", p.priority},
                        {"window_mse", p.window_mse},
                        {"hit", p.hit},
                        {"saved_revenue", p.estimate && p.hit ? ordered_json(revenue) : ordered_json(nullptr)},
                        {"lost_revenue", p.estimate && !p.hit ? ordered_json(revenue) : ordered_json(nullptr)},
                        {"matched_incident", estimate_json(p.estimate)}});
    }
    ordered_json j{{"format", "automixer-insight-report"},
                   {"version", 1},
                   {"generated_at", generated_at},
                   {"top_k", top_k},
                   {"hit_threshold", hit_threshold},
                   {"notices", notices},
                   {"forecast_view", forecast},
                   {"past_view", past},
                   {"past_totals", {{"saved_revenue", saved}, {"lost_revenue", lost}}},
                   {"metrics", metrics ? metrics->to_json() : ordered_json(nullptr)}};
    round_tree(j);
    return j;
}

std::string InsightReport::to_html() const {
    const auto j = to_json();
    std::ostringstream os;
    os << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
       << "<title>AutoMixer insight report</title>\n<style>\n"
       << "body{font-family:sans-serif;margin:2em;color:#222}\n"
       << "table{border-collapse:collapse;margin-bottom:2em}\n"
       << "th,td{border:1px solid #bbb;padding:4px 8px;text-align:right}\n"
       << "th{background:#eee}td.name{text-align:left}\n"
       << ".hit{color:#176117}.miss{color:#a01818}.notice{background:#fff4d0;padding:6px}\n"
       << "</style>\n</head>\n<body>\n";
    os << "<h1>Actionable insights</h1>\n<p>Generated at " << cell(j["generated_at"]) << "; top "
       << cell(j["top_k"]) << " KPIs; hit threshold " << cell(j["hit_threshold"]) << ".</p>\n";
    for (const auto& n : j["notices"]) os << "<p class=\"notice\">" << cell(n) << "</p>\n";

    os << "<h2>Forecast view</h2>\n<table>\n<tr><th>KPI</th><th>Priority</th><th>Deviation</th><th>Weight</th>"
       << "<th>Est. downtime (min)</th><th>Est. revenue impact</th><th>Matched incident</th><th>Forecast</th></tr>\n";
    for (const auto& f : j["forecast_view"]) {
        os << "<tr><td class=\"name\">" << cell(f["kpi"]) << "</td><td>" << cell(f["priority"]) << "</td><td>"
           << cell(f["deviation"]) << "</td><td>" << cell(f["weight"]) << "</td><td>"
           << cell(f["estimated_downtime_minutes"]) << "</td><td>" << cell(f["estimated_revenue_impact"])
           << "</td><td>"
           << (f["matched_incident"].is_null() ? cell(nullptr) : cell(f["matched_incident"]["incident_index"]))
           << "</td><td class=\"name\">" << cell(f["trajectory"]) << "</td></tr>\n";
    }
    os << "</table>\n";

    os << "<h2>Past view</h2>\n<table>\n<tr><th>KPI</th><th>Priority</th><th>Deviation</th><th>Window MSE</th>"
       << "<th>Forecast</th><th>Saved revenue</th><th>Lost revenue</th><th>Matched incident</th></tr>\n";
    for (const auto& p : j["past_view"]) {
        const bool hit = p["hit"].get<bool>();
        os << "<tr><td class=\"name\">" << cell(p["kpi"]) << "</td><td>" << cell(p["priority"]) << "</td><td>"
           << cell(p["deviation"]) << "</td><td>" << cell(p["window_mse"]) << "</td><td class=\""
           << (hit ? "hit\">hit" : "miss\">miss") << "</td><td>" << cell(p["saved_revenue"]) << "</td><td>"
           << cell(p["lost_revenue"]) << "</td><td>"
           << (p["matched_incident"].is_null() ? cell(nullptr) : cell(p["matched_incident"]["incident_index"]))
           << "</td></tr>\n";
    }
    os << "</table>\n<p>Saved revenue " << cell(j["past_totals"]["saved_revenue"]) << "; lost revenue "
       << cell(j["past_totals"]["lost_revenue"]) << ".</p>\n";

    if (!j["metrics"].is_null()) {
        const auto& m = j["metrics"];
        os << "<h2>Test metrics</h2>\n<table>\n";
        for (const char* key : {"task", "kpi_mse", "kpi_pcc", "event_mse", "event_pcc", "subset_accuracy",
                                "baseline_mse", "windows"}) {
            if (m.contains(key)) os << "<tr><th>" << key << "</th><td>" << cell(m[key]) << "</td></tr>\n";
        }
        os << "</table>\n";
    }
    os << "</body>\n</html>\n";
    return os.str();
}

ReportInputs collect_report_inputs(const AutoMixerModel& model, const PreparedDataset& data) {
    if (model.config().task == Task::event_classify) {
        throw ConfigError("the insight report needs a forecasting model, got task event-classify");
    }
    const auto& schema = data.schema();
    if (model.channels() != schema.size()) {
        throw SchemaError("model has " + std::to_string(model.channels()) + " channels, data has " +
                          std::to_string(schema.size()));
    }
    const auto& test = data.raw().test;
    const std::size_t sl = data.sl(), fl = data.fl(), c = schema.size();
    if (test.rows() < sl + fl) throw DataError("test split too short for the insight report");
    const auto& norm = data.normalizer();

    auto forecast_from = [&](std::size_t begin) {
        std::vector<double> x(sl * c);
        for (std::size_t t = 0; t < sl; ++t)
            for (std::size_t ch = 0; ch < c; ++ch) x[t * c + ch] = norm.apply_value(ch, test.at(begin + t, ch));
        NoGradGuard guard;
        const auto y = model.forecast(Tensor({1, sl, c}, std::move(x)), ForwardContext{});
        std::vector<double> raw(fl * c);
        for (std::size_t t = 0; t < fl; ++t)
            for (std::size_t ch = 0; ch < c; ++ch) raw[t * c + ch] = norm.inverse_value(ch, y.at(t * c + ch));
        return raw;
    };

    const std::size_t now = test.rows() - sl;
    const std::size_t past = test.rows() - sl - fl;
    const auto next = forecast_from(now);
    const auto prev = forecast_from(past);

    ReportInputs in;
    in.generated_at = test.timestamps.back();
    for (auto ch : schema.kpi_indices()) {
        KpiSeries k;
        k.name = schema[ch].name;
        k.train_std = norm.stddev()[ch];
        for (std::size_t t = 0; t < sl; ++t) {
            k.history.push_back(test.at(now + t, ch));
            k.past_history.push_back(test.at(past + t, ch));
        }
        for (std::size_t t = 0; t < fl; ++t) {
            k.forecast.push_back(next[t * c + ch]);
            k.past_forecast.push_back(prev[t * c + ch]);
            k.past_actual.push_back(test.at(past + sl + t, ch));
        }
        in.kpis.push_back(std::move(k));
    }
    return in;
}

std::vector<std::filesystem::path> write_report(const InsightReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto json_path = dir / "report.json";
    const auto html_path = dir / "report.html";
    {
        std::ofstream out(json_path, std::ios::binary);
        if (!out) throw DataError("cannot write " + json_path.string());
        out << report.to_json().dump(2) << '\n';
    }
    {
        std::ofstream out(html_path, std::ios::binary);
        if (!out) throw DataError("cannot write " + html_path.string());
        out << report.to_html();
    }
    return {json_path, html_path};
}

}  // namespace automixer
