#include "automixer/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include "automixer/errors.hpp"

namespace automixer {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

WarningSink& sink_slot() {
    static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

bool parse_double(std::string_view text, double& out) {
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, out);
    return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

int parse_int(std::string_view text, std::size_t pos, std::size_t len) {
    int v = 0;
    const auto* b = text.data() + pos;
    const auto res = std::from_chars(b, b + len, v);
    if (res.ec != std::errc() || res.ptr != b + len) throw DataError("bad timestamp '" + std::string(text) + "'");
    return v;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(sink_mutex());
    auto previous = std::move(sink_slot());
    sink_slot() = std::move(sink);
    return previous;
}

void log_warning(std::string_view message) {
    std::lock_guard lock(sink_mutex());
    if (sink_slot()) sink_slot()(message);
}

// ---- schema ---------------------------------------------------------------

std::string to_string(ChannelRole role) { return role == ChannelRole::biz_kpi ? "biz-kpi" : "it-event"; }

ChannelRole parse_channel_role(std::string_view text) {
    if (text == "biz-kpi") return ChannelRole::biz_kpi;
    if (text == "it-event") return ChannelRole::it_event;
    throw DataError("unknown channel role '" + std::string(text) + "' (expected biz-kpi|it-event)");
}

ChannelSchema::ChannelSchema(std::vector<ChannelDescriptor> channels) : channels_(std::move(channels)) {
    std::set<std::string> seen;
    for (const auto& c : channels_) {
        if (c.name.empty()) throw DataError("schema contains an empty channel name");
        if (!seen.insert(c.name).second) throw DataError("duplicate channel name '" + c.name + "'");
    }
}

ChannelSchema ChannelSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file " + path.string());
    std::vector<ChannelDescriptor> channels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto fields = split_commas(t);
        if (fields.size() != 2) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected `name,role`");
        }
        if (channels.empty() && fields[0] == "name" && fields[1] == "role") continue;
        try {
            channels.push_back({std::string(fields[0]), parse_channel_role(fields[1])});
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (channels.empty()) throw DataError("schema file " + path.string() + " lists no channels");
    return ChannelSchema(std::move(channels));
}

void ChannelSchema::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "name,role\n";
    for (const auto& c : channels_) out << c.name << ',' << to_string(c.role) << '\n';
}

std::vector<std::size_t> ChannelSchema::kpi_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < channels_.size(); ++i)
        if (channels_[i].role == ChannelRole::biz_kpi) idx.push_back(i);
    return idx;
}

std::vector<std::size_t> ChannelSchema::event_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < channels_.size(); ++i)
        if (channels_[i].role == ChannelRole::it_event) idx.push_back(i);
    return idx;
}

void ChannelSchema::require_both_roles() const {
    if (kpi_indices().empty()) throw DataError("schema has no biz-kpi channel");
    if (event_indices().empty()) throw DataError("schema has no it-event channel");
}

// ---- frames ---------------------------------------------------------------

BizITObsFrame BizITObsFrame::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows()) throw UsageError("frame slice out of range");
    BizITObsFrame out;
    out.schema = schema;
    out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                          timestamps.begin() + static_cast<std::ptrdiff_t>(end));
    const auto c = channels();
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * c),
                      values.begin() + static_cast<std::ptrdiff_t>(end * c));
    return out;
}

void BizITObsFrame::validate() const {
    if (values.size() != rows() * channels()) throw DataError("frame values do not match rows x channels");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw DataError("non-finite value at row " + std::to_string(i / channels() + 1) + ", column '" +
                            schema[i % channels()].name + "'");
        }
    }
    for (std::size_t r = 1; r < rows(); ++r) {
        if (!(timestamps[r] > timestamps[r - 1])) {
            throw DataError("timestamps not strictly increasing at data row " + std::to_string(r + 1));
        }
    }
    if (rows() > 2) {
        std::vector<double> gaps(rows() - 1);
        for (std::size_t r = 1; r < rows(); ++r) gaps[r - 1] = timestamps[r] - timestamps[r - 1];
        auto sorted = gaps;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
        const double median = sorted[sorted.size() / 2];
        for (std::size_t i = 0; i < gaps.size(); ++i) {
            if (std::abs(gaps[i] - median) > 0.01 * median) {
                throw DataError("timestamps not equally spaced at data row " + std::to_string(i + 2));
            }
        }
    }
}

double parse_timestamp(std::string_view text) {
    text = trim(text);
    double numeric = 0.0;
    if (parse_double(text, numeric)) return numeric;
    // YYYY-MM-DD[T ]HH:MM:SS[Z]
    if (text.size() >= 19 && text[4] == '-' && text[7] == '-' && (text[10] == 'T' || text[10] == ' ') &&
        text[13] == ':' && text[16] == ':' && (text.size() == 19 || (text.size() == 20 && text[19] == 'Z'))) {
        using namespace std::chrono;
        const year_month_day ymd{year{parse_int(text, 0, 4)}, month{static_cast<unsigned>(parse_int(text, 5, 2))},
                                 day{static_cast<unsigned>(parse_int(text, 8, 2))}};
        if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
        const auto days = sys_days{ymd}.time_since_epoch().count();
        const int hh = parse_int(text, 11, 2), mm = parse_int(text, 14, 2), ss = parse_int(text, 17, 2);
        if (hh > 23 || mm > 59 || ss > 60) throw DataError("invalid clock time '" + std::string(text) + "'");
        return static_cast<double>(days) * 86400.0 + hh * 3600.0 + mm * 60.0 + ss;
    }
    throw DataError("unparseable timestamp '" + std::string(text) + "'");
}

BizITObsFrame load_frame(const std::filesystem::path& data_path, const std::filesystem::path& schema_path) {
    BizITObsFrame frame;
    frame.schema = ChannelSchema::load(schema_path);
    std::ifstream in(data_path);
    if (!in) throw DataError("cannot open data file " + data_path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("data file " + data_path.string() + " is empty");
    const auto header = split_commas(line);
    if (header.size() != frame.schema.size() + 1) {
        throw DataError("header has " + std::to_string(header.size() - 1) + " channel columns, schema lists " +
                        std::to_string(frame.schema.size()));
    }
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c] != frame.schema[c - 1].name) {
            throw DataError("unknown column '" + std::string(header[c]) + "' at position " + std::to_string(c + 1) +
                            " (schema expects '" + frame.schema[c - 1].name + "')");
        }
    }
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()));
        }
        try {
            frame.timestamps.push_back(parse_timestamp(fields[0]));
        } catch (const DataError& e) {
            throw DataError("row " + std::to_string(row) + ", column 1: " + e.what());
        }
        for (std::size_t c = 1; c < fields.size(); ++c) {
            double v = 0.0;
            if (!parse_double(fields[c], v)) {
                throw DataError("row " + std::to_string(row) + ", column '" + std::string(header[c]) +
                                "': non-numeric value '" + std::string(fields[c]) + "'");
            }
            frame.values.push_back(v);
        }
    }
    frame.validate();
    return frame;
}

void save_frame(const BizITObsFrame& frame, const std::filesystem::path& data_path) {
    std::ofstream out(data_path);
    if (!out) throw DataError("cannot write " + data_path.string());
    out << "timestamp";
    for (const auto& c : frame.schema.channels()) out << ',' << c.name;
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t r = 0; r < frame.rows(); ++r) {
        out << static_cast<long long>(std::llround(frame.timestamps[r]));
        for (std::size_t c = 0; c < frame.channels(); ++c) out << ',' << frame.at(r, c);
        out << '\n';
    }
}

// ---- splitting and normalization -------------------------------------------

FrameSplits chronological_split(const BizITObsFrame& frame, SplitRatios ratios, std::size_t sl, std::size_t fl) {
    const double total = ratios.train + ratios.val + ratios.test;
    if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0 || std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be positive and sum to 1");
    }
    const auto n = frame.rows();
    const auto minimum = 3 * (sl + fl);
    if (n < minimum) {
        throw DataError("frame has " + std::to_string(n) + " rows; at least " + std::to_string(minimum) +
                        " (3 * (sl + fl)) are required");
    }
    const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(n)));
    return {frame.slice(0, n_train), frame.slice(n_train, n_train + n_val), frame.slice(n_train + n_val, n)};
}

Normalizer::Normalizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), std_(std::move(stddev)) {
    if (mean_.size() != std_.size()) throw DimensionError("normalizer mean/std length mismatch");
}

Normalizer Normalizer::fit(const BizITObsFrame& train) {
    const auto rows = train.rows();
    const auto c = train.channels();
    if (rows == 0) throw DataError("cannot fit a normalizer on an empty training split");
    std::vector<double> mean(c, 0.0), sd(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
        double m = 0.0;
        for (std::size_t r = 0; r < rows; ++r) m += train.at(r, j);
        m /= static_cast<double>(rows);
        double v = 0.0;
        for (std::size_t r = 0; r < rows; ++r) v += (train.at(r, j) - m) * (train.at(r, j) - m);
        v /= static_cast<double>(rows);
        const double s = std::sqrt(v);
        if (!(s > 1e-12 * std::max(1.0, std::abs(m)))) {
            throw DataError("constant channel '" + train.schema[j].name + "' in the training split");
        }
        mean[j] = m;
        sd[j] = s;
    }
    return Normalizer(std::move(mean), std::move(sd));
}

BizITObsFrame Normalizer::apply(const BizITObsFrame& frame) const {
    if (frame.channels() != mean_.size()) throw SchemaError("normalizer channel count mismatch");
    BizITObsFrame out = frame;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t j = 0; j < out.channels(); ++j) out.at(r, j) = apply_value(j, frame.at(r, j));
    return out;
}

BizITObsFrame Normalizer::inverse(const BizITObsFrame& frame) const {
    if (frame.channels() != mean_.size()) throw SchemaError("normalizer channel count mismatch");
    BizITObsFrame out = frame;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t j = 0; j < out.channels(); ++j) out.at(r, j) = inverse_value(j, frame.at(r, j));
    return out;
}

NormalizedSplits fit_apply_normalizer(const FrameSplits& splits) {
    auto norm = Normalizer::fit(splits.train);
    return {{norm.apply(splits.train), norm.apply(splits.val), norm.apply(splits.test)}, norm};
}

// ---- windows --------------------------------------------------------------

WindowSet::WindowSet(std::shared_ptr<const BizITObsFrame> frame, std::size_t sl, std::size_t fl,
                     std::vector<std::size_t> origins)
    : frame_(std::move(frame)), sl_(sl), fl_(fl), origins_(std::move(origins)) {
    for (auto o : origins_) {
        if (o + sl_ + fl_ > frame_->rows()) throw UsageError("window extends past the end of its frame");
    }
}

WindowSample WindowSet::operator[](std::size_t i) const {
    const std::size_t idx[] = {i};
    const auto c = frame_->channels();
    return {reshape(batch_x(idx), {sl_, c}), reshape(batch_y(idx), {fl_, c}), origins_.at(i)};
}

Tensor WindowSet::batch_x(std::span<const std::size_t> indices) const {
    const auto c = frame_->channels();
    std::vector<double> v;
    v.reserve(indices.size() * sl_ * c);
    for (auto i : indices) {
        const auto* b = frame_->values.data() + origins_.at(i) * c;
        v.insert(v.end(), b, b + sl_ * c);
    }
    return Tensor({indices.size(), sl_, c}, std::move(v));
}

Tensor WindowSet::batch_y(std::span<const std::size_t> indices) const {
    const auto c = frame_->channels();
    std::vector<double> v;
    v.reserve(indices.size() * fl_ * c);
    for (auto i : indices) {
        const auto* b = frame_->values.data() + (origins_.at(i) + sl_) * c;
        v.insert(v.end(), b, b + fl_ * c);
    }
    return Tensor({indices.size(), fl_, c}, std::move(v));
}

WindowSet WindowSet::prefix(std::size_t count) const {
    const auto n = std::min(count, origins_.size());
    return WindowSet(frame_, sl_, fl_, std::vector<std::size_t>(origins_.begin(), origins_.begin() + static_cast<std::ptrdiff_t>(n)));
}

WindowSet make_windows(std::shared_ptr<const BizITObsFrame> frame, std::size_t sl, std::size_t fl,
                       std::size_t stride) {
    if (stride == 0 || sl == 0 || fl == 0) throw ConfigError("sl, fl and stride must be positive");
    const auto len = frame->rows();
    std::vector<std::size_t> origins;
    if (len < sl + fl) {
        log_warning("frame of length " + std::to_string(len) + " is shorter than sl+fl=" +
                    std::to_string(sl + fl) + "; no windows produced");
    } else {
        const auto count = (len - sl - fl) / stride + 1;
        origins.reserve(count);
        for (std::size_t k = 0; k < count; ++k) origins.push_back(k * stride);
    }
    return WindowSet(std::move(frame), sl, fl, std::move(origins));
}

std::vector<int> event_labels(const Tensor& y_raw, const ChannelSchema& schema) {
    if (y_raw.rank() != 2 || y_raw.dim(1) != schema.size()) {
        throw SchemaError("event_labels expects [fl, " + std::to_string(schema.size()) + "], got " +
                          shape_to_string(y_raw.shape()));
    }
    const auto events = schema.event_indices();
    const auto steps = y_raw.dim(0);
    const auto c = schema.size();
    const auto v = y_raw.values();
    std::vector<int> labels(events.size(), 0);
    for (std::size_t e = 0; e < events.size(); ++e) {
        for (std::size_t t = 0; t < steps; ++t) {
            if (v[t * c + events[e]] > 0.0) {
                labels[e] = 1;
                break;
            }
        }
    }
    return labels;
}

// ---- prepared dataset -----------------------------------------------------

PreparedDataset PreparedDataset::prepare(const BizITObsFrame& frame, std::size_t sl, std::size_t fl,
                                         SplitRatios ratios) {
    PreparedDataset d;
    d.schema_ = frame.schema;
    d.sl_ = sl;
    d.fl_ = fl;
    auto raw = std::make_shared<FrameSplits>(chronological_split(frame, ratios, sl, fl));
    auto norm = fit_apply_normalizer(*raw);
    d.normalizer_ = norm.normalizer;
    auto train = std::make_shared<const BizITObsFrame>(std::move(norm.standardized.train));
    auto val = std::make_shared<const BizITObsFrame>(std::move(norm.standardized.val));
    auto test = std::make_shared<const BizITObsFrame>(std::move(norm.standardized.test));
    d.train_ = make_windows(train, sl, fl, 1);
    d.val_ = make_windows(val, sl, fl, fl);
    d.test_ = make_windows(test, sl, fl, fl);
    // raw views share origins with the standardized ones
    std::shared_ptr<const FrameSplits> shared_raw = raw;
    auto alias = [&](const BizITObsFrame& f) { return std::shared_ptr<const BizITObsFrame>(shared_raw, &f); };
    d.raw_train_ = WindowSet(alias(raw->train), sl, fl, d.train_.origins());
    d.raw_val_ = WindowSet(alias(raw->val), sl, fl, d.val_.origins());
    d.raw_test_ = WindowSet(alias(raw->test), sl, fl, d.test_.origins());
    d.raw_ = std::move(shared_raw);
    if (d.train_.empty() || d.val_.empty() || d.test_.empty()) {
        throw DataError("every split needs at least sl+fl=" + std::to_string(sl + fl) + " rows");
    }
    return d;
}

const WindowSet& PreparedDataset::test_windows() const {
    ++*test_reads_;
    return test_;
}

const WindowSet& PreparedDataset::raw_test_windows() const {
    ++*test_reads_;
    return raw_test_;
}

PreparedDataset PreparedDataset::with_train_limit(std::size_t count) const {
    PreparedDataset d = *this;
    d.train_ = train_.prefix(count);
    d.raw_train_ = raw_train_.prefix(count);
    return d;
}

}  // namespace automixer
