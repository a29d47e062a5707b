#include "automixer/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "automixer/errors.hpp"

namespace automixer {

namespace {

std::vector<double> make_timestamps(std::size_t n, std::int64_t start, std::int64_t step) {
    std::vector<double> ts(n);
    for (std::size_t t = 0; t < n; ++t) ts[t] = static_cast<double>(start + static_cast<std::int64_t>(t) * step);
    return ts;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) {
        while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
        while (!f.empty() && f.front() == ' ') f.erase(f.begin());
        out.push_back(f);
    }
    return out;
}

}  // namespace

void SynthSpec::validate() const {
    if (kpis == 0) throw ConfigError("synth: kpis must be positive");
    if (causal_events == 0) throw ConfigError("synth: causal_events must be positive");
    if (noise_events == 0) throw ConfigError("synth: noise_events must be positive");
    if (length == 0) throw ConfigError("synth: length must be positive");
    if (lag_min == 0 || lag_max < lag_min) throw ConfigError("synth: need 1 <= lag_min <= lag_max");
    if (duration_min == 0 || duration_max < duration_min) {
        throw ConfigError("synth: need 1 <= duration_min <= duration_max");
    }
    if (!(event_prob > 0.0 && event_prob < 1.0)) throw ConfigError("synth: event_prob must lie in (0,1)");
    if (!(count_mean >= 1.0)) throw ConfigError("synth: count_mean must be >= 1");
    if (kpis_per_event == 0) throw ConfigError("synth: kpis_per_event must be positive");
    if (season_period == 0) throw ConfigError("synth: season_period must be positive");
    if (!(impulse_decay >= 0.0 && impulse_decay < 1.0)) throw ConfigError("synth: impulse_decay must lie in [0,1)");
    if (!(std::abs(ar_coef) < 1.0)) throw ConfigError("synth: |ar_coef| must be < 1");
    if (!(noise_std >= 0.0) || !(impulse_magnitude >= 0.0)) {
        throw ConfigError("synth: noise_std and impulse_magnitude must be non-negative");
    }
    if (interval_seconds <= 0) throw ConfigError("synth: interval_seconds must be positive");
}

void GroundTruth::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "event,kpi,lag,magnitude\n" << std::setprecision(17);
    for (const auto& l : links) {
        out << event_names.at(l.event) << ',' << kpi_names.at(l.kpi) << ',' << l.lag << ',' << l.magnitude << '\n';
    }
}

SynthOutput synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    const auto n = spec.length;
    const auto k_count = spec.kpis;
    const auto e_count = spec.causal_events + spec.noise_events;
    const auto c = k_count + e_count;

    std::vector<ChannelDescriptor> channels;
    GroundTruth truth;
    for (std::size_t k = 0; k < k_count; ++k) {
        channels.push_back({"kpi_" + std::to_string(k + 1), ChannelRole::biz_kpi});
        truth.kpi_names.push_back(channels.back().name);
    }
    for (std::size_t e = 0; e < e_count; ++e) {
        const bool causal = e < spec.causal_events;
        const auto idx = causal ? e + 1 : e - spec.causal_events + 1;
        channels.push_back({(causal ? "event_causal_" : "event_noise_") + std::to_string(idx), ChannelRole::it_event});
        truth.event_names.push_back(channels.back().name);
    }

    // causal graph
    std::uniform_int_distribution<std::size_t> lag_dist(spec.lag_min, spec.lag_max);
    std::uniform_real_distribution<double> mag_scale(0.75, 1.25);
    std::bernoulli_distribution coin(0.5);
    const auto per_event = std::min(spec.kpis_per_event, k_count);
    for (std::size_t e = 0; e < spec.causal_events; ++e) {
        std::vector<std::size_t> pool(k_count);
        for (std::size_t k = 0; k < k_count; ++k) pool[k] = k;
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(per_event);
        std::sort(pool.begin(), pool.end());
        for (auto k : pool) {
            const auto lag = lag_dist(rng);
            const double sign = coin(rng) ? 1.0 : -1.0;
            truth.links.push_back({e, k, lag, sign * spec.impulse_magnitude * mag_scale(rng)});
        }
    }

    // per-KPI shape parameters
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> level(k_count), phase(k_count), amp(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        level[k] = 10.0 + 5.0 * static_cast<double>(k);
        phase[k] = 2.0 * std::numbers::pi * unit(rng);
        amp[k] = spec.season_amplitude * (0.5 + unit(rng));
    }

    // events
    std::vector<double> events(n * e_count, 0.0);
    std::bernoulli_distribution start(spec.event_prob);
    std::uniform_int_distribution<std::size_t> duration(spec.duration_min, spec.duration_max);
    std::poisson_distribution<int> extra(std::max(spec.count_mean - 1.0, 1e-12));
    const bool use_extra = spec.count_mean > 1.0;
    for (std::size_t e = 0; e < e_count; ++e) {
        std::size_t remaining = 0;
        for (std::size_t t = 0; t < n; ++t) {
            if (remaining == 0 && start(rng)) remaining = duration(rng);
            if (remaining > 0) {
                events[t * e_count + e] = 1.0 + (use_extra ? extra(rng) : 0);
                --remaining;
            }
        }
    }

    // KPIs
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> kpi(n * k_count, 0.0);
    for (std::size_t k = 0; k < k_count; ++k) {
        double ar = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            ar = spec.ar_coef * ar + spec.noise_std * noise(rng);
            const double season =
                amp[k] * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(spec.season_period) + phase[k]);
            kpi[t * k_count + k] = level[k] + season + spec.trend * static_cast<double>(t) + ar;
        }
    }
    // r(t) = decay * r(t-1) + e(t - lag): a lagged geometric impulse response
    for (const auto& link : truth.links) {
        double response = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double drive = t >= link.lag ? events[(t - link.lag) * e_count + link.event] : 0.0;
            response = spec.impulse_decay * response + drive;
            kpi[t * k_count + link.kpi] += link.magnitude * response;
        }
    }

    SynthOutput out;
    out.frame.schema = ChannelSchema(std::move(channels));
    out.frame.timestamps = make_timestamps(n, spec.start_epoch, spec.interval_seconds);
    out.frame.values.resize(n * c);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t k = 0; k < k_count; ++k) out.frame.values[t * c + k] = kpi[t * k_count + k];
        for (std::size_t e = 0; e < e_count; ++e) out.frame.values[t * c + k_count + e] = events[t * e_count + e];
    }
    out.truth = std::move(truth);
    return out;
}

void LatentSpec::validate() const {
    if (channels < 3) throw ConfigError("latent synth: need at least 3 channels");
    if (rank == 0 || rank >= channels) throw ConfigError("latent synth: need 1 <= rank < channels");
    if (kpis == 0 || kpis >= channels) throw ConfigError("latent synth: need 1 <= kpis < channels");
    if (length == 0 || season_period == 0) throw ConfigError("latent synth: length and season_period must be positive");
    if (!(std::abs(ar_coef) < 1.0) || !(noise >= 0.0)) throw ConfigError("latent synth: bad ar_coef or noise");
    if (interval_seconds <= 0) throw ConfigError("latent synth: interval_seconds must be positive");
}

BizITObsFrame synth_latent(const LatentSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto c = spec.channels;
    const auto r = spec.rank;

    std::vector<double> loading(c * r);
    for (auto& v : loading) v = gauss(rng) / std::sqrt(static_cast<double>(r));
    std::vector<double> phase(r), period(r);
    for (std::size_t j = 0; j < r; ++j) {
        phase[j] = 2.0 * std::numbers::pi * unit(rng);
        period[j] = static_cast<double>(spec.season_period) * static_cast<double>(j + 2) / 2.0;
    }

    BizITObsFrame frame;
    std::vector<ChannelDescriptor> channels;
    for (std::size_t i = 0; i < c; ++i) {
        const bool kpi = i < spec.kpis;
        channels.push_back({(kpi ? "kpi_" : "signal_") + std::to_string(kpi ? i + 1 : i - spec.kpis + 1),
                            kpi ? ChannelRole::biz_kpi : ChannelRole::it_event});
    }
    frame.schema = ChannelSchema(std::move(channels));
    frame.timestamps = make_timestamps(spec.length, spec.start_epoch, spec.interval_seconds);
    frame.values.resize(spec.length * c);

    const double innovation = 0.5 * std::sqrt(1.0 - spec.ar_coef * spec.ar_coef);
    std::vector<double> ar(r, 0.0), f(r);
    for (std::size_t t = 0; t < spec.length; ++t) {
        for (std::size_t j = 0; j < r; ++j) {
            ar[j] = spec.ar_coef * ar[j] + innovation * gauss(rng);
            f[j] = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period[j] + phase[j]) + ar[j];
        }
        for (std::size_t i = 0; i < c; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < r; ++j) s += loading[i * r + j] * f[j];
            frame.values[t * c + i] = std::tanh(s) + spec.noise * gauss(rng);
        }
    }
    return frame;
}

std::vector<Incident> synth_incidents(const std::vector<std::string>& kpi_names, std::size_t per_kpi,
                                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> deviation(0.5, 6.0), jitter(0.8, 1.2), rate(50.0, 200.0);
    auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };
    std::vector<Incident> out;
    for (const auto& name : kpi_names) {
        const double per_minute = rate(rng);
        for (std::size_t i = 0; i < per_kpi; ++i) {
            const double d = deviation(rng);
            const double downtime = 15.0 * d * jitter(rng);
            out.push_back({name, round2(d), round2(downtime), round2(downtime * per_minute)});
        }
    }
    return out;
}

std::vector<Incident> load_incidents(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open incident table " + path.string());
    std::vector<Incident> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto f = split_fields(line);
        if (row == 1 && !f.empty() && f[0] == "kpi") continue;
        if (f.size() != 4) throw DataError(path.string() + ":" + std::to_string(row) + ": expected 4 fields");
        try {
            std::size_t used = 0;
            Incident inc{f[0], 0, 0, 0};
            double* dst[] = {&inc.deviation, &inc.downtime_minutes, &inc.revenue_loss};
            for (int j = 0; j < 3; ++j) {
                *dst[j] = std::stod(f[static_cast<std::size_t>(j) + 1], &used);
                if (used != f[static_cast<std::size_t>(j) + 1].size() || !std::isfinite(*dst[j])) throw std::invalid_argument("");
            }
            out.push_back(inc);
        } catch (const std::logic_error&) {
            throw DataError(path.string() + ":" + std::to_string(row) + ": non-numeric incident field");
        }
    }
    return out;
}

void save_incidents(const std::vector<Incident>& incidents, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "kpi,deviation,downtime_minutes,revenue_loss\n" << std::setprecision(17);
    for (const auto& i : incidents) {
        out << i.kpi << ',' << i.deviation << ',' << i.downtime_minutes << ',' << i.revenue_loss << '\n';
    }
}

}  // namespace automixer
