#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "automixer/data.hpp"
#include "automixer/errors.hpp"
#include "automixer/synth.hpp"

using namespace automixer;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("automixer_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ChannelSchema mixed_schema(std::size_t kpis, std::size_t events) {
    std::vector<ChannelDescriptor> c;
    for (std::size_t i = 0; i < kpis; ++i) c.push_back({"kpi" + std::to_string(i), ChannelRole::biz_kpi});
    for (std::size_t i = 0; i < events; ++i) c.push_back({"ev" + std::to_string(i), ChannelRole::it_event});
    return ChannelSchema(c);
}

// Frame with an upward drift so later splits have a shifted mean.
BizITObsFrame ramp_frame(std::size_t rows, std::size_t channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    BizITObsFrame f;
    f.schema = mixed_schema(1, channels - 1);
    for (std::size_t r = 0; r < rows; ++r) {
        f.timestamps.push_back(1000.0 + 60.0 * static_cast<double>(r));
        for (std::size_t c = 0; c < channels; ++c) f.values.push_back(0.05 * static_cast<double>(r) + noise(rng));
    }
    return f;
}

double corr(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n, mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// corr(event_t, kpi_{t+lag}) over the full series
double lagged_corr(const BizITObsFrame& f, std::size_t event_col, std::size_t kpi_col, std::size_t lag) {
    std::vector<double> a, b;
    for (std::size_t t = 0; t + lag < f.rows(); ++t) {
        a.push_back(f.at(t, event_col));
        b.push_back(f.at(t + lag, kpi_col));
    }
    return corr(a, b);
}

}  // namespace

TEST(LoadFrame, ThreeRowFile) {
    TempDir dir;
    write_text(dir.path / "schema.csv", "name,role\norders,biz-kpi\ndisk_alert,it-event\n");
    write_text(dir.path / "data.csv",
               "timestamp,orders,disk_alert\n"
               "2024-01-01T00:00:00Z,10.5,0\n"
               "2024-01-01T00:05:00Z,11,2\n"
               "2024-01-01T00:10:00Z,9.25,0\n");
    const auto f = load_frame(dir.path / "data.csv", dir.path / "schema.csv");
    ASSERT_EQ(f.rows(), 3u);
    EXPECT_EQ(f.channels(), 2u);
    EXPECT_EQ(f.timestamps[1] - f.timestamps[0], 300.0);
    EXPECT_EQ(f.at(2, 0), 9.25);
    EXPECT_EQ(f.at(1, 1), 2.0);
    EXPECT_EQ(f.schema[1].role, ChannelRole::it_event);
}

TEST(LoadFrame, ThirtyNineChannelFile) {
    TempDir dir;
    const auto schema = mixed_schema(4, 35);
    schema.save(dir.path / "schema.csv");
    BizITObsFrame f;
    f.schema = schema;
    for (std::size_t r = 0; r < 10; ++r) {
        f.timestamps.push_back(1700000000.0 + 300.0 * static_cast<double>(r));
        for (std::size_t c = 0; c < 39; ++c) f.values.push_back(static_cast<double>(r * c) / 7.0);
    }
    save_frame(f, dir.path / "data.csv");
    const auto g = load_frame(dir.path / "data.csv", dir.path / "schema.csv");
    EXPECT_EQ(g.channels(), 39u);
    EXPECT_EQ(g.schema, schema);
    EXPECT_EQ(g.values, f.values);
    EXPECT_EQ(g.timestamps, f.timestamps);
}

TEST(LoadFrame, RejectsShuffledTimestampsBadCellsAndUnknownColumns) {
    TempDir dir;
    write_text(dir.path / "schema.csv", "orders,biz-kpi\nalert,it-event\n");
    auto expect_data_error = [&](const std::string& body, const std::string& needle) {
        write_text(dir.path / "data.csv", body);
        try {
            load_frame(dir.path / "data.csv", dir.path / "schema.csv");
            ADD_FAILURE() << "accepted: " << body;
        } catch (const DataError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    expect_data_error("timestamp,orders,alert\n100,1,0\n300,2,0\n200,3,0\n", "row");
    expect_data_error("timestamp,orders,alert\n100,1,0\n200,abc,0\n", "column 'orders'");
    expect_data_error("timestamp,orders,cpu\n100,1,0\n", "unknown column 'cpu'");
    expect_data_error("timestamp,orders,alert\n100,1,0\n200,2,0\n400,3,0\n", "equally spaced");
}

TEST(Schema, RejectsDuplicatesAndRequiresBothRoles) {
    EXPECT_THROW(ChannelSchema({{"a", ChannelRole::biz_kpi}, {"a", ChannelRole::it_event}}), DataError);
    EXPECT_THROW(ChannelSchema({{"a", ChannelRole::biz_kpi}}).require_both_roles(), DataError);
    EXPECT_NO_THROW(mixed_schema(1, 1).require_both_roles());
    EXPECT_EQ(mixed_schema(2, 3).event_indices(), (std::vector<std::size_t>{2, 3, 4}));
}

TEST(Split, ExactAndFlooredBoundaries) {
    const auto a = chronological_split(ramp_frame(100, 2, 1), {}, 8, 8);
    EXPECT_EQ(a.train.rows(), 60u);
    EXPECT_EQ(a.val.rows(), 20u);
    EXPECT_EQ(a.test.rows(), 20u);
    const auto b = chronological_split(ramp_frame(8834, 2, 1), {}, 24, 24);
    EXPECT_EQ(b.train.rows(), 5300u);
    EXPECT_EQ(b.val.rows(), 1766u);
    EXPECT_EQ(b.test.rows(), 1768u);
    EXPECT_LT(b.train.timestamps.back(), b.val.timestamps.front());
    EXPECT_LT(b.val.timestamps.back(), b.test.timestamps.front());
}

TEST(Split, PartitionsEveryLengthInOrder) {
    for (std::size_t n = 96; n < 1200; n += 37) {
        const auto f = ramp_frame(n, 2, n);
        const auto s = chronological_split(f, {}, 8, 8);
        ASSERT_EQ(s.train.rows() + s.val.rows() + s.test.rows(), n);
        // integer oracle for floor(0.6 n) and floor(0.2 n)
        EXPECT_EQ(s.train.rows(), 6 * n / 10);
        EXPECT_EQ(s.val.rows(), 2 * n / 10);
        std::vector<double> joined = s.train.timestamps;
        joined.insert(joined.end(), s.val.timestamps.begin(), s.val.timestamps.end());
        joined.insert(joined.end(), s.test.timestamps.begin(), s.test.timestamps.end());
        EXPECT_EQ(joined, f.timestamps);
    }
}

TEST(Split, TooShortNamesMinimumLength) {
    try {
        chronological_split(ramp_frame(100, 2, 1), {}, 24, 24);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("144"), std::string::npos) << e.what();
    }
}

TEST(Normalizer, TrainStatisticsAndRoundTrip) {
    const auto splits = chronological_split(ramp_frame(500, 3, 2), {}, 24, 24);
    const auto norm = fit_apply_normalizer(splits);
    const auto& train = norm.standardized.train;
    for (std::size_t c = 0; c < 3; ++c) {
        double m = 0, v = 0;
        for (std::size_t r = 0; r < train.rows(); ++r) m += train.at(r, c);
        m /= static_cast<double>(train.rows());
        for (std::size_t r = 0; r < train.rows(); ++r) v += (train.at(r, c) - m) * (train.at(r, c) - m);
        EXPECT_LT(std::abs(m), 1e-9);
        EXPECT_NEAR(std::sqrt(v / static_cast<double>(train.rows())), 1.0, 1e-9);
    }
    const auto back = norm.normalizer.inverse(norm.standardized.test);
    for (std::size_t i = 0; i < back.values.size(); ++i) ASSERT_NEAR(back.values[i], splits.test.values[i], 1e-9);

    // drifting data: later splits keep their own offset (statistics are train-only)
    const auto& test = norm.standardized.test;
    double tm = 0;
    for (std::size_t r = 0; r < test.rows(); ++r) tm += test.at(r, 0);
    EXPECT_GT(tm / static_cast<double>(test.rows()), 1.0);
}

TEST(Normalizer, ConstantChannelIsNamed) {
    auto f = ramp_frame(200, 3, 3);
    for (std::size_t r = 0; r < f.rows(); ++r) f.at(r, 2) = 4.0;
    try {
        Normalizer::fit(f);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("'ev1'"), std::string::npos) << e.what();
    }
}

TEST(Normalizer, LeakageTripwire) {
    auto f = ramp_frame(600, 3, 4);
    const auto before = PreparedDataset::prepare(f, 24, 24);
    const std::size_t test_start = 6 * 600 / 10 + 2 * 600 / 10;
    for (std::size_t r = test_start; r < f.rows(); ++r)
        for (std::size_t c = 0; c < 3; ++c) f.at(r, c) = 1e6 * static_cast<double>(c + 1);
    const auto after = PreparedDataset::prepare(f, 24, 24);
    EXPECT_EQ(before.normalizer().mean(), after.normalizer().mean());
    EXPECT_EQ(before.normalizer().stddev(), after.normalizer().stddev());
}

TEST(Windows, CountExamples) {
    auto frame_of = [](std::size_t n) { return std::make_shared<const BizITObsFrame>(ramp_frame(n, 2, 5)); };
    EXPECT_EQ(make_windows(frame_of(48), 24, 24, 1).size(), 1u);
    EXPECT_EQ(make_windows(frame_of(72), 24, 24, 24).size(), 2u);
    std::vector<std::string> warnings;
    auto previous = set_warning_sink([&](std::string_view w) { warnings.emplace_back(w); });
    EXPECT_EQ(make_windows(frame_of(47), 24, 24, 1).size(), 0u);
    set_warning_sink(previous);
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(Windows, CountFormulaAndContiguityPropertySweep) {
    auto sink = set_warning_sink([](std::string_view) {});
    for (std::size_t n = 0; n <= 60; n += 3) {
        const auto frame = std::make_shared<const BizITObsFrame>(ramp_frame(n, 2, n + 1));
        for (std::size_t sl = 1; sl <= 9; sl += 2) {
            for (std::size_t fl = 1; fl <= 5; ++fl) {
                for (std::size_t stride = 1; stride <= 6; ++stride) {
                    const auto w = make_windows(frame, sl, fl, stride);
                    const std::size_t expect = n < sl + fl ? 0 : (n - sl - fl) / stride + 1;
                    ASSERT_EQ(w.size(), expect) << n << " " << sl << " " << fl << " " << stride;
                    if (w.empty()) continue;
                    const auto s = w[w.size() - 1];
                    ASSERT_EQ(s.x.shape(), (Shape{sl, 2}));
                    ASSERT_EQ(s.y.shape(), (Shape{fl, 2}));
                    ASSERT_LE(s.origin + sl + fl, n);
                    EXPECT_EQ(s.x.at(0), frame->at(s.origin, 0));
                    EXPECT_EQ(s.y.at(0), frame->at(s.origin + sl, 0));
                    EXPECT_EQ(s.y.at(fl * 2 - 1), frame->at(s.origin + sl + fl - 1, 1));
                }
            }
        }
    }
    set_warning_sink(sink);
}

TEST(Windows, PreparedSplitsUseStrideOneThenHorizon) {
    const auto data = PreparedDataset::prepare(ramp_frame(500, 2, 6), 24, 24);
    EXPECT_EQ(data.train_windows().size(), 300u - 48 + 1);
    EXPECT_EQ(data.val_windows().size(), (100u - 48) / 24 + 1);
    const auto reads = data.test_access_count();
    EXPECT_EQ(data.test_windows().size(), (100u - 48) / 24 + 1);
    EXPECT_GT(data.test_access_count(), reads);
}

TEST(Synth, ChannelCountsAndRoles) {
    SynthSpec spec;
    spec.kpis = 4;
    spec.causal_events = 3;
    spec.noise_events = 20;
    spec.length = 500;
    const auto out = synth_generate(spec, 1);
    EXPECT_EQ(out.frame.channels(), 27u);
    EXPECT_EQ(out.frame.schema.kpi_indices().size(), 4u);
    EXPECT_EQ(out.frame.schema.event_indices().size(), 23u);
    EXPECT_EQ(out.frame.rows(), 500u);
    EXPECT_NO_THROW(out.frame.validate());
    for (std::size_t e : out.frame.schema.event_indices())
        for (std::size_t r = 0; r < out.frame.rows(); ++r) ASSERT_GE(out.frame.at(r, e), 0.0);
    for (const auto& link : out.truth.links) {
        EXPECT_LT(link.event, 3u);
        EXPECT_GE(link.lag, spec.lag_min);
        EXPECT_LE(link.lag, spec.lag_max);
    }
    spec.kpis = 0;
    EXPECT_THROW(synth_generate(spec, 1), ConfigError);
}

TEST(Synth, ZeroImpulseLeavesKpisIndependentOfEvents) {
    SynthSpec spec;
    spec.length = 10000;
    spec.impulse_magnitude = 0.0;
    const auto out = synth_generate(spec, 7);
    const auto& f = out.frame;
    for (std::size_t e : f.schema.event_indices())
        for (std::size_t k : f.schema.kpi_indices())
            for (std::size_t lag = spec.lag_min; lag <= spec.lag_max; ++lag)
                ASSERT_LT(std::abs(lagged_corr(f, e, k, lag)), 0.1) << e << " " << k << " " << lag;
}

TEST(Synth, CausalLinksShowUpAtTheirLag) {
    SynthSpec spec;
    spec.length = 10000;
    const auto out = synth_generate(spec, 8);
    const auto events = out.frame.schema.event_indices();
    const auto kpis = out.frame.schema.kpi_indices();
    ASSERT_FALSE(out.truth.links.empty());
    for (const auto& link : out.truth.links) {
        const double r = lagged_corr(out.frame, events[link.event], kpis[link.kpi], link.lag);
        EXPECT_GT(link.magnitude > 0 ? r : -r, 0.1) << "event " << link.event << " kpi " << link.kpi;
    }
}

TEST(Synth, SameSeedGivesIdenticalBytes) {
    TempDir dir;
    SynthSpec spec;
    spec.length = 400;
    save_frame(synth_generate(spec, 42).frame, dir.path / "a.csv");
    save_frame(synth_generate(spec, 42).frame, dir.path / "b.csv");
    save_frame(synth_generate(spec, 43).frame, dir.path / "c.csv");
    EXPECT_EQ(read_text(dir.path / "a.csv"), read_text(dir.path / "b.csv"));
    EXPECT_NE(read_text(dir.path / "a.csv"), read_text(dir.path / "c.csv"));
    EXPECT_EQ(synth_latent(LatentSpec{}, 3).values, synth_latent(LatentSpec{}, 3).values);
}

TEST(Synth, IncidentsRoundTrip) {
    TempDir dir;
    const auto incidents = synth_incidents({"orders", "latency"}, 5, 9);
    EXPECT_EQ(incidents.size(), 10u);
    save_incidents(incidents, dir.path / "incidents.csv");
    EXPECT_EQ(load_incidents(dir.path / "incidents.csv"), incidents);
}

TEST(EventLabels, Examples) {
    const auto schema = mixed_schema(2, 5);
    EXPECT_EQ(event_labels(Tensor::zeros({24, 7}), schema), (std::vector<int>(5, 0)));
    auto y = Tensor::zeros({24, 7});
    y.mutable_values()[17 * 7 + 2 + 3] = 1.0;
    y.mutable_values()[5 * 7 + 0] = 9.0;  // KPI values never set labels
    EXPECT_EQ(event_labels(y, schema), (std::vector<int>{0, 0, 0, 1, 0}));
    EXPECT_THROW(event_labels(Tensor::zeros({24, 6}), schema), SchemaError);
}

TEST(EventLabels, RawAndRoundTrippedDataAgree) {
    SynthSpec spec;
    spec.length = 1200;
    const auto out = synth_generate(spec, 11);
    const auto data = PreparedDataset::prepare(out.frame, 24, 24);
    const auto standardized_val = std::make_shared<const BizITObsFrame>(
        data.normalizer().inverse(data.val_windows().frame()));
    const auto roundtrip = make_windows(standardized_val, 24, 24, 24);
    ASSERT_EQ(roundtrip.size(), data.raw_val_windows().size());
    for (std::size_t i = 0; i < roundtrip.size(); ++i)
        ASSERT_EQ(event_labels(roundtrip[i].y, data.schema()), event_labels(data.raw_val_windows()[i].y, data.schema()))
            << "window " << i;
}
