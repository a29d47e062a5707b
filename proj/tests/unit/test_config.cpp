#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "automixer/checkpoint.hpp"
#include "automixer/errors.hpp"
#include "automixer/run_config.hpp"

using namespace automixer;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_run_config(text, "test.ini").validate();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("automixer_cfg_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(RunConfig, ParsesSectionsAndComments) {
    const auto c = parse_run_config(
        "# defaults tweaked\n"
        "[model]\n"
        "cell = lstm\n"
        "cr = 0.4   ; trailing comment\n"
        "nl = 3\n"
        "cc = yes\n"
        "task = event-forecast\n"
        "[train]\n"
        "mode = NPT\n"
        "b = 16\n"
        "lr = 0.002\n"
        "[bench]\n"
        "seeds = 3, 4\n"
        "cr_list = 0.2,0.8\n"
        "variants = AutoMixer GRU, TSMixer\n"
        "[report]\n"
        "weight.orders = 2.5\n");
    EXPECT_EQ(c.model.cell, CellKind::lstm);
    EXPECT_EQ(c.model.cr, 0.4);
    EXPECT_EQ(c.model.nl, 3u);
    EXPECT_TRUE(c.model.cc);
    EXPECT_EQ(c.model.task, Task::event_forecast);
    EXPECT_EQ(c.mode, TrainMode::no_pretrain);
    EXPECT_EQ(c.batch_size, 16u);
    EXPECT_EQ(c.lr, 0.002);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(c.cr_list, (std::vector<double>{0.2, 0.8}));
    EXPECT_EQ(c.variants, (std::vector<std::string>{"AutoMixer GRU", "TSMixer"}));
    EXPECT_EQ(c.report.weights.at("orders"), 2.5);
}

TEST(RunConfig, DefaultsFollowPaperSettings) {
    const auto c = parse_run_config("");
    EXPECT_EQ(c.model.sl, 24u);
    EXPECT_EQ(c.model.fl, 24u);
    EXPECT_EQ(c.model.pl, 8u);
    EXPECT_EQ(c.model.fs, 2u);
    EXPECT_EQ(c.model.hf, 16u);
    EXPECT_EQ(c.model.ef, 32u);
    EXPECT_EQ(c.batch_size, 8u);
    EXPECT_EQ(c.lr, 1e-3);
    EXPECT_EQ(c.split.train, 0.6);
}

TEST(RunConfig, UnknownKeysAndSectionsAreRejectedWithLocation) {
    EXPECT_NE(error_of("[model]\nwidth = 3\n").find("test.ini:2"), std::string::npos);
    EXPECT_NE(error_of("[model]\nwidth = 3\n").find("width"), std::string::npos);
    EXPECT_NE(error_of("[extras]\n").find("extras"), std::string::npos);
    EXPECT_NE(error_of("nl = 3\n").find("section"), std::string::npos);
    EXPECT_NE(error_of("[model]\nnl = three\n").find("nl"), std::string::npos);
    EXPECT_NE(error_of("[model]\ncc = maybe\n"), "");
    EXPECT_NE(error_of("[model]\nnl\n"), "");
}

TEST(RunConfig, DerivedWidthsFollowFsAndPl) {
    const auto c = parse_run_config("[model]\nfs = 3\npl = 4\nsl = 24\n");
    EXPECT_EQ(c.model.hf, 12u);
    EXPECT_EQ(c.model.ef, 36u);
    EXPECT_NO_THROW(parse_run_config("[model]\nfs = 2\nhf = 16\nef = 32\n"));
    EXPECT_NE(error_of("[model]\nfs = 2\nhf = 12\n").find("hf"), std::string::npos);
    EXPECT_NE(error_of("[model]\nef = 40\n").find("ef"), std::string::npos);
    EXPECT_NE(error_of("[model]\nsl = 20\n").find("pl"), std::string::npos);
}

TEST(RunConfig, OverridesApplyAndRecomputeDerivedValues) {
    auto c = parse_run_config("");
    apply_override(c, "model.fs=1");
    EXPECT_EQ(c.model.hf, 8u);
    EXPECT_EQ(c.model.ef, 8u);
    apply_override(c, "train.seed=9");
    EXPECT_EQ(c.seed, 9u);
    EXPECT_THROW(apply_override(c, "model.nope=1"), ConfigError);
    EXPECT_THROW(apply_override(c, "no-equals"), ConfigError);
    EXPECT_THROW(apply_override(c, "nosection=1"), ConfigError);
}

TEST(RunConfig, JsonSnapshotRoundTrips) {
    auto c = parse_run_config("[model]\ncell = lstm\ncr = 0.4\n[train]\nseed = 5\n[report]\nweight.x = 2\n");
    c.series = "a/b.csv";
    const auto j = c.to_json();
    const auto back = run_config_from_json(j);
    EXPECT_EQ(back.to_json().dump(), j.dump());
    EXPECT_EQ(back.model.hash(), c.model.hash());
}

TEST(RunConfig, LoadNamesMissingPathAndReplaysManifests) {
    try {
        load_run_config("/nonexistent/run.ini");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/run.ini"), std::string::npos);
    }
    auto c = parse_run_config("[model]\nnl = 2\n[train]\nseed = 4\n");
    const auto manifest = scratch("manifest.json");
    nlohmann::ordered_json m;
    m["format"] = "automixer-manifest";
    m["config"] = c.to_json();
    std::ofstream(manifest) << m.dump(2);
    const auto back = load_run_config(manifest);
    EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
    fs::remove_all(manifest.parent_path());
}

TEST(RunConfig, ShippedDefaultConfigParses) {
    const auto c = load_run_config(fs::path(AUTOMIXER_SOURCE_DIR) / "configs" / "default.ini");
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.model.nl, 3u);
    EXPECT_EQ(c.model.dropout, 0.3);
}

TEST(ModelConfig, HashIsStableAndSensitive) {
    AutoMixerConfig a, b;
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 64u);
    b.cr = 0.4;
    EXPECT_NE(a.hash(), b.hash());
    EXPECT_EQ(config_from_json(config_to_json(b)).hash(), b.hash());
}

TEST(Checkpoint, RoundTripIsExactAndHashChecked) {
    std::mt19937_64 rng(3);
    AutoMixerConfig config;
    config.nl = 2;
    const auto model = AutoMixerModel::create(config, 7, 3, rng);
    const auto ckpt = model_checkpoint(model, {{"seed", 3}});
    const auto path = scratch("model.json");
    ckpt.save(path);
    const auto loaded = Checkpoint::load(path);
    EXPECT_EQ(loaded.content_hash(), ckpt.content_hash());
    const auto rebuilt = model_from_checkpoint(loaded);
    const auto a = model.parameters(), b = rebuilt.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].name, b[i].name);
        EXPECT_EQ(std::vector<double>(a[i].tensor.values().begin(), a[i].tensor.values().end()),
                  std::vector<double>(b[i].tensor.values().begin(), b[i].tensor.values().end()));
    }
    EXPECT_EQ(rebuilt.config().hash(), config.hash());

    auto j = ckpt.to_json();
    j["tensors"][0]["values"][0] = j["tensors"][0]["values"][0].get<double>() + 1e-9;
    EXPECT_THROW(Checkpoint::from_json(j), DataError);
    fs::remove_all(path.parent_path());
}

TEST(Checkpoint, AutoencoderRoundTrip) {
    std::mt19937_64 rng(4);
    const auto ae = ChannelAutoEncoder::random(CellKind::lstm, 9, 4, rng);
    const auto back = autoencoder_from_checkpoint(Checkpoint::from_json(autoencoder_checkpoint(ae, {}).to_json()));
    EXPECT_EQ(back.kind(), CellKind::lstm);
    EXPECT_EQ(back.channels(), 9u);
    EXPECT_EQ(back.compressed(), 4u);
    const auto x = Tensor::zeros({5, 9});
    const auto ya = ae.decode(ae.encode(x)), yb = back.decode(back.encode(x));
    for (std::size_t i = 0; i < ya.numel(); ++i) ASSERT_EQ(ya.at(i), yb.at(i));
}
