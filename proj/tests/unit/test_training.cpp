#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "automixer/errors.hpp"
#include "automixer/synth.hpp"
#include "automixer/training.hpp"

using namespace automixer;

namespace {

AutoMixerConfig small_model(Task task = Task::kpi_forecast) {
    AutoMixerConfig c;
    c.sl = 8;
    c.fl = 8;
    c.pl = 4;
    c.fs = 1;
    c.hf = 4;
    c.ef = 4;
    c.nl = 1;
    c.dropout = 0.2;
    c.task = task;
    return c;
}

const PreparedDataset& small_data() {
    static const PreparedDataset data = [] {
        SynthSpec spec;
        spec.kpis = 3;
        spec.causal_events = 2;
        spec.noise_events = 3;
        spec.length = 500;
        spec.event_prob = 0.05;
        return PreparedDataset::prepare(synth_generate(spec, 5).frame, 8, 8);
    }();
    return data;
}

TrainSpec quick_spec(TrainMode mode, std::size_t epochs) {
    TrainSpec s;
    s.mode = mode;
    s.epochs_max = epochs;
    s.patience = 3;
    s.batch_size = 16;
    s.lr = 3e-3;
    s.seed = 17;
    return s;
}

std::vector<double> values_of(const ParameterList& params) {
    std::vector<double> out;
    for (const auto& p : params) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
    return out;
}

}  // namespace

TEST(EarlyStop, ConstantLossesStopAtEpochEleven) {
    EarlyStopState s;
    s.patience = 10;
    std::size_t stopped = 0;
    for (std::size_t epoch = 1; epoch <= 50 && stopped == 0; ++epoch)
        if (early_stop_update(s, 1.0) == StopDecision::stop) stopped = epoch;
    EXPECT_EQ(stopped, 11u);
    EXPECT_EQ(s.best_epoch, 1u);
    EXPECT_LE(s.epochs_since_improve, s.patience);
}

TEST(EarlyStop, BestEpochBookkeeping) {
    EarlyStopState s;
    for (double v : {1.0, 0.5, 0.6, 0.4}) early_stop_update(s, v);
    EXPECT_EQ(s.best_epoch, 4u);
    EXPECT_EQ(s.best_val_loss, 0.4);
    EXPECT_EQ(s.epochs_since_improve, 0u);
}

TEST(EarlyStop, MonotoneDecreaseNeverStops) {
    EarlyStopState s;
    s.patience = 2;
    for (int i = 0; i < 200; ++i) ASSERT_EQ(early_stop_update(s, 10.0 - 0.01 * i), StopDecision::keep_going);
}

TEST(EarlyStop, ImprovementsBelowToleranceDoNotReset) {
    EarlyStopState s;
    s.patience = 3;
    early_stop_update(s, 1.0);
    early_stop_update(s, 1.0 - 5e-7);
    EXPECT_EQ(s.best_epoch, 1u);
    EXPECT_EQ(s.epochs_since_improve, 1u);
}

TEST(EarlyStop, NonFiniteLossStopsWithDiagnostic) {
    EarlyStopState s;
    early_stop_update(s, 1.0);
    EXPECT_EQ(early_stop_update(s, std::numeric_limits<double>::quiet_NaN()), StopDecision::stop);
    EXPECT_NE(s.diagnostic.find("epoch 2"), std::string::npos);
}

TEST(Pretrain, ZeroEpochsReturnsInitialization) {
    const auto config = small_model();
    const auto result = pretrain(small_data(), config, quick_spec(TrainMode::pretrained, 0));
    std::mt19937_64 rng(17);
    const auto init = ChannelAutoEncoder::random(config.cell, small_data().schema().size(),
                                                 compressed_channels(small_data().schema().size(), config.cr), rng);
    EXPECT_EQ(values_of(result.autoencoder.parameters()), values_of(init.parameters()));
    EXPECT_TRUE(result.history.empty());
    EXPECT_EQ(result.best_epoch, 0u);
}

TEST(Pretrain, SameSeedGivesIdenticalCheckpoints) {
    const auto a = pretrain(small_data(), small_model(), quick_spec(TrainMode::pretrained, 3));
    const auto b = pretrain(small_data(), small_model(), quick_spec(TrainMode::pretrained, 3));
    EXPECT_EQ(a.checkpoint.content_hash(), b.checkpoint.content_hash());
    EXPECT_EQ(a.checkpoint.meta["cr"], 0.6);
    EXPECT_EQ(a.history.size(), 3u);
    EXPECT_LT(a.history.back().train_loss, a.history.front().train_loss);
}

TEST(Pretrain, InfeasibleCompressionFailsBeforeTraining) {
    auto config = small_model();
    config.cr = 0.1;  // three channels: C' = round(2.7) = C
    SynthSpec spec;
    spec.kpis = 1;
    spec.causal_events = 1;
    spec.noise_events = 1;
    spec.length = 300;
    const auto data = PreparedDataset::prepare(synth_generate(spec, 1).frame, 8, 8);
    bool progressed = false;
    auto ts = quick_spec(TrainMode::pretrained, 2);
    ts.progress = [&](const EpochRecord&) { progressed = true; };
    EXPECT_THROW(pretrain(data, config, ts), ConfigError);
    EXPECT_FALSE(progressed);
}

TEST(Finetune, ReturnsTheMinimumValidationEpoch) {
    auto ts = quick_spec(TrainMode::no_pretrain, 8);
    ts.early_stop = false;
    const auto r = finetune(small_data(), small_model(), ts);
    ASSERT_EQ(r.history.size(), 8u);
    const auto best = std::min_element(r.history.begin(), r.history.end(),
                                       [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
    EXPECT_EQ(r.best_epoch, best->epoch);
    EXPECT_EQ(evaluate_loss(r.model, small_data().val_windows(), small_data().raw_val_windows()), best->val_loss);
    EXPECT_EQ(r.checkpoint.meta["best_epoch"], best->epoch);
}

TEST(Finetune, PtWithInitAutoencoderReplaysNpt) {
    // NPT draws its autoencoder first from the run seed, exactly like a zero-epoch pretrain.
    // Feeding that as the PT checkpoint must reproduce NPT bit for bit.
    const auto config = small_model();
    const auto init = pretrain(small_data(), config, quick_spec(TrainMode::pretrained, 0));
    const auto npt = finetune(small_data(), config, quick_spec(TrainMode::no_pretrain, 3));
    const auto pt = finetune(small_data(), config, quick_spec(TrainMode::pretrained, 3), &init.autoencoder);
    ASSERT_EQ(npt.history.size(), pt.history.size());
    for (std::size_t i = 0; i < npt.history.size(); ++i) {
        EXPECT_EQ(npt.history[i].train_loss, pt.history[i].train_loss);
        EXPECT_EQ(npt.history[i].val_loss, pt.history[i].val_loss);
    }
    EXPECT_EQ(values_of(npt.model.parameters()), values_of(pt.model.parameters()));
}

TEST(Finetune, PtRequiresCompatibleCheckpoint) {
    const auto config = small_model();
    EXPECT_THROW(finetune(small_data(), config, quick_spec(TrainMode::pretrained, 1)), ConfigError);
    std::mt19937_64 rng(1);
    const auto wrong = ChannelAutoEncoder::random(CellKind::lstm, 8, 3, rng);
    EXPECT_THROW(finetune(small_data(), config, quick_spec(TrainMode::pretrained, 1), &wrong), ConfigError);
}

TEST(Finetune, TestSplitReadDuringTrainingTripsTheGuard) {
    auto ts = quick_spec(TrainMode::no_pretrain, 2);
    ts.progress = [](const EpochRecord&) { (void)small_data().test_windows(); };
    EXPECT_THROW(finetune(small_data(), small_model(), ts), TrainingError);

    ts.progress = nullptr;
    const auto before = small_data().test_access_count();
    const auto r = finetune(small_data(), small_model(), ts);
    EXPECT_GT(small_data().test_access_count(), before);
    EXPECT_EQ(r.test_metrics.windows, (small_data().raw().test.rows() - 16) / 8 + 1);
}

TEST(Finetune, ClassificationCheckpointHasNoDecoder) {
    const auto r = finetune(small_data(), small_model(Task::event_classify), quick_spec(TrainMode::no_pretrain, 1));
    EXPECT_FALSE(r.checkpoint.has_prefix("decoder."));
    EXPECT_TRUE(r.checkpoint.has_prefix("encoder."));
    EXPECT_TRUE(r.test_metrics.subset_accuracy.has_value());
}

// Capacity check. Targets must be a function of the history, so the frames are
// deterministic: a rank-2 sinusoid mixture for the compressed model, independent
// sinusoids for the raw-channel one.
BizITObsFrame sinusoid_frame(bool rank_two) {
    BizITObsFrame f;
    f.schema = ChannelSchema({{"k0", ChannelRole::biz_kpi}, {"k1", ChannelRole::biz_kpi}, {"k2", ChannelRole::biz_kpi},
                              {"e0", ChannelRole::it_event}, {"e1", ChannelRole::it_event}, {"e2", ChannelRole::it_event}});
    const double two_pi = 2.0 * std::acos(-1.0);
    for (int t = 0; t < 500; ++t) {
        f.timestamps.push_back(60.0 * t);
        for (int c = 0; c < 6; ++c) {
            f.values.push_back(rank_two ? 0.3 * (c + 1) * std::sin(two_pi * t / 7.0) +
                                              std::cos(c) * std::sin(two_pi * t / 11.0 + 1.0)
                                        : std::sin(two_pi * t / (7.0 + 3.0 * c) + c));
        }
    }
    return f;
}

TEST(Finetune, OverfitsSmallSubset) {
    for (bool compress : {true, false}) {
        const auto data = PreparedDataset::prepare(sinusoid_frame(compress), 8, 8).with_train_limit(32);
        ASSERT_EQ(data.train_windows().size(), 32u);
        auto config = small_model();
        config.compress = compress;
        config.nl = 2;
        config.fs = 2;
        config.hf = 8;
        config.ef = 16;
        config.dropout = 0.0;
        auto ts = quick_spec(TrainMode::no_pretrain, 500);
        ts.early_stop = false;
        ts.batch_size = 8;
        ts.stop_below_train_loss = 1e-2;
        const auto r = finetune(data, config, ts);
        EXPECT_LT(r.history.back().train_loss, 1e-2) << "compress=" << compress << " after " << r.history.size();
        EXPECT_LE(r.history.size(), 500u);
    }
}

TEST(TrainSpec, RejectsBadValues) {
    TrainSpec s;
    s.batch_size = 0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = TrainSpec{};
    s.lr = 0;
    EXPECT_THROW(s.validate(), ConfigError);
}
