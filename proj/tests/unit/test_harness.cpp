#include <gtest/gtest.h>

#include <algorithm>

#include "automixer/errors.hpp"
#include "automixer/harness.hpp"
#include "automixer/synth.hpp"

using namespace automixer;

namespace {

// Nine channels, so cr = 0.05 rounds back to C' = C.
const PreparedDataset& nine_channel_data() {
    static const PreparedDataset data = [] {
        SynthSpec spec;
        spec.kpis = 3;
        spec.causal_events = 2;
        spec.noise_events = 4;
        spec.length = 400;
        spec.event_prob = 0.05;
        return PreparedDataset::prepare(synth_generate(spec, 3).frame, 8, 8);
    }();
    return data;
}

HarnessSpec tiny_harness(std::vector<std::uint64_t> seeds) {
    HarnessSpec h;
    h.config.sl = 8;
    h.config.fl = 8;
    h.config.pl = 4;
    h.config.fs = 1;
    h.config.hf = 4;
    h.config.ef = 4;
    h.config.nl = 1;
    h.config.dropout = 0.1;
    for (auto* t : {&h.pretrain, &h.finetune}) {
        t->epochs_max = 2;
        t->patience = 2;
        t->batch_size = 32;
        t->lr = 3e-3;
    }
    h.seeds = std::move(seeds);
    return h;
}

BenchCell cell(const std::string& variant, std::uint64_t seed, double mse, double pcc) {
    BenchCell c;
    c.variant = variant;
    c.seed = seed;
    c.ok = true;
    c.mse = mse;
    c.pcc = pcc;
    return c;
}

}  // namespace

TEST(Median, OddEvenAndEmpty) {
    EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
    EXPECT_EQ(median({7.0}), 7.0);
    EXPECT_THROW(median({}), UsageError);
}

TEST(BenchTable, MarkersAreRederivableFromValues) {
    BenchTable t;
    t.task = "kpi-forecast";
    const std::vector<std::pair<std::string, std::vector<double>>> runs{
        {"A", {0.5, 0.7, 0.6}}, {"B", {0.4, 0.3, 0.5}}, {"C", {0.9, 0.8, 1.0}}, {"D", {0.45, 0.5, 0.55}}};
    for (const auto& [name, mses] : runs)
        for (std::size_t s = 0; s < mses.size(); ++s) t.cells.push_back(cell(name, s, mses[s], 1.0 - mses[s]));
    assemble_rows(t);
    ASSERT_EQ(t.rows.size(), 4u);
    std::vector<std::pair<double, std::string>> by_mse;
    for (const auto& r : t.rows) by_mse.emplace_back(*r.mse, r.variant);
    std::sort(by_mse.begin(), by_mse.end());
    for (const auto& r : t.rows) {
        const auto expect = r.variant == by_mse[0].second   ? Marker::best
                            : r.variant == by_mse[1].second ? Marker::second
                                                            : Marker::none;
        EXPECT_EQ(r.mse_marker, expect) << r.variant;
        // PCC is 1 - MSE per cell, so its ranking mirrors MSE
        EXPECT_EQ(r.pcc_marker, expect) << r.variant;
    }
    EXPECT_EQ(*t.row("A")->mse, 0.6);
    EXPECT_EQ(*t.row("B")->mse, 0.4);
    const auto text = t.to_text();
    EXPECT_NE(text.find("*"), std::string::npos);
    EXPECT_NE(text.find("+"), std::string::npos);
}

TEST(BenchTable, FailedCellsAreCountedButSkippedInMedians) {
    BenchTable t;
    t.cells.push_back(cell("A", 0, 0.5, 0.5));
    BenchCell bad;
    bad.variant = "A";
    bad.seed = 1;
    bad.error = "boom";
    t.cells.push_back(bad);
    t.cells.push_back(cell("A", 2, 0.7, 0.3));
    assemble_rows(t);
    EXPECT_EQ(t.rows[0].failed, 1u);
    EXPECT_DOUBLE_EQ(*t.rows[0].mse, 0.6);
    EXPECT_NE(t.to_jsonl().find("boom"), std::string::npos);
}

TEST(Variants, DefaultsAndLookup) {
    const auto all = default_variants();
    ASSERT_EQ(all.size(), 7u);
    EXPECT_EQ(variant_by_name("TSMixer CC").compress, false);
    EXPECT_EQ(variant_by_name("TSMixer CC").cc, true);
    EXPECT_EQ(variant_by_name("AutoMixer LSTM").cell, CellKind::lstm);
    EXPECT_TRUE(variant_by_name("Persistence").persistence);
    EXPECT_THROW(variant_by_name("PatchTST"), ConfigError);
}

TEST(Benchmark, SingleVariantSingleSeedIsOneRow) {
    const auto table = run_benchmark(nine_channel_data(), {variant_by_name("AutoMixer GRU")}, tiny_harness({0}));
    ASSERT_EQ(table.rows.size(), 1u);
    ASSERT_EQ(table.cells.size(), 1u);
    EXPECT_TRUE(table.cells[0].ok) << table.cells[0].error;
    EXPECT_EQ(table.rows[0].mse_marker, Marker::best);
}

TEST(Benchmark, FailedRunIsRecordedAndTableStillEmitted) {
    auto spec = tiny_harness({0, 1});
    spec.config.cr = 0.05;  // infeasible at C = 9
    std::size_t seen = 0;
    spec.on_cell = [&](const BenchCell&) { ++seen; };
    const auto table =
        run_benchmark(nine_channel_data(), {variant_by_name("AutoMixer GRU"), variant_by_name("Persistence")}, spec);
    EXPECT_EQ(seen, 4u);
    ASSERT_EQ(table.rows.size(), 2u);
    EXPECT_EQ(table.row("AutoMixer GRU")->failed, 2u);
    EXPECT_FALSE(table.row("AutoMixer GRU")->mse.has_value());
    EXPECT_NE(table.cells[0].error.find("compression infeasibility"), std::string::npos) << table.cells[0].error;
    EXPECT_TRUE(table.row("Persistence")->mse.has_value());
    EXPECT_EQ(table.row("Persistence")->mse_marker, Marker::best);
}

TEST(Sweep, InfeasibleCellsAndValidationSelection) {
    const auto sweep =
        sweep_cr(nine_channel_data(), {0.05, 0.2, 0.6}, variant_by_name("AutoMixer GRU"), tiny_harness({0}));
    ASSERT_EQ(sweep.entries.size(), 3u);
    EXPECT_FALSE(sweep.entries[0].feasible);
    EXPECT_FALSE(sweep.entries[0].val_mse.has_value());
    EXPECT_EQ(sweep.entries[1].compressed, 7u);
    EXPECT_EQ(sweep.entries[2].compressed, 4u);
    const auto& best = *std::min_element(sweep.entries.begin() + 1, sweep.entries.end(),
                                         [](const auto& a, const auto& b) { return *a.val_mse < *b.val_mse; });
    EXPECT_EQ(sweep.selected_cr, best.cr);
    const auto text = sweep.to_text();
    EXPECT_NE(text.find(" - "), std::string::npos) << text;
}

TEST(Sweep, AllInfeasibleIsAConfigError) {
    EXPECT_THROW(sweep_cr(nine_channel_data(), {0.01, 0.05}, variant_by_name("AutoMixer GRU"), tiny_harness({0})),
                 ConfigError);
    EXPECT_THROW(sweep_cr(nine_channel_data(), {0.2}, variant_by_name("TSMixer"), tiny_harness({0})), ConfigError);
}

TEST(Ablation, UntrainedPretrainingGivesZeroImprovement) {
    auto spec = tiny_harness({0, 1});
    spec.pretrain.epochs_max = 0;
    const auto table = ablate_pretraining(nine_channel_data(), variant_by_name("AutoMixer GRU"), spec);
    ASSERT_EQ(table.pairs.size(), 2u);
    for (const auto& p : table.pairs) EXPECT_EQ(p.pt_mse, p.npt_mse);
    EXPECT_EQ(table.improvement_pct, 0.0);
}
