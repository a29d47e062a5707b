#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "automixer/data.hpp"
#include "automixer/errors.hpp"
#include "automixer/metrics.hpp"
#include "test_support.hpp"

using namespace automixer;
using automixer::testing::random_tensor;

namespace {

// Direct double loops over [B, H, C].
double brute_mse(const Tensor& p, const Tensor& a, const std::vector<std::size_t>& mask) {
    const auto b = p.dim(0), h = p.dim(1), c = p.dim(2);
    double total = 0.0;
    for (auto ch : mask) {
        double s = 0.0;
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t t = 0; t < h; ++t) {
                const double d = p.at((i * h + t) * c + ch) - a.at((i * h + t) * c + ch);
                s += d * d;
            }
        total += s / static_cast<double>(b * h);
    }
    return total / static_cast<double>(mask.size());
}

double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i];
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov += (x[i] - sx / n) * (y[i] - sy / n);
        vx += (x[i] - sx / n) * (x[i] - sx / n);
        vy += (y[i] - sy / n) * (y[i] - sy / n);
    }
    return (cov / n) / (std::sqrt(vx / n) * std::sqrt(vy / n));
}

std::vector<double> channel_series(const Tensor& t, std::size_t ch) {
    const auto c = t.dim(t.rank() - 1);
    std::vector<double> out;
    for (std::size_t i = ch; i < t.numel(); i += c) out.push_back(t.at(i));
    return out;
}

Tensor affine(const Tensor& t, double scale, double shift) {
    std::vector<double> v(t.values().begin(), t.values().end());
    for (auto& x : v) x = scale * x + shift;
    return Tensor(t.shape(), std::move(v));
}

}  // namespace

TEST(MseMasked, Examples) {
    std::mt19937_64 rng(1);
    const auto a = random_tensor({4, 6, 3}, rng, -2, 2, false);
    EXPECT_EQ(mse_masked(a, a, {0, 1, 2}), 0.0);
    const auto p = random_tensor({4, 6, 3}, rng, -2, 2, false);
    EXPECT_DOUBLE_EQ(mse_masked(p, a, {1}), per_channel_mse(p, a)[1]);
    EXPECT_THROW(mse_masked(p, a, {}), UsageError);
}

TEST(MseMasked, MatchesBruteForce) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t b = 1 + rng() % 5, h = 1 + rng() % 7;
        const auto p = random_tensor({b, h, 3}, rng, -3, 3, false);
        const auto a = random_tensor({b, h, 3}, rng, -3, 3, false);
        std::vector<std::size_t> mask;
        for (std::size_t c = 0; c < 3; ++c)
            if (rng() % 2) mask.push_back(c);
        if (mask.empty()) mask.push_back(rng() % 3);
        ASSERT_NEAR(mse_masked(p, a, mask), brute_mse(p, a, mask), 1e-12);
    }
}

TEST(Pearson, Examples) {
    std::mt19937_64 rng(3);
    const auto a = random_tensor({5, 4, 2}, rng, -2, 2, false);
    EXPECT_NEAR(pcc_masked(a, a, {0, 1}), 1.0, 1e-12);
    EXPECT_NEAR(pcc_masked(affine(a, 2.0, 5.0), a, {0, 1}), 1.0, 1e-12);
    EXPECT_NEAR(pcc_masked(affine(a, -1.0, 0.0), a, {0, 1}), -1.0, 1e-12);
    EXPECT_FALSE(pearson({1, 2, 3}, {4, 4, 4}).has_value());
    EXPECT_EQ(pearson({4, 4, 4}, {1, 2, 3}), 0.0);
}

TEST(Pearson, MatchesDirectFormulaAndStaysBounded) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(50), y(50);
        const double rho = std::uniform_real_distribution<double>(-1, 1)(rng);
        for (std::size_t i = 0; i < 50; ++i) {
            x[i] = n(rng);
            y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * n(rng);
        }
        const double r = *pearson(x, y);
        ASSERT_NEAR(r, brute_pearson(x, y), 1e-12);
        ASSERT_LE(std::abs(r), 1.0);
    }
}

TEST(Pearson, MaskedMeanAndPositiveAffineInvariancePerChannel) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_tensor({3, 8, 4}, rng, -2, 2, false);
        const auto a = random_tensor({3, 8, 4}, rng, -2, 2, false);
        const std::vector<std::size_t> mask{0, 2, 3};
        double expect = 0.0;
        for (auto c : mask) expect += brute_pearson(channel_series(p, c), channel_series(a, c));
        expect /= 3.0;
        const double got = pcc_masked(p, a, mask);
        ASSERT_NEAR(got, expect, 1e-12);
        ASSERT_LE(std::abs(got), 1.0);
        // rescale channel 2 of the predictions only
        auto v = p.values();
        std::vector<double> scaled(v.begin(), v.end());
        for (std::size_t i = 2; i < scaled.size(); i += 4) scaled[i] = 7.5 * scaled[i] - 3.0;
        ASSERT_NEAR(pcc_masked(Tensor(p.shape(), scaled), a, mask), got, 1e-12);
    }
}

TEST(Pearson, ConstantActualChannelsAreExcluded) {
    std::mt19937_64 rng(6);
    const auto p = random_tensor({2, 5, 2}, rng, -2, 2, false);
    auto av = random_tensor({2, 5, 2}, rng, -2, 2, false).values();
    std::vector<double> actual(av.begin(), av.end());
    for (std::size_t i = 1; i < actual.size(); i += 2) actual[i] = 3.0;
    const Tensor a(p.shape(), actual);
    std::vector<std::size_t> excluded;
    auto sink = set_warning_sink([](std::string_view) {});
    EXPECT_NEAR(pcc_masked(p, a, {0, 1}, &excluded),
                brute_pearson(channel_series(p, 0), channel_series(a, 0)), 1e-12);
    EXPECT_EQ(excluded, (std::vector<std::size_t>{1}));
    EXPECT_THROW(pcc_masked(p, a, {1}), DataError);
    set_warning_sink(sink);
}

TEST(SubsetAccuracy, Examples) {
    const LabelMatrix truth{{1, 0, 0}, {0, 0, 0}, {1, 1, 0}, {0, 0, 1}};
    EXPECT_EQ(subset_accuracy(truth, truth), 1.0);
    auto one_wrong = truth;
    one_wrong[2][1] = 0;
    EXPECT_EQ(subset_accuracy(one_wrong, truth), 0.75);
    EXPECT_THROW(subset_accuracy({{1, 0}}, {{1, 0, 0}}), UsageError);
    EXPECT_THROW(subset_accuracy({{1, 0, 0}}, truth), UsageError);
}

TEST(SubsetAccuracy, MatchesBruteForce) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 20, e = 1 + rng() % 4;
        LabelMatrix p(n, std::vector<int>(e)), t(n, std::vector<int>(e));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < e; ++j) {
                t[i][j] = static_cast<int>(rng() % 2);
                p[i][j] = rng() % 4 == 0 ? 1 - t[i][j] : t[i][j];
            }
        std::size_t same = 0;
        for (std::size_t i = 0; i < n; ++i) same += p[i] == t[i];
        ASSERT_EQ(subset_accuracy(p, t), static_cast<double>(same) / static_cast<double>(n));
    }
}

TEST(ThresholdLabels, HalfProbabilityBoundary) {
    const Tensor logits({2, 3}, {-1.0, 0.0, 2.0, 1e-9, -1e-9, 30.0});
    EXPECT_EQ(threshold_labels(logits), (LabelMatrix{{0, 0, 1}, {1, 0, 1}}));
}

TEST(Persistence, ConstantAndShape) {
    const Tensor x({4, 2}, {1, 5, 2, 6, 3, 7, 3, 7});
    const auto y = baseline_persistence(x, 6);
    EXPECT_EQ(y.shape(), (Shape{6, 2}));
    const Tensor constant({6, 2}, {3, 7, 3, 7, 3, 7, 3, 7, 3, 7, 3, 7});
    EXPECT_EQ(mse_masked(reshape(y, {1, 6, 2}), reshape(constant, {1, 6, 2}), {0, 1}), 0.0);
    EXPECT_EQ(baseline_persistence(Tensor::zeros({3, 4, 2}), 5).shape(), (Shape{3, 5, 2}));
}

TEST(Persistence, LinearTrendClosedForm) {
    for (std::size_t horizon : {1u, 5u, 24u}) {
        for (double slope : {0.1, -2.0}) {
            const std::size_t sl = 10;
            std::vector<double> hist, fut;
            for (std::size_t t = 0; t < sl; ++t) hist.push_back(slope * static_cast<double>(t));
            for (std::size_t h = 1; h <= horizon; ++h) fut.push_back(slope * static_cast<double>(sl - 1 + h));
            const auto pred = baseline_persistence(Tensor({sl, 1}, hist), horizon);
            const double mse = mse_masked(reshape(pred, {1, horizon, 1}), Tensor({1, horizon, 1}, fut), {0});
            const double h = static_cast<double>(horizon);
            EXPECT_NEAR(mse, slope * slope * h * (h + 1) * (2 * h + 1) / (6 * h), 1e-9 * (1 + mse));
        }
    }
}

TEST(MetricReport, JsonRoundTrip) {
    MetricReport r;
    r.task = "kpi-forecast";
    r.channel_names = {"a", "b"};
    r.per_channel_mse = {0.25, 1.5};
    r.kpi_mse = 0.25;
    r.kpi_pcc = 0.875;
    r.windows = 12;
    r.config_hash = "abc";
    r.seed = 3;
    const auto back = MetricReport::from_json(r.to_json());
    EXPECT_EQ(back.to_json().dump(), r.to_json().dump());
    EXPECT_FALSE(back.subset_accuracy.has_value());
}
