#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "stakes/metrics.hpp"

using namespace stakes;

namespace {

std::vector<ScoredSample> make(const std::vector<double>& s, const std::vector<int>& y) {
    std::vector<ScoredSample> out;
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s[i], y[i]});
    return out;
}

// Random scores on a coarse grid so ties are common; both labels present.
std::pair<std::vector<double>, std::vector<int>> random_set(std::mt19937_64& gen, std::size_t n) {
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(gen() % 7) / 6.0;
        y[i] = static_cast<int>(gen() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    return {s, y};
}

}  // namespace

TEST(Auroc, Examples) {
    EXPECT_DOUBLE_EQ(auroc(make({0.1, 0.9}, {0, 1})), 1.0);
    EXPECT_DOUBLE_EQ(auroc(make({0.4, 0.4, 0.4, 0.4}, {0, 1, 1, 0})), 0.5);
    EXPECT_DOUBLE_EQ(auroc(make({0.2, 0.8, 0.6, 0.4}, {0, 1, 0, 1})), 0.75);
    EXPECT_DOUBLE_EQ(oracle::pair_auroc({0.2, 0.8, 0.6, 0.4}, {0, 1, 0, 1}), 0.75);
}

TEST(Auroc, NeedsBothLabels) {
    EXPECT_THROW(auroc(make({0.1, 0.2}, {1, 1})), Error);
    EXPECT_THROW(auroc(make({0.1, std::nan("")}, {1, 0})), Error);
}

TEST(Auroc, MatchesPairCounting) {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 500; ++trial) {
        const auto [s, y] = random_set(gen, 2 + gen() % 29);
        EXPECT_NEAR(auroc(make(s, y)), oracle::pair_auroc(s, y), 1e-12);
    }
}

TEST(Auroc, Invariances) {
    std::mt19937_64 gen(2);
    for (int trial = 0; trial < 100; ++trial) {
        auto [s, y] = random_set(gen, 2 + gen() % 29);
        const double a = auroc(make(s, y));
        std::vector<double> t(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        EXPECT_NEAR(auroc(make(t, y)), a, 1e-12);
        std::vector<int> flipped(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) flipped[i] = 1 - y[i];
        EXPECT_NEAR(auroc(make(s, flipped)), 1.0 - a, 1e-12);
        auto s2 = s;
        auto y2 = y;
        s2.insert(s2.end(), s.begin(), s.end());
        y2.insert(y2.end(), y.begin(), y.end());
        EXPECT_NEAR(auroc(make(s2, y2)), a, 1e-12);
        EXPECT_NEAR(tpr_at_fpr(make(s2, y2), 0.2), tpr_at_fpr(make(s, y), 0.2), 1e-12);
    }
}

TEST(TprAtFpr, Examples) {
    EXPECT_DOUBLE_EQ(tpr_at_fpr(make({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}), 0.01), 1.0);
    // One negative above every positive among ten negatives: admitting it costs FPR 0.1.
    std::vector<double> s{0.99, 0.8, 0.7};
    std::vector<int> y{0, 1, 1};
    for (int i = 0; i < 9; ++i) {
        s.push_back(0.1 + 0.01 * i);
        y.push_back(0);
    }
    EXPECT_DOUBLE_EQ(tpr_at_fpr(make(s, y), 0.01), 0.0);
    EXPECT_DOUBLE_EQ(tpr_at_fpr(make(s, y), 0.1), 1.0);
    // Threshold 0.7 admits one false positive of two (FPR 0.5) and both positives.
    EXPECT_DOUBLE_EQ(tpr_at_fpr(make({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}), 0.5), 1.0);
    EXPECT_DOUBLE_EQ(oracle::sweep_tpr_at_fpr({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}, 0.5), 1.0);
    EXPECT_DOUBLE_EQ(tpr_at_fpr(make({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}), 0.49), 0.5);
    EXPECT_THROW(tpr_at_fpr(make({0.1, 0.9}, {0, 1}), 0.0), Error);
    EXPECT_THROW(tpr_at_fpr(make({0.1, 0.9}, {0, 1}), 1.0), Error);
}

TEST(TprAtFpr, MatchesSweepAndMonotone) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 300; ++trial) {
        const auto [s, y] = random_set(gen, 2 + gen() % 29);
        double prev = 0.0;
        for (double b : {0.01, 0.05, 0.1, 0.25, 0.5, 0.9}) {
            const double t = tpr_at_fpr(make(s, y), b);
            EXPECT_DOUBLE_EQ(t, oracle::sweep_tpr_at_fpr(s, y, b));
            EXPECT_GE(t, prev);
            prev = t;
        }
    }
}

TEST(Roc, ShapeAndArea) {
    const auto r = roc_curve(make({0.2, 0.7}, {0, 1}));
    ASSERT_EQ(r.fpr.size(), 3u);
    EXPECT_TRUE(std::isinf(r.thresholds[0]));
    EXPECT_EQ(r.fpr[1], 0.0);
    EXPECT_EQ(r.tpr[1], 1.0);
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 300; ++trial) {
        auto [s, y] = random_set(gen, 2 + gen() % 29);
        const auto curve = roc_curve(make(s, y));
        EXPECT_NEAR(curve.area(), auroc(make(s, y)), 1e-12);
        EXPECT_EQ(curve.fpr.back(), 1.0);
        EXPECT_EQ(curve.tpr.back(), 1.0);
        for (auto& l : y) l = 1 - l;
        EXPECT_NEAR(roc_curve(make(s, y)).area(), 1.0 - curve.area(), 1e-12);
    }
}

TEST(Calibration, Examples) {
    const auto half = calibration_curve(make({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}));
    for (std::size_t b = 0; b < 10; ++b) {
        if (b == 5) {
            EXPECT_EQ(half.bin_count[b], 4u);
            EXPECT_DOUBLE_EQ(*half.bin_mean_score[b], 0.5);
            EXPECT_DOUBLE_EQ(*half.bin_empirical_rate[b], 0.5);
        } else {
            EXPECT_EQ(half.bin_count[b], 0u);
            EXPECT_FALSE(half.bin_mean_score[b].has_value());
        }
    }
    const auto low = calibration_curve(make(std::vector<double>(10, 0.05), std::vector<int>(10, 0)));
    EXPECT_EQ(low.bin_count[0], 10u);
    EXPECT_DOUBLE_EQ(*low.bin_empirical_rate[0], 0.0);
    const auto edge = calibration_curve(make({1.0, 0.0}, {1, 0}));
    EXPECT_EQ(edge.bin_count[9], 1u);
    EXPECT_EQ(edge.bin_count[0], 1u);
    EXPECT_THROW(calibration_curve(make({1.2}, {1})), Error);
}

TEST(Calibration, CountsSumToN) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ScoredSample> s(1 + gen() % 200);
        for (auto& x : s) x = {u(gen), static_cast<int>(gen() % 2)};
        const auto c = calibration_curve(s, 1 + gen() % 20);
        std::size_t total = 0;
        for (auto n : c.bin_count) total += n;
        EXPECT_EQ(total, s.size());
    }
}

TEST(MeanCi, Examples) {
    const std::vector<double> same{0.7, 0.7, 0.7};
    EXPECT_DOUBLE_EQ(mean_ci(same).half_width, 0.0);
    const std::vector<double> two{0.0, 1.0};
    const auto ci = mean_ci(two);
    EXPECT_DOUBLE_EQ(ci.mean, 0.5);
    EXPECT_NEAR(ci.half_width, 12.7062 * (0.70710678 / std::sqrt(2.0)), 1e-3);
    EXPECT_NEAR(ci.half_width, 6.3531, 1e-4);
    // t(0.975, 2) = 4.30265
    const std::vector<double> three{1.0, 2.0, 3.0};
    EXPECT_NEAR(mean_ci(three).half_width, 4.302653 * 1.0 / std::sqrt(3.0), 1e-5);
    const std::vector<double> perm{3.0, 1.0, 2.0};
    EXPECT_DOUBLE_EQ(mean_ci(perm).half_width, mean_ci(three).half_width);
    EXPECT_THROW(mean_ci(std::vector<double>{1.0}), Error);
}
