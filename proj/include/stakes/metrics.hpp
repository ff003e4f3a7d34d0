#pragma once

// Binary classification metrics over (score, label) pairs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "stakes/error.hpp"

namespace stakes {

struct ScoredSample {
    double score = 0.0;
    int label = 0;  // 1 = positive (high stakes)
};

namespace detail {

inline std::pair<std::size_t, std::size_t> count_labels(std::span<const ScoredSample> samples) {
    std::size_t pos = 0;
    std::size_t neg = 0;
    for (const auto& s : samples) {
        require(std::isfinite(s.score), ErrorKind::NonFinite, "scores must be finite");
        require(s.label == 0 || s.label == 1, ErrorKind::InvalidArgument, "labels must be 0 or 1");
        (s.label == 1 ? pos : neg) += 1;
    }
    require(pos > 0 && neg > 0, ErrorKind::InvalidArgument, "metric needs both labels present");
    return {pos, neg};
}

/// Samples sorted by descending score.
inline std::vector<ScoredSample> by_score_desc(std::span<const ScoredSample> samples) {
    std::vector<ScoredSample> sorted(samples.begin(), samples.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });
    return sorted;
}

}  // namespace detail

/// Mann-Whitney AUROC: P(s+ > s-) + 0.5 P(s+ = s-), via midranks.
inline double auroc(std::span<const ScoredSample> samples) {
    const auto [pos, neg] = detail::count_labels(samples);
    std::vector<ScoredSample> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.score < b.score; });
    // Work in doubled ranks so tie midranks stay integral.
    long double rank_sum_x2 = 0.0L;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        std::size_t tied_pos = 0;
        while (j < sorted.size() && sorted[j].score == sorted[i].score) {
            tied_pos += static_cast<std::size_t>(sorted[j].label);
            ++j;
        }
        // ranks i+1 .. j share midrank (i + 1 + j) / 2
        rank_sum_x2 += static_cast<long double>(tied_pos) * static_cast<long double>(i + 1 + j);
        i = j;
    }
    const long double u = rank_sum_x2 / 2.0L - static_cast<long double>(pos) * (pos + 1) / 2.0L;
    return static_cast<double>(u / (static_cast<long double>(pos) * static_cast<long double>(neg)));
}

struct RocCurve {
    std::vector<double> thresholds;  // descending; first is +inf
    std::vector<double> fpr;
    std::vector<double> tpr;

    /// Trapezoidal area under the curve.
    double area() const {
        long double a = 0.0L;
        for (std::size_t i = 1; i < fpr.size(); ++i) {
            a += static_cast<long double>(fpr[i] - fpr[i - 1]) * (tpr[i] + tpr[i - 1]) / 2.0L;
        }
        return static_cast<double>(a);
    }
};

/// One point per distinct score (predict positive when score >= threshold),
/// preceded by the (0, 0) point at threshold +inf.
inline RocCurve roc_curve(std::span<const ScoredSample> samples) {
    const auto [pos, neg] = detail::count_labels(samples);
    const auto sorted = detail::by_score_desc(samples);
    RocCurve roc;
    roc.thresholds.push_back(std::numeric_limits<double>::infinity());
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double t = sorted[i].score;
        while (i < sorted.size() && sorted[i].score == t) {
            (sorted[i].label == 1 ? tp : fp) += 1;
            ++i;
        }
        roc.thresholds.push_back(t);
        roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
        roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
    }
    return roc;
}

/// Best TPR over thresholds (observed scores and +inf) whose FPR stays within
/// the budget. No interpolation between operating points.
inline double tpr_at_fpr(std::span<const ScoredSample> samples, double fpr_budget) {
    require(fpr_budget > 0.0 && fpr_budget < 1.0, ErrorKind::InvalidArgument, "fpr budget must be in (0, 1)");
    const auto roc = roc_curve(samples);
    double best = 0.0;
    for (std::size_t i = 0; i < roc.fpr.size(); ++i) {
        if (roc.fpr[i] <= fpr_budget) best = std::max(best, roc.tpr[i]);
    }
    return best;
}

struct CalibrationCurve {
    std::vector<double> bin_edges;  // bins + 1 ascending edges over [0, 1]
    std::vector<std::size_t> bin_count;
    std::vector<std::optional<double>> bin_mean_score;  // nullopt for empty bins
    std::vector<std::optional<double>> bin_empirical_rate;
};

/// Equal-width bins on [0, 1]; bins are [lo, hi) except the last, which
/// includes 1.
inline CalibrationCurve calibration_curve(std::span<const ScoredSample> samples, std::size_t bins = 10) {
    require(bins >= 1, ErrorKind::InvalidArgument, "calibration needs at least one bin");
    require(!samples.empty(), ErrorKind::InvalidArgument, "calibration needs at least one sample");
    CalibrationCurve c;
    c.bin_edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) c.bin_edges[b] = static_cast<double>(b) / static_cast<double>(bins);
    std::vector<double> score_sum(bins, 0.0);
    std::vector<std::size_t> positives(bins, 0);
    c.bin_count.assign(bins, 0);
    for (const auto& s : samples) {
        require(s.score >= 0.0 && s.score <= 1.0, ErrorKind::InvalidArgument, "calibration scores must be in [0, 1]");
        auto b = static_cast<std::size_t>(s.score * static_cast<double>(bins));
        b = std::min(b, bins - 1);
        c.bin_count[b] += 1;
        score_sum[b] += s.score;
        positives[b] += static_cast<std::size_t>(s.label == 1);
    }
    for (std::size_t b = 0; b < bins; ++b) {
        if (c.bin_count[b] == 0) {
            c.bin_mean_score.emplace_back();
            c.bin_empirical_rate.emplace_back();
        } else {
            const auto n = static_cast<double>(c.bin_count[b]);
            c.bin_mean_score.emplace_back(score_sum[b] / n);
            c.bin_empirical_rate.emplace_back(static_cast<double>(positives[b]) / n);
        }
    }
    return c;
}

struct MeanCi {
    double mean = 0.0;
    double half_width = 0.0;
};

/// Mean and Student-t confidence half-width with n - 1 degrees of freedom.
inline MeanCi mean_ci(std::span<const double> values, double confidence = 0.95) {
    require(values.size() >= 2, ErrorKind::InvalidArgument, "confidence interval needs at least two values");
    require(confidence > 0.0 && confidence < 1.0, ErrorKind::InvalidArgument, "confidence must be in (0, 1)");
    const auto n = static_cast<double>(values.size());
    double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double residual = 0.0;
    for (double v : values) residual += v - mean;
    mean += residual / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const boost::math::students_t dist(n - 1.0);
    const double t = boost::math::quantile(dist, 0.5 + confidence / 2.0);
    return {mean, t * sd / std::sqrt(n)};
}

}  // namespace stakes
