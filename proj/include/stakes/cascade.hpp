#pragma once

// Two-stage monitoring: a probe scores every sample, k% of samples are routed
// to an expensive baseline monitor, and the two scores are combined. Costs are
// tracked in FLOPs (one multiply-add = 2 FLOPs).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "stakes/error.hpp"
#include "stakes/metrics.hpp"
#include "stakes/probe.hpp"

namespace stakes {

enum class Selection { Mid, Top, Bottom };
enum class Combination { Average, Max, Overwrite };

inline std::string_view to_string(Selection s) {
    switch (s) {
        case Selection::Mid: return "mid";
        case Selection::Top: return "top";
        case Selection::Bottom: return "bottom";
    }
    return "mid";
}

inline std::string_view to_string(Combination c) {
    switch (c) {
        case Combination::Average: return "average";
        case Combination::Max: return "max";
        case Combination::Overwrite: return "overwrite";
    }
    return "average";
}

inline std::optional<Selection> parse_selection(std::string_view s) {
    if (s == "mid") return Selection::Mid;
    if (s == "top") return Selection::Top;
    if (s == "bottom") return Selection::Bottom;
    return std::nullopt;
}

inline std::optional<Combination> parse_combination(std::string_view s) {
    if (s == "average") return Combination::Average;
    if (s == "max") return Combination::Max;
    if (s == "overwrite") return Combination::Overwrite;
    return std::nullopt;
}

struct RoutingConfig {
    double budget_percent = 0.0;  // k in [0, 100]
    Selection selection = Selection::Mid;
    Combination combination = Combination::Average;
};

/// round(k / 100 * n), halves rounded up.
inline std::size_t routed_count(double budget_percent, std::size_t n) {
    require(budget_percent >= 0.0 && budget_percent <= 100.0, ErrorKind::InvalidArgument,
            "budget must be a percentage in [0, 100]");
    const double exact = budget_percent * static_cast<double>(n) / 100.0;
    return std::min(n, static_cast<std::size_t>(std::floor(exact + 0.5)));
}

/// Indices (ascending) of the samples routed to the second stage.
///
/// Ranks come from sorting by (score, index). `Mid` takes the ranks closest to
/// the lower median rank floor((n - 1) / 2); at equal distance the higher rank
/// wins, which keeps even-sized selections centred. `Top`/`Bottom` take the
/// highest/lowest ranks.
inline std::vector<std::size_t> select(std::span<const double> probe_scores, const RoutingConfig& config) {
    const std::size_t n = probe_scores.size();
    const std::size_t count = routed_count(config.budget_percent, n);
    for (double s : probe_scores) require(std::isfinite(s), ErrorKind::NonFinite, "probe scores must be finite");

    std::vector<std::size_t> by_rank(n);
    for (std::size_t i = 0; i < n; ++i) by_rank[i] = i;
    std::sort(by_rank.begin(), by_rank.end(), [&](std::size_t a, std::size_t b) {
        return probe_scores[a] != probe_scores[b] ? probe_scores[a] < probe_scores[b] : a < b;
    });

    std::vector<std::size_t> chosen;
    chosen.reserve(count);
    switch (config.selection) {
        case Selection::Bottom:
            chosen.assign(by_rank.begin(), by_rank.begin() + static_cast<std::ptrdiff_t>(count));
            break;
        case Selection::Top:
            chosen.assign(by_rank.end() - static_cast<std::ptrdiff_t>(count), by_rank.end());
            break;
        case Selection::Mid: {
            if (count == 0) break;
            const std::size_t median = (n - 1) / 2;
            // Expand outward from the median: above first, then below, alternately.
            std::size_t lo = median;       // next candidate below is lo - 1
            std::size_t hi = median + 1;   // next candidate above
            chosen.push_back(by_rank[median]);
            while (chosen.size() < count) {
                const std::size_t dist_hi = hi < n ? hi - median : SIZE_MAX;
                const std::size_t dist_lo = lo > 0 ? median - (lo - 1) : SIZE_MAX;
                if (dist_hi <= dist_lo) {
                    chosen.push_back(by_rank[hi++]);
                } else {
                    chosen.push_back(by_rank[--lo]);
                }
            }
            break;
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

inline double combine(double probe_score, double baseline_score, Combination rule) {
    require(probe_score >= 0.0 && probe_score <= 1.0 && baseline_score >= 0.0 && baseline_score <= 1.0,
            ErrorKind::InvalidArgument, "scores to combine must lie in [0, 1]");
    switch (rule) {
        case Combination::Average: return 0.5 * (probe_score + baseline_score);
        case Combination::Max: return std::max(probe_score, baseline_score);
        case Combination::Overwrite: return baseline_score;
    }
    return baseline_score;
}

enum class ModelFamily { Dense, SlidingWindow };

/// Per-token inference cost of a transformer as a function of sequence length:
///   dense:          S * (2N + 2md S)
///   sliding window: S * (2N + 2md (5/6) w + 2md (1/6) S)   (5 local : 1 global layers)
/// The S^2 attention term is dropped unless `include_quadratic` is set.
struct CostModel {
    std::string name;
    ModelFamily family = ModelFamily::Dense;
    double total_params = 0.0;  // N
    std::uint64_t layers = 0;   // m
    std::uint64_t hidden = 0;   // d
    std::optional<std::uint64_t> window;  // w, sliding-window family only
    bool include_quadratic = false;

    void validate() const {
        require(total_params > 0.0 && layers > 0 && hidden > 0, ErrorKind::InvalidArgument,
                "cost model needs positive N, m and d");
        require(window.has_value() == (family == ModelFamily::SlidingWindow), ErrorKind::InvalidArgument,
                "window is required exactly for sliding-window models");
        if (window) require(*window > 0, ErrorKind::InvalidArgument, "window must be positive");
    }

    /// FLOPs per token independent of S.
    double linear_coefficient() const {
        validate();
        double c = 2.0 * total_params;
        if (family == ModelFamily::SlidingWindow) {
            c += static_cast<double>(2 * layers * hidden * 5 * *window) / 6.0;
        }
        return c;
    }

    /// Coefficient of S^2.
    double quadratic_coefficient() const {
        validate();
        const auto two_md = static_cast<double>(2 * layers * hidden);
        return family == ModelFamily::Dense ? two_md : two_md / 6.0;
    }

    static CostModel dense(std::string name, double n, std::uint64_t m, std::uint64_t d) {
        return {std::move(name), ModelFamily::Dense, n, m, d, std::nullopt, false};
    }
    static CostModel sliding(std::string name, double n, std::uint64_t m, std::uint64_t d, std::uint64_t w) {
        return {std::move(name), ModelFamily::SlidingWindow, n, m, d, w, false};
    }
};

inline std::vector<CostModel> known_cost_models() {
    return {
        CostModel::dense("llama-3.3-70b", 70e9, 80, 8192),
        CostModel::dense("llama-3.1-8b", 8e9, 32, 4096),
        CostModel::dense("llama-3.2-1b", 1e9, 16, 2048),
        CostModel::sliding("gemma-3-27b", 27e9, 62, 5376, 1024),
        CostModel::sliding("gemma-3-12b", 12e9, 48, 3840, 1024),
        CostModel::sliding("gemma-3-1b", 1e9, 26, 1152, 512),
    };
}

inline std::optional<CostModel> find_cost_model(std::string_view name) {
    for (auto& m : known_cost_models()) {
        if (m.name == name) return m;
    }
    return std::nullopt;
}

inline double model_flops(const CostModel& model, std::size_t seq_len) {
    require(seq_len >= 1, ErrorKind::InvalidArgument, "sequence length must be >= 1");
    const auto S = static_cast<double>(seq_len);
    double flops = model.linear_coefficient() * S;
    if (model.include_quadratic) flops += model.quadratic_coefficient() * S * S;
    return flops;
}

/// Softmax and Attention touch every activation twice (weights and values);
/// the other pools once.
inline double probe_flops(ProbeKind kind, std::size_t dim, std::size_t seq_len) {
    require(seq_len >= 1, ErrorKind::InvalidArgument, "sequence length must be >= 1");
    const double per_pass = static_cast<double>(dim) * static_cast<double>(seq_len);
    return (kind == ProbeKind::Attention || kind == ProbeKind::Softmax) ? 2.0 * per_pass : per_pass;
}

struct BaselineScore {
    double score = 0.0;
    std::size_t token_count = 0;  // tokens the baseline processes for this sample
};

using BaselineScores = std::unordered_map<std::string, BaselineScore>;

/// Line-delimited {"example_id", "score", "token_count"} records.
inline BaselineScores load_baseline_scores(const std::filesystem::path& source) {
    std::ifstream in(source);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open baseline score file " + source.string());
    BaselineScores out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string id;
        BaselineScore entry;
        try {
            const auto j = nlohmann::json::parse(line);
            id = j.at("example_id").get<std::string>();
            entry.score = j.at("score").get<double>();
            entry.token_count = j.at("token_count").get<std::size_t>();
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Parse, source.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
        require(entry.score >= 0.0 && entry.score <= 1.0, ErrorKind::InvalidArgument,
                "baseline score for '" + id + "' is outside [0, 1]");
        require(out.emplace(id, entry).second, ErrorKind::DuplicateId, "duplicate baseline score for '" + id + "'");
    }
    return out;
}

inline void save_baseline_scores(const BaselineScores& scores, std::span<const std::string> order,
                                 const std::filesystem::path& destination) {
    std::ofstream out(destination, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + destination.string() + " for writing");
    for (const auto& id : order) {
        const auto& s = scores.at(id);
        nlohmann::ordered_json j;
        j["example_id"] = id;
        j["score"] = s.score;
        j["token_count"] = s.token_count;
        out << j.dump() << '\n';
    }
}

struct CascadeSample {
    std::string example_id;
    double probe_score = 0.0;
    std::size_t probe_tokens = 1;  // S seen by the probe
    int label = 0;
};

struct CascadeOutcome {
    double probe_score = 0.0;
    bool routed = false;
    std::optional<double> baseline_score;
    double final_score = 0.0;
};

struct CascadeResult {
    std::vector<CascadeOutcome> outcomes;  // parallel to the input samples
    double probe_flops = 0.0;
    double baseline_flops = 0.0;

    double total_flops() const { return probe_flops + baseline_flops; }

    std::vector<ScoredSample> final_scores(std::span<const CascadeSample> samples) const {
        std::vector<ScoredSample> out;
        out.reserve(outcomes.size());
        for (std::size_t i = 0; i < outcomes.size(); ++i) out.push_back({outcomes[i].final_score, samples[i].label});
        return out;
    }
};

/// Probe FLOPs accrue on every sample; baseline FLOPs only on routed ones,
/// using the baseline's own token count.
inline CascadeResult run_cascade(std::span<const CascadeSample> samples, const BaselineScores& baseline,
                                 const RoutingConfig& routing, const ProbeConfig& probe, const CostModel& baseline_cost) {
    std::vector<double> scores;
    scores.reserve(samples.size());
    for (const auto& s : samples) scores.push_back(s.probe_score);
    const auto routed = select(scores, routing);

    CascadeResult result;
    result.outcomes.reserve(samples.size());
    for (const auto& s : samples) {
        result.outcomes.push_back({s.probe_score, false, std::nullopt, s.probe_score});
        result.probe_flops += probe_flops(probe.kind, probe.dim, s.probe_tokens);
    }
    for (std::size_t i : routed) {
        const auto& s = samples[i];
        const auto it = baseline.find(s.example_id);
        require(it != baseline.end(), ErrorKind::MissingData, "no baseline score for routed sample '" + s.example_id + "'");
        auto& o = result.outcomes[i];
        o.routed = true;
        o.baseline_score = it->second.score;
        o.final_score = combine(s.probe_score, it->second.score, routing.combination);
        result.baseline_flops += model_flops(baseline_cost, it->second.token_count);
    }
    return result;
}

struct CascadeRow {
    double k = 0.0;
    Selection selection = Selection::Mid;
    Combination combination = Combination::Average;
    double auroc = 0.0;
    double tpr_at_1pct_fpr = 0.0;
    double probe_flops = 0.0;
    double baseline_flops = 0.0;
    double total_flops = 0.0;
};

inline std::vector<double> default_budget_sweep() {
    std::vector<double> ks;
    for (int k = 0; k <= 100; k += 10) ks.push_back(k);
    return ks;
}

inline std::vector<CascadeRow> cascade_sweep(std::span<const CascadeSample> samples, const BaselineScores& baseline,
                                             std::span<const double> budgets, std::span<const Selection> selections,
                                             std::span<const Combination> combinations, const ProbeConfig& probe,
                                             const CostModel& baseline_cost) {
    std::vector<CascadeRow> rows;
    for (auto sel : selections) {
        for (auto comb : combinations) {
            for (double k : budgets) {
                const auto result = run_cascade(samples, baseline, {k, sel, comb}, probe, baseline_cost);
                const auto scored = result.final_scores(samples);
                rows.push_back({k, sel, comb, auroc(scored), tpr_at_fpr(scored, 0.01), result.probe_flops,
                                result.baseline_flops, result.total_flops()});
            }
        }
    }
    return rows;
}

}  // namespace stakes
