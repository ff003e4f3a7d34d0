#pragma once

// Dataset hygiene: stakes/confidence filtering with label assignment,
// confound-word discovery and removal, and distribution-shift statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stakes/error.hpp"
#include "stakes/manifest.hpp"
#include "stakes/text.hpp"

namespace stakes {

struct FilterPolicy {
    int ambiguous_low = 4;
    int ambiguous_high = 7;
    int min_confidence = 8;
    std::pair<int, int> low_range{1, 3};
    std::pair<int, int> high_range{8, 10};

    /// Synthetic training data.
    static FilterPolicy training() { return {}; }

    /// Labeling of external evaluation datasets, which used a looser confidence cut.
    static FilterPolicy evaluation() {
        FilterPolicy p;
        p.min_confidence = 6;
        return p;
    }

    void validate() const {
        require(low_range.first <= low_range.second && low_range.second < ambiguous_low &&
                    ambiguous_low <= ambiguous_high && ambiguous_high < high_range.first &&
                    high_range.first <= high_range.second,
                ErrorKind::InvalidArgument, "filter policy needs low < ambiguous < high ranges");
    }
};

enum class RemovalReason { Ambiguous, LowConfidence, OutOfRange };

inline std::string_view to_string(RemovalReason r) {
    switch (r) {
        case RemovalReason::Ambiguous: return "ambiguous";
        case RemovalReason::LowConfidence: return "low_confidence";
        case RemovalReason::OutOfRange: return "out_of_range";
    }
    return "ambiguous";
}

struct Removal {
    std::string example_id;
    RemovalReason reason = RemovalReason::Ambiguous;
};

struct FilterResult {
    DatasetManifest kept;
    std::vector<Removal> removed;

    std::map<RemovalReason, std::size_t> counts() const {
        std::map<RemovalReason, std::size_t> c;
        for (const auto& r : removed) ++c[r.reason];
        return c;
    }
};

/// Drops ambiguous-stakes and low-confidence records and labels the rest.
/// Ambiguity is checked before confidence, so each removal has one reason.
inline FilterResult filter_records(const DatasetManifest& manifest, const FilterPolicy& policy) {
    policy.validate();
    FilterResult out;
    out.kept.name = manifest.name;
    for (const auto& r : manifest.records) {
        require(r.stakes_score.has_value() && r.confidence.has_value(), ErrorKind::MissingData,
                "record '" + r.example_id + "' lacks stakes_score or confidence");
        const int s = *r.stakes_score;
        if (s >= policy.ambiguous_low && s <= policy.ambiguous_high) {
            out.removed.push_back({r.example_id, RemovalReason::Ambiguous});
        } else if (*r.confidence < policy.min_confidence) {
            out.removed.push_back({r.example_id, RemovalReason::LowConfidence});
        } else if (s >= policy.low_range.first && s <= policy.low_range.second) {
            auto kept = r;
            kept.label = Label::Low;
            out.kept.records.push_back(std::move(kept));
        } else if (s >= policy.high_range.first && s <= policy.high_range.second) {
            auto kept = r;
            kept.label = Label::High;
            out.kept.records.push_back(std::move(kept));
        } else {
            out.removed.push_back({r.example_id, RemovalReason::OutOfRange});
        }
    }
    return out;
}

struct WeightedToken {
    std::string token;
    double weight = 0.0;
};

struct ConfoundReport {
    std::vector<WeightedToken> high_indicative;  // positive weight
    std::vector<WeightedToken> low_indicative;   // negative weight
};

/// Fits the word-statistics SVM on raw counts (no idf) and returns the
/// `top_k` tokens with the largest absolute weight, split by sign.
inline ConfoundReport confound_words(std::span<const std::vector<std::string>> corpus, std::span<const int> labels,
                                     std::size_t top_k, const SvmOptions& options = {},
                                     std::size_t max_features = kDefaultMaxFeatures) {
    require(corpus.size() == labels.size(), ErrorKind::InvalidArgument, "corpus and labels differ in length");
    ConfoundReport report;
    const auto vocab = tfidf_fit(corpus, max_features);
    std::vector<SparseVector> counts;
    counts.reserve(corpus.size());
    for (const auto& doc : corpus) counts.push_back(count_vector(vocab, doc));
    const auto clf = svm_train(counts, labels, vocab.size(), options);
    if (top_k == 0) return report;

    std::vector<std::size_t> order(vocab.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double wa = std::abs(clf.weights[a]);
        const double wb = std::abs(clf.weights[b]);
        return wa != wb ? wa > wb : vocab.tokens[a] < vocab.tokens[b];
    });
    for (std::size_t k = 0; k < std::min(top_k, order.size()); ++k) {
        const auto i = order[k];
        const double w = clf.weights[i];
        if (w > 0.0) report.high_indicative.push_back({vocab.tokens[i], w});
        else if (w < 0.0) report.low_indicative.push_back({vocab.tokens[i], w});
    }
    return report;
}

struct ConfoundRemoval {
    DatasetManifest kept;
    std::map<std::string, std::size_t> records_per_token;  // records containing each confound
    std::size_t removed = 0;
    bool emptied = false;  // every record was removed
};

/// Removes every record whose tokenized text contains any confound token.
inline ConfoundRemoval remove_confounded(const DatasetManifest& manifest, std::span<const std::string> confounds) {
    require(!confounds.empty(), ErrorKind::InvalidArgument, "confound list is empty");
    std::unordered_set<std::string> wanted;
    ConfoundRemoval out;
    out.kept.name = manifest.name;
    for (const auto& c : confounds) {
        const auto normalized = tokenize(c);
        require(normalized.size() == 1 && normalized[0] == c, ErrorKind::InvalidArgument,
                "confound '" + c + "' is not a single normalized token");
        wanted.insert(c);
        out.records_per_token[c] = 0;
    }
    for (const auto& r : manifest.records) {
        const auto tokens = tokenize(r.text);
        const std::set<std::string> present(tokens.begin(), tokens.end());
        bool hit = false;
        for (const auto& t : present) {
            if (wanted.contains(t)) {
                ++out.records_per_token[t];
                hit = true;
            }
        }
        if (hit) ++out.removed;
        else out.kept.records.push_back(r);
    }
    out.emptied = !manifest.records.empty() && out.kept.records.empty();
    return out;
}

struct LengthStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n - 1); 0 for one record
};

inline LengthStats length_stats(const DatasetManifest& m) {
    require(!m.records.empty(), ErrorKind::InvalidArgument, "length statistics need a nonempty manifest");
    const auto n = static_cast<double>(m.records.size());
    double sum = 0.0;
    for (const auto& r : m.records) sum += static_cast<double>(r.token_count);
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : m.records) ss += (static_cast<double>(r.token_count) - mean) * (static_cast<double>(r.token_count) - mean);
    return {mean, m.records.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

struct DatasetStats {
    LengthStats a;
    LengthStats b;
    std::size_t vocabulary_size = 0;
    double kl_a_b = 0.0;  // KL(P_a || P_b)
};

/// Bag-of-words KL over the `max_features` most frequent tokens of both
/// corpora combined, each distribution add-one smoothed over that vocabulary.
inline DatasetStats dataset_stats(const DatasetManifest& a, const DatasetManifest& b,
                                  std::size_t max_features = kDefaultMaxFeatures) {
    require(!a.records.empty() && !b.records.empty(), ErrorKind::InvalidArgument, "dataset_stats needs nonempty manifests");
    DatasetStats out{length_stats(a), length_stats(b), 0, 0.0};

    std::vector<std::vector<std::string>> docs_a;
    std::vector<std::vector<std::string>> docs_b;
    for (const auto& r : a.records) docs_a.push_back(tokenize(r.text));
    for (const auto& r : b.records) docs_b.push_back(tokenize(r.text));
    std::vector<std::vector<std::string>> combined = docs_a;
    combined.insert(combined.end(), docs_b.begin(), docs_b.end());
    auto ranked = ranked_term_counts(combined);
    if (ranked.size() > max_features) ranked.resize(max_features);
    out.vocabulary_size = ranked.size();
    if (ranked.empty()) return out;

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ranked.size(); ++i) index.emplace(ranked[i].first, i);
    auto distribution = [&](const std::vector<std::vector<std::string>>& docs) {
        std::vector<double> counts(ranked.size(), 1.0);
        double total = static_cast<double>(ranked.size());
        for (const auto& doc : docs) {
            for (const auto& t : doc) {
                const auto it = index.find(t);
                if (it == index.end()) continue;
                counts[it->second] += 1.0;
                total += 1.0;
            }
        }
        for (auto& c : counts) c /= total;
        return counts;
    };
    const auto p = distribution(docs_a);
    const auto q = distribution(docs_b);
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
    out.kl_a_b = std::max(kl, 0.0);
    return out;
}

}  // namespace stakes
