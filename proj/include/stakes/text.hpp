#pragma once

// Word-statistics features: tokenizer, TF-IDF vocabulary, and a linear SVM
// trained by Pegasos-style primal subgradient descent.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stakes/error.hpp"
#include "stakes/probe.hpp"
#include "stakes/probe_io.hpp"
#include "stakes/random.hpp"

namespace stakes {

/// Lowercased runs of ASCII alphanumerics. Bytes >= 0x80 are kept inside
/// tokens so UTF-8 words are not split; everything else separates.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || c >= 0x80) {
            current.push_back(ch);
        } else if (c >= 'A' && c <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline constexpr std::size_t kDefaultMaxFeatures = 5000;
inline constexpr std::string_view kTokenizerName = "lowercase-alnum";

/// Sparse vector with strictly increasing indices.
struct SparseVector {
    std::vector<std::uint32_t> index;
    std::vector<double> value;

    std::size_t nnz() const noexcept { return index.size(); }

    double squared_norm() const {
        double s = 0.0;
        for (double v : value) s += v * v;
        return s;
    }

    static SparseVector from_dense(std::span<const double> dense) {
        SparseVector out;
        for (std::size_t i = 0; i < dense.size(); ++i) {
            if (dense[i] != 0.0) {
                out.index.push_back(static_cast<std::uint32_t>(i));
                out.value.push_back(dense[i]);
            }
        }
        return out;
    }
};

struct VocabModel {
    std::vector<std::string> tokens;  // position = feature index
    std::unordered_map<std::string, std::uint32_t> lookup;
    std::vector<double> idf;
    std::size_t documents = 0;
    std::string tokenizer{kTokenizerName};

    std::size_t size() const noexcept { return tokens.size(); }
};

/// Term totals over a corpus, ordered most frequent first, ties lexicographic.
inline std::vector<std::pair<std::string, std::size_t>> ranked_term_counts(
    std::span<const std::vector<std::string>> corpus) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& doc : corpus) {
        for (const auto& t : doc) ++counts[t];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return ranked;
}

/// Vocabulary of the `max_features` most frequent tokens with smoothed idf
/// ln((1 + n) / (1 + df)) + 1.
inline VocabModel tfidf_fit(std::span<const std::vector<std::string>> corpus,
                            std::size_t max_features = kDefaultMaxFeatures) {
    require(!corpus.empty(), ErrorKind::InvalidArgument, "cannot fit a vocabulary on an empty corpus");
    require(max_features >= 1, ErrorKind::InvalidArgument, "max_features must be positive");
    auto ranked = ranked_term_counts(corpus);
    if (ranked.size() > max_features) ranked.resize(max_features);

    VocabModel model;
    model.documents = corpus.size();
    for (const auto& [token, _] : ranked) {
        model.lookup.emplace(token, static_cast<std::uint32_t>(model.tokens.size()));
        model.tokens.push_back(token);
    }
    std::vector<std::size_t> df(model.size(), 0);
    std::vector<std::size_t> last_doc(model.size(), SIZE_MAX);
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        for (const auto& t : corpus[d]) {
            const auto it = model.lookup.find(t);
            if (it == model.lookup.end() || last_doc[it->second] == d) continue;
            last_doc[it->second] = d;
            ++df[it->second];
        }
    }
    const auto n = static_cast<double>(corpus.size());
    model.idf.resize(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        model.idf[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
    }
    return model;
}

/// Raw in-vocabulary term counts; out-of-vocabulary tokens are ignored.
inline SparseVector count_vector(const VocabModel& model, std::span<const std::string> tokens) {
    std::map<std::uint32_t, double> counts;
    for (const auto& t : tokens) {
        const auto it = model.lookup.find(t);
        if (it != model.lookup.end()) counts[it->second] += 1.0;
    }
    SparseVector out;
    for (const auto& [i, c] : counts) {
        out.index.push_back(i);
        out.value.push_back(c);
    }
    return out;
}

/// tf * idf with raw counts as tf, L2-normalised unless all zero.
inline SparseVector tfidf_transform(const VocabModel& model, std::span<const std::string> tokens) {
    auto v = count_vector(model, tokens);
    for (std::size_t k = 0; k < v.nnz(); ++k) v.value[k] *= model.idf[v.index[k]];
    const double norm = std::sqrt(v.squared_norm());
    if (norm > 0.0) {
        for (auto& x : v.value) x /= norm;
    }
    return v;
}

inline SparseVector tfidf_transform(const VocabModel& model, std::string_view text) {
    const auto tokens = tokenize(text);
    return tfidf_transform(model, std::span<const std::string>(tokens));
}

inline void write_vocab(const VocabModel& model, const std::filesystem::path& destination) {
    std::ofstream out(destination, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + destination.string() + " for writing");
    out << "# stakes-vocab 1 documents=" << model.documents << " tokenizer=" << model.tokenizer << '\n';
    for (std::size_t i = 0; i < model.size(); ++i) {
        out << model.tokens[i] << '\t' << i << '\t' << detail::shortest(model.idf[i]) << '\n';
    }
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + destination.string());
}

inline VocabModel read_vocab(const std::filesystem::path& source) {
    std::ifstream in(source);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open vocabulary " + source.string());
    VocabModel model;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto pos = line.find("documents=");
            if (pos != std::string::npos) {
                std::istringstream(line.substr(pos + 10)) >> model.documents;
            }
            continue;
        }
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
        require(tab2 != std::string::npos, ErrorKind::Parse,
                "vocabulary line " + std::to_string(line_no) + " is not token<TAB>index<TAB>idf");
        const auto token = line.substr(0, tab1);
        const auto index = detail::parse_number<std::size_t>(line.substr(tab1 + 1, tab2 - tab1 - 1), "index");
        const auto idf = detail::parse_number<double>(line.substr(tab2 + 1), "idf");
        require(index == model.size(), ErrorKind::Parse, "vocabulary indices must be consecutive from 0");
        require(std::isfinite(idf), ErrorKind::NonFinite, "idf must be finite");
        model.lookup.emplace(token, static_cast<std::uint32_t>(index));
        model.tokens.push_back(token);
        model.idf.push_back(idf);
    }
    return model;
}

struct LinearTextClassifier {
    std::vector<double> weights;
    double bias = 0.0;

    double decision(const SparseVector& x) const {
        double d = bias;
        for (std::size_t k = 0; k < x.nnz(); ++k) {
            if (x.index[k] < weights.size()) d += weights[x.index[k]] * x.value[k];
        }
        return d;
    }
    /// Sigmoid of the decision value, for rank metrics.
    double score(const SparseVector& x) const { return sigmoid(decision(x)); }
};

struct SvmOptions {
    double lambda = 1e-4;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
};

/// Hinge loss + (lambda/2)||w||^2 by Pegasos. The bias is learned as the
/// weight of an implicit constant-1 feature.
inline LinearTextClassifier svm_train(std::span<const SparseVector> vectors, std::span<const int> labels,
                                      std::size_t dim, const SvmOptions& options = {}) {
    require(vectors.size() == labels.size(), ErrorKind::InvalidArgument, "vectors and labels differ in length");
    require(options.lambda > 0.0, ErrorKind::InvalidArgument, "lambda must be positive");
    bool pos = false;
    bool neg = false;
    for (int y : labels) {
        require(y == 0 || y == 1, ErrorKind::InvalidArgument, "labels must be 0 or 1");
        (y == 1 ? pos : neg) = true;
    }
    require(pos && neg, ErrorKind::InvalidArgument, "SVM training needs both labels");
    for (const auto& x : vectors) {
        for (auto i : x.index) require(i < dim, ErrorKind::DimensionMismatch, "feature index exceeds dim");
    }

    // w = scale * v, with v[dim] the bias weight.
    std::vector<double> v(dim + 1, 0.0);
    double scale = 1.0;
    double v_sqnorm = 0.0;
    auto dot = [&](const SparseVector& x) {
        double d = v[dim];
        for (std::size_t k = 0; k < x.nnz(); ++k) d += v[x.index[k]] * x.value[k];
        return scale * d;
    };

    Rng rng(options.seed);
    std::vector<std::size_t> order(vectors.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::uint64_t t = 0;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            ++t;
            const double eta = 1.0 / (options.lambda * static_cast<double>(t));
            const double y = labels[i] == 1 ? 1.0 : -1.0;
            const bool violated = y * dot(vectors[i]) < 1.0;

            const double shrink = 1.0 - eta * options.lambda;
            if (shrink <= 0.0) {
                std::fill(v.begin(), v.end(), 0.0);
                scale = 1.0;
                v_sqnorm = 0.0;
            } else {
                scale *= shrink;
            }
            if (violated) {
                const auto& x = vectors[i];
                const double c = eta * y / scale;
                double vx = v[dim];
                for (std::size_t k = 0; k < x.nnz(); ++k) vx += v[x.index[k]] * x.value[k];
                for (std::size_t k = 0; k < x.nnz(); ++k) v[x.index[k]] += c * x.value[k];
                v[dim] += c;
                v_sqnorm += 2.0 * c * vx + c * c * (x.squared_norm() + 1.0);
            }
            // Project onto the ball of radius 1/sqrt(lambda).
            const double w_norm = scale * std::sqrt(std::max(v_sqnorm, 0.0));
            const double radius = 1.0 / std::sqrt(options.lambda);
            if (w_norm > radius) scale *= radius / w_norm;
            if (scale < 1e-9) {
                for (auto& x : v) x *= scale;
                v_sqnorm *= scale * scale;
                scale = 1.0;
            }
        }
    }
    LinearTextClassifier clf;
    clf.weights.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) clf.weights[i] = scale * v[i];
    clf.bias = scale * v[dim];
    return clf;
}

}  // namespace stakes
