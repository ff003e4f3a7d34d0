#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace stakes;
using testing_util::record;

namespace {

using Corpus = std::vector<std::vector<std::string>>;

DatasetManifest texts(const std::vector<std::string>& items) {
    DatasetManifest m;
    for (std::size_t i = 0; i < items.size(); ++i) m.records.push_back(record("r" + std::to_string(i), 9, 9, items[i]));
    return m;
}

}  // namespace

TEST(Tokenize, Examples) {
    EXPECT_EQ(tokenize("Hello, World!"), (std::vector<std::string>{"hello", "world"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_EQ(tokenize("a1 B2--c3"), (std::vector<std::string>{"a1", "b2", "c3"}));
    EXPECT_EQ(tokenize("caf\xc3\xa9 ok"), (std::vector<std::string>{"caf\xc3\xa9", "ok"}));
    const auto once = tokenize("It's a CRUCIAL, minor... thing");
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    EXPECT_EQ(tokenize(joined), once);
}

TEST(Tfidf, IdfValues) {
    const Corpus corpus{{"alpha", "beta"}, {"alpha"}};
    const auto v = tfidf_fit(corpus);
    EXPECT_NEAR(v.idf[v.lookup.at("beta")], std::log(1.5) + 1.0, 1e-15);
    EXPECT_NEAR(v.idf[v.lookup.at("beta")], 1.4055, 1e-4);
    EXPECT_DOUBLE_EQ(v.idf[v.lookup.at("alpha")], 1.0);
}

TEST(Tfidf, VocabularyCapAndOrder) {
    const Corpus corpus{{"c", "b", "b", "a", "a", "d"}, {"a", "c", "e"}};
    const auto v = tfidf_fit(corpus, 3);
    EXPECT_EQ(v.tokens, (std::vector<std::string>{"a", "b", "c"}));  // counts 3,2,2; ties lexicographic
    EXPECT_LE(tfidf_fit(corpus, 2).size(), 2u);
}

TEST(Tfidf, TransformNormsAndScaleInvariance) {
    const Corpus corpus{{"x", "y", "z"}, {"x", "w"}, {"y", "y", "q"}};
    const auto v = tfidf_fit(corpus);
    EXPECT_EQ(tfidf_transform(v, std::string_view("nothing known here")).nnz(), 0u);
    const auto a = tfidf_transform(v, std::string_view("x y y z"));
    EXPECT_NEAR(a.squared_norm(), 1.0, 1e-9);
    const auto b = tfidf_transform(v, std::string_view("x y y z x y y z"));
    ASSERT_EQ(a.index, b.index);
    for (std::size_t k = 0; k < a.nnz(); ++k) EXPECT_NEAR(a.value[k], b.value[k], 1e-12);
}

TEST(Tfidf, VocabFileRoundTrip) {
    const auto dir = testing_util::scratch_dir("vocab");
    const Corpus corpus{{"x", "y", "z"}, {"x", "w"}};
    const auto v = tfidf_fit(corpus);
    write_vocab(v, dir / "v.tsv");
    const auto back = read_vocab(dir / "v.tsv");
    EXPECT_EQ(back.tokens, v.tokens);
    EXPECT_EQ(back.idf, v.idf);
    EXPECT_EQ(back.documents, 2u);
}

TEST(Svm, OneDimensionalSeparable) {
    const std::vector<SparseVector> x{SparseVector::from_dense(std::vector<double>{-1.0}),
                                      SparseVector::from_dense(std::vector<double>{1.0})};
    const std::vector<int> y{0, 1};
    const auto clf = svm_train(x, y, 1, {1e-2, 100, 0});
    EXPECT_LT(clf.decision(x[0]), 0.0);
    EXPECT_GT(clf.decision(x[1]), 0.0);
}

TEST(Svm, StrongRegularizationShrinksWeights) {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> n;
    std::vector<SparseVector> x;
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) {
        const int label = i % 2;
        x.push_back(SparseVector::from_dense(std::vector<double>{n(gen) + (label ? 2 : -2), n(gen)}));
        y.push_back(label);
    }
    auto norm = [](const LinearTextClassifier& c) { return std::hypot(c.weights[0], c.weights[1]); };
    const auto weak = svm_train(x, y, 2, {1e-3, 50, 0});
    const auto strong = svm_train(x, y, 2, {1e3, 50, 0});
    EXPECT_LT(norm(strong), 0.01 * norm(weak));
    EXPECT_LE(norm(strong), 1.0 / std::sqrt(1e3) + 1e-12);
}

TEST(Svm, MatchesGridSeparatorOnSeparableSet) {
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::pair<double, double>> pts;
    std::vector<int> y;
    while (pts.size() < 20) {
        const double a = u(gen), b = u(gen);
        const double side = 0.8 * a - 0.6 * b + 0.1;
        if (std::abs(side) < 0.15) continue;
        pts.push_back({a, b});
        y.push_back(side > 0 ? 1 : 0);
    }
    const double grid = oracle::grid_separator_accuracy(pts, y);
    ASSERT_EQ(grid, 1.0);
    for (double c : {1.0, 10.0}) {
        std::vector<SparseVector> x;
        for (const auto& [a, b] : pts) x.push_back(SparseVector::from_dense(std::vector<double>{c * a, c * b}));
        const auto clf = svm_train(x, y, 2, {1e-3, 200, 0});
        std::size_t ok = 0;
        for (std::size_t i = 0; i < x.size(); ++i) ok += (clf.decision(x[i]) > 0) == (y[i] == 1);
        EXPECT_EQ(static_cast<double>(ok) / 20.0, grid) << "scale " << c;
    }
}

TEST(Confounds, PerfectCorrelateAndKnownWords) {
    std::mt19937_64 gen(3);
    const std::vector<std::string> filler{"the", "user", "asks", "about", "a", "plan", "for", "today", "and", "next"};
    Corpus corpus;
    std::vector<int> labels;
    for (int i = 0; i < 80; ++i) {
        const int label = i % 2;
        std::vector<std::string> doc;
        for (int k = 0; k < 8; ++k) doc.push_back(filler[gen() % filler.size()]);
        if (label == 1) {
            doc.push_back("emergency");
            if (i % 4 == 1) doc.push_back("crucial");
        } else if (i % 4 == 0) {
            doc.push_back("minor");
        }
        corpus.push_back(doc);
        labels.push_back(label);
    }
    const auto report = confound_words(corpus, labels, 5);
    auto has = [](const std::vector<WeightedToken>& v, const std::string& t) {
        return std::any_of(v.begin(), v.end(), [&](const WeightedToken& w) { return w.token == t; });
    };
    EXPECT_TRUE(has(report.high_indicative, "emergency"));
    EXPECT_TRUE(has(report.high_indicative, "crucial"));
    EXPECT_TRUE(has(report.low_indicative, "minor"));
    const auto none = confound_words(corpus, labels, 0);
    EXPECT_TRUE(none.high_indicative.empty() && none.low_indicative.empty());
}

TEST(Confounds, Removal) {
    const auto m = texts({"a calm day", "URGENT: crucial call", "minor issue", "nothing here"});
    const std::vector<std::string> none{"zebra"};
    const auto same = remove_confounded(m, none);
    EXPECT_EQ(same.kept.records, m.records);
    EXPECT_EQ(same.removed, 0u);

    const std::vector<std::string> confounds{"crucial", "minor"};
    const auto out = remove_confounded(m, confounds);
    // Scan oracle: whole-token containment.
    std::size_t expected = 0;
    for (const auto& r : m.records) {
        const auto t = tokenize(r.text);
        expected += std::find(t.begin(), t.end(), "crucial") != t.end() || std::find(t.begin(), t.end(), "minor") != t.end();
    }
    EXPECT_EQ(out.removed, expected);
    EXPECT_EQ(out.kept.records.size(), m.records.size() - expected);
    EXPECT_EQ(out.records_per_token.at("crucial"), 1u);
    EXPECT_FALSE(out.emptied);

    // "minority" does not contain the token "minor".
    EXPECT_EQ(remove_confounded(texts({"a minority view"}), confounds).removed, 0u);

    const std::vector<std::string> all{"a", "minor", "nothing", "crucial"};
    const auto emptied = remove_confounded(m, all);
    EXPECT_TRUE(emptied.kept.records.empty());
    EXPECT_TRUE(emptied.emptied);
    const std::vector<std::string> bad{"Two words"};
    EXPECT_THROW(remove_confounded(m, bad), Error);
}

TEST(Filter, BasicExamples) {
    DatasetManifest m;
    m.records = {record("a", 5, 10), record("b", 9, 9), record("c", 2, 7)};
    const auto r = filter_records(m, FilterPolicy::training());
    ASSERT_EQ(r.kept.records.size(), 1u);
    EXPECT_EQ(r.kept.records[0].example_id, "b");
    EXPECT_EQ(r.kept.records[0].label, Label::High);
    ASSERT_EQ(r.removed.size(), 2u);
    EXPECT_EQ(r.removed[0].example_id, "a");
    EXPECT_EQ(r.removed[0].reason, RemovalReason::Ambiguous);
    EXPECT_EQ(r.removed[1].example_id, "c");
    EXPECT_EQ(r.removed[1].reason, RemovalReason::LowConfidence);
}

TEST(Filter, EvaluationPolicyAndPartition) {
    DatasetManifest m;
    m.records = {record("a", 2, 6), record("b", 2, 5), record("c", 6, 9), record("d", 10, 6)};
    const auto r = filter_records(m, FilterPolicy::evaluation());
    ASSERT_EQ(r.kept.records.size(), 2u);
    EXPECT_EQ(r.kept.records[0].label, Label::Low);
    EXPECT_EQ(r.kept.records[1].label, Label::High);
    EXPECT_EQ(r.kept.records.size() + r.removed.size(), m.records.size());
    std::size_t by_reason = 0;
    for (const auto& [_, n] : r.counts()) by_reason += n;
    EXPECT_EQ(by_reason, r.removed.size());
    m.records.push_back(testing_util::record("e", 3, 9));
    m.records.back().stakes_score.reset();
    EXPECT_THROW(filter_records(m, FilterPolicy::training()), Error);
}

TEST(Stats, IdenticalManifestsHaveZeroKl) {
    const auto m = texts({"one two three", "two three four four"});
    const auto s = dataset_stats(m, m);
    EXPECT_DOUBLE_EQ(s.kl_a_b, 0.0);
    EXPECT_EQ(s.vocabulary_size, 4u);
}

TEST(Stats, HandComputedKl) {
    // a: x x y      b: y z z    vocabulary {x, y, z}, add-one smoothing
    auto a = texts({"x x y"});
    auto b = texts({"y z z"});
    a.records[0].token_count = 3;
    b.records[0].token_count = 5;
    const auto s = dataset_stats(a, b);
    const std::vector<double> p{3.0 / 6, 2.0 / 6, 1.0 / 6};
    const std::vector<double> q{1.0 / 6, 2.0 / 6, 3.0 / 6};
    EXPECT_NEAR(s.kl_a_b, oracle::kl(p, q), 1e-12);
    EXPECT_GT(s.kl_a_b, 0.0);
    EXPECT_DOUBLE_EQ(s.a.mean, 3.0);
    EXPECT_DOUBLE_EQ(s.b.mean, 5.0);
    EXPECT_DOUBLE_EQ(s.a.stddev, 0.0);
}

TEST(Stats, KlNonNegativeOnRandomCorpora) {
    std::mt19937_64 gen(5);
    const std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
    for (int trial = 0; trial < 30; ++trial) {
        auto make = [&] {
            std::vector<std::string> docs;
            for (int d = 0; d < 3; ++d) {
                std::string t;
                for (int k = 0; k < 1 + static_cast<int>(gen() % 6); ++k) t += words[gen() % words.size()] + " ";
                docs.push_back(t);
            }
            return texts(docs);
        };
        EXPECT_GE(dataset_stats(make(), make()).kl_a_b, 0.0);
    }
}
