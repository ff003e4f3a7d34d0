#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "helpers.hpp"

using namespace stakes;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

SynthResult small_synth(const fs::path& dir, std::size_t count = 80, std::map<std::string, std::string> meta = {}) {
    SynthSpec s;
    s.data.count = count;
    s.data.dim = 8;
    s.data.max_len = 12;
    s.data.metadata = std::move(meta);
    s.output_dir = dir;
    return cmd_synth(s);
}

TrainConfig quick(ProbeKind kind) {
    auto tc = TrainConfig::defaults_for(kind);
    tc.max_epochs = 15;
    return tc;
}

}  // namespace

TEST(Commands, SynthWritesDatasetAndTruth) {
    const auto dir = testing_util::scratch_dir("cmd_synth");
    const auto r = small_synth(dir / "d");
    EXPECT_EQ(r.records, 80u);
    EXPECT_TRUE(fs::exists(r.manifest));
    EXPECT_TRUE(fs::exists(r.truth_probe));
    EXPECT_TRUE(fs::exists(dir / "d" / "run_log.json"));
    const auto data = load_dataset(r.manifest);
    EXPECT_EQ(data.shards.size(), 80u);
    const auto log = nlohmann::json::parse(slurp(dir / "d" / "run_log.json"));
    EXPECT_EQ(log.at("command"), "synth");
    EXPECT_EQ(log.at("spec").at("count"), 80);
    EXPECT_EQ(log.at("outputs").size(), 2u);
}

TEST(Commands, TrainThreeSeedsDeterministic) {
    const auto dir = testing_util::scratch_dir("cmd_train");
    const auto data = small_synth(dir / "d");
    TrainSpec t;
    t.manifest = data.manifest;
    t.kind = ProbeKind::Attention;
    t.train = quick(t.kind);
    t.seeds = {0, 1, 2};
    t.output_dir = dir / "a";
    const auto first = cmd_train(t);
    ASSERT_EQ(first.size(), 3u);
    for (const auto& p : first) {
        EXPECT_TRUE(fs::exists(p.probe));
        EXPECT_EQ(lines(p.report).size(), p.summary.epochs_run);
        const auto row = nlohmann::json::parse(lines(p.report).front());
        EXPECT_TRUE(row.contains("train_loss") && row.contains("val_loss") && row.contains("lr"));
    }
    EXPECT_EQ(first[0].probe.filename(), "attention_seed0.probe");
    EXPECT_NE(slurp(first[0].probe), slurp(first[1].probe));
    t.output_dir = dir / "b";
    const auto second = cmd_train(t);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(slurp(first[i].probe), slurp(second[i].probe));
        EXPECT_EQ(slurp(first[i].report), slurp(second[i].report));
    }
}

TEST(Commands, EvalRowsAndEmptySelection) {
    const auto dir = testing_util::scratch_dir("cmd_eval");
    const auto data = small_synth(dir / "d", 80, {{"source", "synthetic"}});
    TrainSpec t;
    t.manifest = data.manifest;
    t.train = quick(ProbeKind::Mean);
    t.seeds = {0, 1};
    t.output_dir = dir / "p";
    const auto probes = cmd_train(t);

    EvalSpec e;
    e.manifests = {data.manifest};
    e.probes = {probes[0].probe, probes[1].probe};
    e.output_dir = dir / "e";
    const auto rows = cmd_eval(e);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[2].probe, "mean");
    EXPECT_NEAR(rows[2].auroc, 0.5 * (rows[0].auroc + rows[1].auroc), 1e-12);
    EXPECT_TRUE(rows[2].auroc_ci.has_value());
    EXPECT_EQ(lines(dir / "e" / "metrics.csv").size(), 4u);
    EXPECT_EQ(lines(dir / "e" / "calibration.csv").size(), 1u + 2 * 10);

    e.filters = {{"source", "synthetic"}};
    EXPECT_EQ(cmd_eval(e).size(), 3u);
    e.filters = {{"source", "human"}};
    try {
        cmd_eval(e);
        FAIL();
    } catch (const Error& err) {
        EXPECT_NE(std::string(err.what()).find("selection is empty"), std::string::npos);
        EXPECT_EQ(exit_code_for(err), 2);
    }
}

TEST(Commands, CascadeAnchors) {
    const auto dir = testing_util::scratch_dir("cmd_cascade");
    const auto data = small_synth(dir / "d");
    TrainSpec t;
    t.manifest = data.manifest;
    t.train = quick(ProbeKind::Mean);
    t.output_dir = dir / "p";
    const auto probe = cmd_train(t).front().probe;

    const auto ds = load_dataset(data.manifest);
    BaselineScores base;
    std::vector<std::string> order;
    for (const auto& r : ds.manifest.records) {
        base[r.example_id] = {r.label == Label::High ? 0.9 : 0.1, r.token_count + 5};
        order.push_back(r.example_id);
    }
    save_baseline_scores(base, order, dir / "baseline.jsonl");

    CascadeSpec c;
    c.manifest = data.manifest;
    c.probe = probe;
    c.baseline_scores = dir / "baseline.jsonl";
    c.combinations = {Combination::Average, Combination::Overwrite};
    c.output_dir = dir / "c";
    const auto rows = cmd_cascade(c);
    ASSERT_EQ(rows.size(), 22u);
    EXPECT_EQ(rows[0].k, 0.0);
    EXPECT_EQ(rows[0].baseline_flops, 0.0);
    EXPECT_EQ(rows[21].k, 100.0);
    EXPECT_EQ(rows[21].auroc, 1.0);
    for (std::size_t i = 1; i < 11; ++i) EXPECT_GE(rows[i].total_flops, rows[i - 1].total_flops);
    EXPECT_EQ(lines(dir / "c" / "cascade.csv").size(), 23u);

    c.baseline_model = "unknown-model";
    EXPECT_THROW(cmd_cascade(c), Error);
}

TEST(Commands, TokenScores) {
    const auto dir = testing_util::scratch_dir("cmd_tokens");
    const auto data = small_synth(dir / "d", 20);
    const auto config = ProbeConfig::make(ProbeKind::Attention, 8);
    std::mt19937_64 gen(3);
    write_probe({config, round_to_f32(testing_util::random_params(gen, config))}, dir / "a.probe");
    const auto id = load_manifest(data.manifest).records[3].example_id;
    TokenScoresSpec s{dir / "a.probe", data.manifest, id, std::nullopt, dir / "t"};
    const auto rows = cmd_tokenscores(s);
    double total = 0.0;
    for (const auto& r : rows) total += r.weight;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(lines(dir / "t" / "token_scores.csv").size(), rows.size() + 1);

    std::ofstream(dir / "tokens.txt") << "only\none\n";
    s.tokens = dir / "tokens.txt";
    EXPECT_THROW(cmd_tokenscores(s), Error);
    s.tokens.reset();
    s.example_id = "missing";
    EXPECT_THROW(cmd_tokenscores(s), Error);
    write_probe({ProbeConfig::make(ProbeKind::Mean, 8), ProbeParams::zeros(ProbeConfig::make(ProbeKind::Mean, 8))},
                dir / "m.probe");
    s.example_id = id;
    s.probe = dir / "m.probe";
    EXPECT_THROW(cmd_tokenscores(s), Error);
}

TEST(Commands, FilterReportReconciles) {
    const auto dir = testing_util::scratch_dir("cmd_filter");
    DatasetManifest m;
    int n = 0;
    for (int s = 1; s <= 10; ++s) {
        for (int c = 5; c <= 10; ++c) m.records.push_back(testing_util::record("r" + std::to_string(n++), s, c));
    }
    save_manifest(m, dir / "in.jsonl");
    const auto r = cmd_filter({dir / "in.jsonl", FilterPolicy::training(), dir / "f"});
    EXPECT_EQ(load_manifest(dir / "f" / "filtered.jsonl").records.size(), r.kept.records.size());
    EXPECT_EQ(lines(dir / "f" / "removals.csv").size(), r.removed.size() + 1);
    const auto log = nlohmann::json::parse(slurp(dir / "f" / "run_log.json"));
    const auto& s = log.at("summary");
    EXPECT_EQ(s.at("input").get<std::size_t>() - s.at("kept").get<std::size_t>(), s.at("removed").get<std::size_t>());
    std::size_t by_reason = 0;
    for (const auto& [_, v] : s.at("removed_by_reason").items()) by_reason += v.get<std::size_t>();
    EXPECT_EQ(by_reason, s.at("removed").get<std::size_t>());
}

TEST(Commands, StatsAndWordStats) {
    const auto dir = testing_util::scratch_dir("cmd_stats");
    DatasetManifest m;
    for (int i = 0; i < 40; ++i) {
        auto r = testing_util::record("w" + std::to_string(i), i % 2 ? 9 : 2, 9,
                                      i % 2 ? "an urgent emergency call today" : "a calm chat about lunch today");
        r.label = i % 2 ? Label::High : Label::Low;
        m.records.push_back(r);
    }
    save_manifest(m, dir / "m.jsonl");
    const auto stats = cmd_stats({dir / "m.jsonl", dir / "m.jsonl", kDefaultMaxFeatures, dir / "s"});
    EXPECT_EQ(stats.kl_a_b, 0.0);
    EXPECT_EQ(lines(dir / "s" / "stats.csv").front(), "statistic,value");

    WordStatsSpec w;
    w.manifest = dir / "m.jsonl";
    w.top_k = 4;
    w.remove = {"emergency"};
    w.output_dir = dir / "w";
    const auto res = cmd_wordstats(w);
    ASSERT_TRUE(res.removal.has_value());
    EXPECT_EQ(res.removal->removed, 20u);
    EXPECT_EQ(load_manifest(dir / "w" / "cleaned.jsonl").records.size(), 20u);
    EXPECT_TRUE(fs::exists(dir / "w" / "confounds.csv"));
}

TEST(Commands, FinetuneAndLayerCv) {
    const auto dir = testing_util::scratch_dir("cmd_finetune");
    SynthSpec s;
    s.data.count = 80;
    s.data.dim = 8;
    s.data.max_len = 12;
    s.data.dev_fraction = 0.25;
    s.output_dir = dir / "d";
    const auto data = cmd_synth(s);
    TrainSpec t;
    t.manifest = data.manifest;
    t.train = quick(ProbeKind::Mean);
    t.output_dir = dir / "p";
    const auto probe = cmd_train(t).front().probe;

    FinetuneSpec f;
    f.probe = probe;
    f.manifest = data.manifest;
    f.epochs = 3;
    f.output_dir = dir / "f";
    const auto tuned = cmd_finetune(f);
    EXPECT_EQ(tuned.filename(), "mean_seed0_finetuned.probe");
    EXPECT_EQ(read_probe(tuned).config, read_probe(probe).config);

    LayerCvSpec l;
    l.manifests = {{4, data.manifest}, {9, data.manifest}};
    l.train = quick(ProbeKind::Mean);
    l.folds = 3;
    l.output_dir = dir / "l";
    const auto sel = cmd_layercv(l);
    EXPECT_EQ(sel.best_layer, 4);  // identical layers tie, lowest wins
    EXPECT_EQ(lines(dir / "l" / "layers.csv").size(), 3u);
}

TEST(Commands, OutputRootAndErrors) {
    const auto dir = testing_util::scratch_dir("cmd_root");
    ::setenv("STAKES_OUTPUT_ROOT", dir.c_str(), 1);
    const auto r = small_synth("relative_out", 10);
    ::unsetenv("STAKES_OUTPUT_ROOT");
    EXPECT_TRUE(fs::exists(dir / "relative_out" / "manifest.jsonl"));
    EXPECT_EQ(r.manifest, dir / "relative_out" / "manifest.jsonl");

    TrainSpec t;
    t.manifest = dir / "nope.jsonl";
    t.output_dir = dir / "x";
    try {
        cmd_train(t);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
        EXPECT_EQ(exit_code_for(e), 2);
    }
    EXPECT_EQ(exit_code_for(std::runtime_error("x")), 3);
}
