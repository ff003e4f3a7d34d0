#pragma once

// Workflow commands behind the `stakes` executable. Each takes a plain spec
// struct, writes its artifacts under spec.output_dir and leaves a
// run_log.json there (spec echo, library version, wall time, outputs).

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stakes/cascade.hpp"
#include "stakes/csv.hpp"
#include "stakes/error.hpp"
#include "stakes/filtering.hpp"
#include "stakes/manifest.hpp"
#include "stakes/metrics.hpp"
#include "stakes/probe.hpp"
#include "stakes/probe_io.hpp"
#include "stakes/synthetic.hpp"
#include "stakes/trainer.hpp"

namespace stakes {

inline constexpr std::string_view kVersion = "0.1.0";

namespace fs = std::filesystem;

/// Relative output paths are placed under $STAKES_OUTPUT_ROOT when it is set.
inline fs::path resolve_output(const fs::path& p) {
    if (p.is_absolute()) return p;
    const char* root = std::getenv("STAKES_OUTPUT_ROOT");
    if (root && *root) return fs::path(root) / p;
    return p;
}

namespace detail {

inline void require_exists(const fs::path& p, std::string_view what) {
    require(fs::exists(p), ErrorKind::Io, std::string(what) + " '" + p.string() + "' does not exist");
}

inline fs::path prepare_output(const fs::path& dir) {
    require(!dir.empty(), ErrorKind::InvalidArgument, "output directory is required");
    const auto out = resolve_output(dir);
    fs::create_directories(out);
    return out;
}

inline nlohmann::ordered_json train_config_json(const TrainConfig& tc) {
    nlohmann::ordered_json j;
    j["batch_size"] = tc.batch_size;
    j["max_epochs"] = tc.max_epochs;
    j["early_stop_patience"] = tc.early_stop_patience;
    j["grad_accum"] = tc.grad_accum;
    j["lr_start"] = tc.lr_start;
    j["lr_final"] = tc.lr_final;
    j["weight_decay"] = tc.weight_decay;
    j["validation_fraction"] = tc.validation_fraction;
    return j;
}

inline nlohmann::ordered_json probe_config_json(const ProbeConfig& c) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(c.kind);
    j["dim"] = c.dim;
    if (c.temperature) j["temperature"] = *c.temperature;
    if (c.window) j["window"] = *c.window;
    return j;
}

inline std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

}  // namespace detail

class RunLog {
public:
    RunLog(std::string command, nlohmann::ordered_json spec)
        : start_(std::chrono::steady_clock::now()) {
        log_["command"] = std::move(command);
        log_["version"] = kVersion;
        log_["spec"] = std::move(spec);
        log_["outputs"] = nlohmann::json::array();
    }

    void output(const fs::path& p) { log_["outputs"].push_back(p.string()); }
    nlohmann::ordered_json& summary() { return log_["summary"]; }

    fs::path finish(const fs::path& dir) {
        const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start_;
        log_["wall_seconds"] = wall.count();
        const auto path = dir / "run_log.json";
        std::ofstream out(path, std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
        out << log_.dump(2) << '\n';
        return path;
    }

private:
    std::chrono::steady_clock::time_point start_;
    nlohmann::ordered_json log_;
};

// ---- synth

struct SynthSpec {
    SyntheticSpec data;
    ProbeKind truth_kind = ProbeKind::Mean;
    std::uint64_t truth_seed = 1;
    fs::path output_dir;
};

struct SynthResult {
    fs::path manifest;
    fs::path truth_probe;
    std::size_t records = 0;
};

inline SynthResult cmd_synth(const SynthSpec& spec) {
    const auto& d = spec.data;
    nlohmann::ordered_json echo;
    echo["count"] = d.count;
    echo["min_len"] = d.min_len;
    echo["max_len"] = d.max_len;
    echo["dim"] = d.dim;
    echo["noise_sigma"] = d.noise_sigma;
    echo["margin"] = d.margin;
    echo["context_scale"] = d.context_scale;
    echo["token_scale"] = d.token_scale;
    echo["test_fraction"] = d.test_fraction;
    echo["dev_fraction"] = d.dev_fraction;
    echo["seed"] = d.seed;
    echo["id_prefix"] = d.id_prefix;
    echo["metadata"] = d.metadata;
    echo["truth_kind"] = to_string(spec.truth_kind);
    echo["truth_seed"] = spec.truth_seed;
    RunLog log("synth", echo);

    const auto dir = detail::prepare_output(spec.output_dir);
    const auto config = ProbeConfig::make(spec.truth_kind, d.dim);
    const Probe truth{config, random_params(config, spec.truth_seed)};
    const auto data = generate_synthetic(d, truth);

    SynthResult result;
    result.manifest = save_dataset(data, dir);
    result.truth_probe = dir / "ground_truth.probe";
    result.records = data.manifest.records.size();
    write_probe(truth, result.truth_probe);
    log.output(result.manifest);
    log.output(result.truth_probe);
    log.summary()["records"] = result.records;
    log.finish(dir);
    return result;
}

// ---- train

struct TrainSpec {
    fs::path manifest;
    ProbeKind kind = ProbeKind::Mean;
    std::optional<double> temperature;
    std::optional<std::size_t> window;
    std::optional<TrainConfig> train;  // per-kind defaults when absent
    std::vector<std::uint64_t> seeds{0};
    Split split = Split::Train;
    fs::path output_dir;
};

struct TrainedProbe {
    std::uint64_t seed = 0;
    fs::path probe;
    fs::path report;
    TrainReport summary;
};

inline std::vector<TrainedProbe> cmd_train(const TrainSpec& spec) {
    detail::require_exists(spec.manifest, "manifest");
    require(!spec.seeds.empty(), ErrorKind::InvalidArgument, "at least one seed is required");
    const auto tc_base = spec.train.value_or(TrainConfig::defaults_for(spec.kind));

    const auto data = load_dataset(spec.manifest);
    const auto examples = data.labeled(spec.split);
    require(!examples.empty(), ErrorKind::MissingData,
            "no labeled records in split " + std::string(to_string(spec.split)));
    const std::size_t dim = examples.front().shard->dim();
    auto config = ProbeConfig::make(spec.kind, dim);
    if (spec.temperature) config.temperature = spec.temperature;
    if (spec.window) config.window = spec.window;
    config.validate();

    nlohmann::ordered_json echo;
    echo["manifest"] = spec.manifest.string();
    echo["split"] = to_string(spec.split);
    echo["probe"] = detail::probe_config_json(config);
    echo["train"] = detail::train_config_json(tc_base);
    echo["seeds"] = spec.seeds;
    RunLog log("train", echo);
    const auto dir = detail::prepare_output(spec.output_dir);

    std::vector<TrainedProbe> out;
    for (auto seed : spec.seeds) {
        auto tc = tc_base;
        tc.seed = seed;
        TrainedProbe tp;
        tp.seed = seed;
        tp.summary = train(examples, config, tc);
        tp.probe = dir / (std::string(to_string(spec.kind)) + "_" + detail::seed_tag(seed) + ".probe");
        tp.report = dir / (std::string(to_string(spec.kind)) + "_" + detail::seed_tag(seed) + ".report.jsonl");
        write_probe({config, tp.summary.final_params}, tp.probe);

        std::ofstream report(tp.report, std::ios::trunc);
        require(static_cast<bool>(report), ErrorKind::Io, "cannot write " + tp.report.string());
        for (std::size_t e = 0; e < tp.summary.train_loss_curve.size(); ++e) {
            nlohmann::ordered_json row;
            row["epoch"] = e;
            row["train_loss"] = tp.summary.train_loss_curve[e];
            row["val_loss"] = tp.summary.val_loss_curve[e];
            row["lr"] = tp.summary.lr_curve[e];
            report << row.dump() << '\n';
        }
        log.output(tp.probe);
        log.output(tp.report);
        nlohmann::ordered_json s;
        s["seed"] = seed;
        s["epochs_run"] = tp.summary.epochs_run;
        s["best_epoch"] = tp.summary.best_epoch;
        log.summary()["runs"].push_back(s);
        out.push_back(std::move(tp));
    }
    log.finish(dir);
    return out;
}

// ---- eval

struct EvalSpec {
    std::vector<fs::path> manifests;
    std::vector<fs::path> probes;  // one per seed
    Split split = Split::Test;
    std::map<std::string, std::string> filters;  // metadata key -> required value
    std::size_t calibration_bins = 10;
    double confidence = 0.95;
    fs::path output_dir;
};

struct EvalRow {
    std::string dataset;
    std::string probe;  // probe file stem, or "mean" for the aggregate row
    std::size_t n = 0;
    double auroc = 0.0;
    double tpr_at_1pct_fpr = 0.0;
    std::optional<double> auroc_ci;  // half-widths, aggregate rows only
    std::optional<double> tpr_ci;
};

/// Records of `split` whose metadata matches every filter.
inline std::vector<LabeledShard> select_examples(const Dataset& data, Split split,
                                                 const std::map<std::string, std::string>& filters) {
    std::vector<LabeledShard> out;
    for (std::size_t i = 0; i < data.manifest.records.size(); ++i) {
        const auto& r = data.manifest.records[i];
        if (r.split != split || !r.label) continue;
        bool match = true;
        for (const auto& [key, value] : filters) {
            const auto it = r.metadata.find(key);
            if (it == r.metadata.end() || it->second != value) {
                match = false;
                break;
            }
        }
        if (match) out.push_back({&data.shards[i], label_value(*r.label)});
    }
    return out;
}

inline std::vector<EvalRow> cmd_eval(const EvalSpec& spec) {
    require(!spec.manifests.empty(), ErrorKind::InvalidArgument, "at least one manifest is required");
    require(!spec.probes.empty(), ErrorKind::InvalidArgument, "at least one probe file is required");
    for (const auto& m : spec.manifests) detail::require_exists(m, "manifest");
    for (const auto& p : spec.probes) detail::require_exists(p, "probe file");

    nlohmann::ordered_json echo;
    for (const auto& m : spec.manifests) echo["manifests"].push_back(m.string());
    for (const auto& p : spec.probes) echo["probes"].push_back(p.string());
    echo["split"] = to_string(spec.split);
    echo["filters"] = spec.filters;
    echo["calibration_bins"] = spec.calibration_bins;
    echo["confidence"] = spec.confidence;
    RunLog log("eval", echo);
    const auto dir = detail::prepare_output(spec.output_dir);

    std::vector<Probe> probes;
    for (const auto& p : spec.probes) probes.push_back(read_probe(p));

    std::vector<EvalRow> rows;
    CsvWriter metrics(dir / "metrics.csv",
                      {"dataset", "probe", "n", "auroc", "auroc_ci", "tpr_at_1pct_fpr", "tpr_ci"});
    CsvWriter calib(dir / "calibration.csv",
                    {"dataset", "probe", "bin", "lo", "hi", "count", "mean_score", "positive_rate"});
    auto opt = [](const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); };

    for (const auto& manifest_path : spec.manifests) {
        const auto data = load_dataset(manifest_path);
        const auto name = data.manifest.name;
        const auto examples = select_examples(data, spec.split, spec.filters);
        require(!examples.empty(), ErrorKind::InvalidArgument,
                "selection is empty: no labeled " + std::string(to_string(spec.split)) + " records in '" +
                    manifest_path.string() + "' match the filters");

        std::vector<double> aurocs, tprs;
        for (std::size_t p = 0; p < probes.size(); ++p) {
            std::vector<ScoredSample> scored;
            scored.reserve(examples.size());
            for (const auto& ex : examples) scored.push_back({probes[p].score(*ex.shard), ex.label});
            EvalRow row{name, spec.probes[p].stem().string(), examples.size(), auroc(scored),
                        tpr_at_fpr(scored, 0.01), std::nullopt, std::nullopt};
            aurocs.push_back(row.auroc);
            tprs.push_back(row.tpr_at_1pct_fpr);
            metrics.write({row.dataset, row.probe, std::to_string(row.n), csv_number(row.auroc), "",
                           csv_number(row.tpr_at_1pct_fpr), ""});
            rows.push_back(row);

            const auto c = calibration_curve(scored, spec.calibration_bins);
            for (std::size_t b = 0; b < c.bin_count.size(); ++b) {
                calib.write({name, row.probe, std::to_string(b), csv_number(c.bin_edges[b]),
                             csv_number(c.bin_edges[b + 1]), std::to_string(c.bin_count[b]),
                             opt(c.bin_mean_score[b]), opt(c.bin_empirical_rate[b])});
            }
        }
        if (probes.size() >= 2) {
            const auto a = mean_ci(aurocs, spec.confidence);
            const auto t = mean_ci(tprs, spec.confidence);
            EvalRow row{name, "mean", examples.size(), a.mean, t.mean, a.half_width, t.half_width};
            metrics.write({row.dataset, row.probe, std::to_string(row.n), csv_number(row.auroc), opt(row.auroc_ci),
                           csv_number(row.tpr_at_1pct_fpr), opt(row.tpr_ci)});
            rows.push_back(row);
        }
    }
    log.output(metrics.path());
    log.output(calib.path());
    log.summary()["rows"] = rows.size();
    log.finish(dir);
    return rows;
}

// ---- cascade

struct CascadeSpec {
    fs::path manifest;
    fs::path probe;
    fs::path baseline_scores;
    std::string baseline_model = "llama-3.3-70b";
    Split split = Split::Test;
    std::vector<double> budgets = default_budget_sweep();
    std::vector<Selection> selections{Selection::Mid};
    std::vector<Combination> combinations{Combination::Average};
    fs::path output_dir;
};

inline std::vector<CascadeRow> cmd_cascade(const CascadeSpec& spec) {
    detail::require_exists(spec.manifest, "manifest");
    detail::require_exists(spec.probe, "probe file");
    detail::require_exists(spec.baseline_scores, "baseline score file");
    const auto cost = find_cost_model(spec.baseline_model);
    require(cost.has_value(), ErrorKind::InvalidArgument, "unknown baseline model '" + spec.baseline_model + "'");
    require(!spec.budgets.empty() && !spec.selections.empty() && !spec.combinations.empty(),
            ErrorKind::InvalidArgument, "cascade sweep needs budgets, selections and combinations");

    nlohmann::ordered_json echo;
    echo["manifest"] = spec.manifest.string();
    echo["probe"] = spec.probe.string();
    echo["baseline_scores"] = spec.baseline_scores.string();
    echo["baseline_model"] = spec.baseline_model;
    echo["split"] = to_string(spec.split);
    echo["budgets"] = spec.budgets;
    for (auto s : spec.selections) echo["selections"].push_back(to_string(s));
    for (auto c : spec.combinations) echo["combinations"].push_back(to_string(c));
    RunLog log("cascade", echo);
    const auto dir = detail::prepare_output(spec.output_dir);

    const auto probe = read_probe(spec.probe);
    const auto baseline = load_baseline_scores(spec.baseline_scores);
    const auto data = load_dataset(spec.manifest);
    std::vector<CascadeSample> samples;
    for (std::size_t i = 0; i < data.manifest.records.size(); ++i) {
        const auto& r = data.manifest.records[i];
        if (r.split != spec.split || !r.label) continue;
        samples.push_back({r.example_id, probe.score(data.shards[i]), data.shards[i].seq_len(), label_value(*r.label)});
    }
    require(!samples.empty(), ErrorKind::MissingData, "no labeled records in the requested split");

    const auto rows = cascade_sweep(samples, baseline, spec.budgets, spec.selections, spec.combinations,
                                    probe.config, *cost);
    CsvWriter csv(dir / "cascade.csv", {"k", "selection", "combination", "auroc", "tpr_at_1pct_fpr", "probe_flops",
                                        "baseline_flops", "total_flops"});
    for (const auto& r : rows) {
        csv.write({csv_number(r.k), std::string(to_string(r.selection)), std::string(to_string(r.combination)),
                   csv_number(r.auroc), csv_number(r.tpr_at_1pct_fpr), csv_number(r.probe_flops),
                   csv_number(r.baseline_flops), csv_number(r.total_flops)});
    }
    log.output(csv.path());
    log.summary()["samples"] = samples.size();
    log.finish(dir);
    return rows;
}

// ---- tokenscores

struct TokenScoresSpec {
    fs::path probe;
    fs::path manifest;
    std::string example_id;
    std::optional<fs::path> tokens;  // one token string per line
    fs::path output_dir;
};

struct TokenRow {
    std::size_t position = 0;
    std::string token;
    double attention_score = 0.0;
    double concept_score = 0.0;
    double weight = 0.0;
};

inline std::vector<TokenRow> cmd_tokenscores(const TokenScoresSpec& spec) {
    detail::require_exists(spec.probe, "probe file");
    detail::require_exists(spec.manifest, "manifest");
    if (spec.tokens) detail::require_exists(*spec.tokens, "token file");

    nlohmann::ordered_json echo;
    echo["probe"] = spec.probe.string();
    echo["manifest"] = spec.manifest.string();
    echo["example_id"] = spec.example_id;
    if (spec.tokens) echo["tokens"] = spec.tokens->string();
    RunLog log("tokenscores", echo);

    const auto probe = read_probe(spec.probe);
    require(probe.config.kind == ProbeKind::Attention, ErrorKind::InvalidArgument,
            "token scores need an attention probe, got " + std::string(to_string(probe.config.kind)));
    const auto manifest = load_manifest(spec.manifest);
    const ExampleRecord* record = nullptr;
    for (const auto& r : manifest.records) {
        if (r.example_id == spec.example_id) record = &r;
    }
    require(record != nullptr, ErrorKind::MissingData, "example '" + spec.example_id + "' is not in the manifest");
    const auto shard = load_record_shard(*record, spec.manifest.parent_path());

    std::vector<std::string> token_text;
    if (spec.tokens) {
        std::ifstream in(*spec.tokens);
        std::string line;
        while (std::getline(in, line)) token_text.push_back(line);
        require(token_text.size() == shard.seq_len(), ErrorKind::DimensionMismatch,
                "token file has " + std::to_string(token_text.size()) + " lines but the shard has " +
                    std::to_string(shard.seq_len()) + " tokens");
    }

    const auto dir = detail::prepare_output(spec.output_dir);
    const auto attr = token_attribution(shard, probe.config, probe.params);
    const auto weights = attr.weights();
    std::vector<TokenRow> rows;
    CsvWriter csv(dir / "token_scores.csv", {"position", "token", "attention_score", "concept_score", "weight"});
    for (std::size_t s = 0; s < shard.seq_len(); ++s) {
        TokenRow row{s, token_text.empty() ? std::string() : token_text[s], attr.attention_scores[s],
                     attr.concept_scores[s], weights[s]};
        csv.write({std::to_string(s), row.token, csv_number(row.attention_score), csv_number(row.concept_score),
                   csv_number(row.weight)});
        rows.push_back(std::move(row));
    }
    log.output(csv.path());
    log.summary()["logit"] = probe.logit(shard);
    log.finish(dir);
    return rows;
}

// ---- filter

struct FilterSpec {
    fs::path manifest;
    FilterPolicy policy = FilterPolicy::training();
    fs::path output_dir;
};

inline FilterResult cmd_filter(const FilterSpec& spec) {
    detail::require_exists(spec.manifest, "manifest");
    nlohmann::ordered_json echo;
    echo["manifest"] = spec.manifest.string();
    echo["ambiguous"] = {spec.policy.ambiguous_low, spec.policy.ambiguous_high};
    echo["min_confidence"] = spec.policy.min_confidence;
    echo["low_range"] = {spec.policy.low_range.first, spec.policy.low_range.second};
    echo["high_range"] = {spec.policy.high_range.first, spec.policy.high_range.second};
    RunLog log("filter", echo);

    const auto manifest = load_manifest(spec.manifest);
    auto result = filter_records(manifest, spec.policy);
    const auto dir = detail::prepare_output(spec.output_dir);
    const auto kept_path = dir / "filtered.jsonl";
    save_manifest(result.kept, kept_path);
    CsvWriter removals(dir / "removals.csv", {"example_id", "reason"});
    for (const auto& r : result.removed) removals.write({r.example_id, std::string(to_string(r.reason))});

    log.output(kept_path);
    log.output(removals.path());
    auto& s = log.summary();
    s["input"] = manifest.records.size();
    s["kept"] = result.kept.records.size();
    s["removed"] = result.removed.size();
    for (const auto& [reason, n] : result.counts()) s["removed_by_reason"][std::string(to_string(reason))] = n;
    log.finish(dir);
    return result;
}

// ---- stats

struct StatsSpec {
    fs::path manifest_a;
    fs::path manifest_b;
    std::size_t max_features = kDefaultMaxFeatures;
    fs::path output_dir;
};

inline DatasetStats cmd_stats(const StatsSpec& spec) {
    detail::require_exists(spec.manifest_a, "manifest");
    detail::require_exists(spec.manifest_b, "manifest");
    nlohmann::ordered_json echo;
    echo["manifest_a"] = spec.manifest_a.string();
    echo["manifest_b"] = spec.manifest_b.string();
    echo["max_features"] = spec.max_features;
    RunLog log("stats", echo);

    const auto a = load_manifest(spec.manifest_a);
    const auto b = load_manifest(spec.manifest_b);
    const auto stats = dataset_stats(a, b, spec.max_features);
    const auto dir = detail::prepare_output(spec.output_dir);
    CsvWriter csv(dir / "stats.csv", {"statistic", "value"});
    csv.write({"records_a", std::to_string(a.records.size())});
    csv.write({"records_b", std::to_string(b.records.size())});
    csv.write({"mean_length_a", csv_number(stats.a.mean)});
    csv.write({"std_length_a", csv_number(stats.a.stddev)});
    csv.write({"mean_length_b", csv_number(stats.b.mean)});
    csv.write({"std_length_b", csv_number(stats.b.stddev)});
    csv.write({"vocabulary_size", std::to_string(stats.vocabulary_size)});
    csv.write({"kl_a_b", csv_number(stats.kl_a_b)});
    log.output(csv.path());
    log.finish(dir);
    return stats;
}

// ---- wordstats

struct WordStatsSpec {
    fs::path manifest;
    std::size_t top_k = 20;
    SvmOptions svm;
    std::size_t max_features = kDefaultMaxFeatures;
    std::vector<std::string> remove;  // confound tokens to strip from the manifest
    fs::path output_dir;
};

struct WordStatsResult {
    ConfoundReport report;
    std::optional<ConfoundRemoval> removal;
};

inline WordStatsResult cmd_wordstats(const WordStatsSpec& spec) {
    detail::require_exists(spec.manifest, "manifest");
    nlohmann::ordered_json echo;
    echo["manifest"] = spec.manifest.string();
    echo["top_k"] = spec.top_k;
    echo["lambda"] = spec.svm.lambda;
    echo["epochs"] = spec.svm.epochs;
    echo["seed"] = spec.svm.seed;
    echo["max_features"] = spec.max_features;
    echo["remove"] = spec.remove;
    RunLog log("wordstats", echo);

    const auto manifest = load_manifest(spec.manifest);
    std::vector<std::vector<std::string>> corpus;
    std::vector<int> labels;
    for (const auto& r : manifest.records) {
        if (!r.label) continue;
        corpus.push_back(tokenize(r.text));
        labels.push_back(label_value(*r.label));
    }
    require(!corpus.empty(), ErrorKind::MissingData, "no labeled records to fit word statistics on");

    WordStatsResult result;
    result.report = confound_words(corpus, labels, spec.top_k, spec.svm, spec.max_features);
    const auto dir = detail::prepare_output(spec.output_dir);
    CsvWriter csv(dir / "confounds.csv", {"token", "weight", "indicates"});
    for (const auto& t : result.report.high_indicative) csv.write({t.token, csv_number(t.weight), "high"});
    for (const auto& t : result.report.low_indicative) csv.write({t.token, csv_number(t.weight), "low"});
    log.output(csv.path());

    if (!spec.remove.empty()) {
        result.removal = remove_confounded(manifest, spec.remove);
        const auto cleaned = dir / "cleaned.jsonl";
        save_manifest(result.removal->kept, cleaned);
        log.output(cleaned);
        log.summary()["removed"] = result.removal->removed;
        log.summary()["records_per_token"] = result.removal->records_per_token;
        log.summary()["emptied"] = result.removal->emptied;
    }
    log.finish(dir);
    return result;
}

// ---- finetune

struct FinetuneSpec {
    fs::path probe;
    fs::path manifest;
    Split split = Split::Dev;
    std::size_t epochs = kDevFinetuneEpochs;
    std::uint64_t seed = 0;  // for balancing
    fs::path output_dir;
};

inline fs::path cmd_finetune(const FinetuneSpec& spec) {
    detail::require_exists(spec.probe, "probe file");
    detail::require_exists(spec.manifest, "manifest");
    nlohmann::ordered_json echo;
    echo["probe"] = spec.probe.string();
    echo["manifest"] = spec.manifest.string();
    echo["split"] = to_string(spec.split);
    echo["epochs"] = spec.epochs;
    echo["seed"] = spec.seed;
    RunLog log("finetune", echo);

    const auto base = read_probe(spec.probe);
    auto data = load_dataset(spec.manifest);
    data.manifest = balance_split(data.manifest, spec.split, spec.seed);
    // Shards stay parallel to the balanced records.
    std::map<std::string, const ActivationShard*> by_id;
    for (const auto& s : data.shards) by_id[s.example_id()] = &s;
    std::vector<LabeledShard> dev;
    for (const auto& r : data.manifest.records) {
        if (r.split == spec.split && r.label) dev.push_back({by_id.at(r.example_id), label_value(*r.label)});
    }
    const auto params =
        finetune_on_dev(base.params, dev, base.config, TrainConfig::dev_finetune_for(base.config.kind), spec.epochs);
    const auto dir = detail::prepare_output(spec.output_dir);
    const auto out = dir / (spec.probe.stem().string() + "_finetuned.probe");
    write_probe({base.config, params}, out);
    log.output(out);
    log.summary()["dev_samples"] = dev.size();
    log.finish(dir);
    return out;
}

// ---- layercv

struct LayerCvSpec {
    std::map<int, fs::path> manifests;  // layer -> manifest of that layer's activations
    ProbeKind kind = ProbeKind::Mean;
    std::optional<TrainConfig> train;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    Split split = Split::Train;
    fs::path output_dir;
};

inline LayerSelection cmd_layercv(const LayerCvSpec& spec) {
    require(!spec.manifests.empty(), ErrorKind::InvalidArgument, "at least one layer manifest is required");
    for (const auto& [_, p] : spec.manifests) detail::require_exists(p, "manifest");
    auto tc = spec.train.value_or(TrainConfig::defaults_for(spec.kind));
    tc.seed = spec.seed;

    nlohmann::ordered_json echo;
    for (const auto& [layer, p] : spec.manifests) echo["manifests"][std::to_string(layer)] = p.string();
    echo["kind"] = to_string(spec.kind);
    echo["train"] = detail::train_config_json(tc);
    echo["folds"] = spec.folds;
    echo["seed"] = spec.seed;
    RunLog log("layercv", echo);

    std::map<int, Dataset> datasets;
    std::map<int, std::vector<LabeledShard>> by_layer;
    std::optional<std::size_t> dim;
    for (const auto& [layer, p] : spec.manifests) {
        const auto& data = datasets.emplace(layer, load_dataset(p)).first->second;
        by_layer[layer] = data.labeled(spec.split);
        require(!by_layer[layer].empty(), ErrorKind::MissingData, "layer " + std::to_string(layer) + " has no examples");
        const auto d = by_layer[layer].front().shard->dim();
        require(!dim || *dim == d, ErrorKind::DimensionMismatch, "layers have different activation widths");
        dim = d;
    }
    const auto selection = layer_cross_validation(by_layer, ProbeConfig::make(spec.kind, *dim), tc, spec.folds);
    const auto dir = detail::prepare_output(spec.output_dir);
    CsvWriter csv(dir / "layers.csv", {"layer", "mean_accuracy", "selected"});
    for (const auto& [layer, acc] : selection.mean_accuracy) {
        csv.write({std::to_string(layer), csv_number(acc), layer == selection.best_layer ? "1" : "0"});
    }
    log.output(csv.path());
    log.summary()["best_layer"] = selection.best_layer;
    log.finish(dir);
    return selection;
}

/// 2 for malformed or missing input, 3 for anything unexpected.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const Error*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
    return 3;
}

}  // namespace stakes
