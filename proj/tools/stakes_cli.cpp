// stakes: command-line front end for probe training, evaluation, cascades
// and dataset hygiene. Run `stakes <command> --help` for options.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stakes/commands.hpp"

namespace {

using namespace stakes;

ProbeKind kind_arg(const std::string& s) {
    const auto k = parse_probe_kind(s);
    require(k.has_value(), ErrorKind::InvalidArgument, "unknown probe kind '" + s + "'");
    return *k;
}

Split split_arg(const std::string& s) {
    const auto v = parse_split(s);
    require(v.has_value(), ErrorKind::InvalidArgument, "unknown split '" + s + "'");
    return *v;
}

std::map<std::string, std::string> key_values(const std::vector<std::string>& items, std::string_view what) {
    std::map<std::string, std::string> out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        require(eq != std::string::npos && eq > 0, ErrorKind::InvalidArgument,
                std::string(what) + " '" + item + "' is not key=value");
        out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

// Optional overrides on top of the per-kind defaults.
struct TrainOverrides {
    std::optional<std::size_t> epochs, batch, accum, patience;
    std::optional<double> lr_start, lr_final, weight_decay;

    void attach(CLI::App* app) {
        app->add_option("--epochs", epochs, "maximum epochs");
        app->add_option("--batch-size", batch, "micro-batch size");
        app->add_option("--grad-accum", accum, "micro-batches per optimizer step");
        app->add_option("--patience", patience, "early-stopping patience in epochs");
        app->add_option("--lr-start", lr_start, "initial learning rate");
        app->add_option("--lr-final", lr_final, "final learning rate");
        app->add_option("--weight-decay", weight_decay, "AdamW weight decay");
    }

    TrainConfig apply(ProbeKind kind) const {
        auto tc = TrainConfig::defaults_for(kind);
        if (epochs) tc.max_epochs = *epochs;
        if (batch) tc.batch_size = *batch;
        if (accum) tc.grad_accum = *accum;
        if (patience) tc.early_stop_patience = *patience;
        if (lr_start) tc.lr_start = *lr_start;
        if (lr_final) tc.lr_final = *lr_final;
        if (weight_decay) tc.weight_decay = *weight_decay;
        return tc;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Activation probes for high-stakes interaction detection"};
    app.set_config("--config", "", "read options from an INI/TOML file ([command] sections)");
    app.set_version_flag("--version", std::string(stakes::kVersion));
    app.require_subcommand(1);

    std::string output;
    auto add_output = [&](CLI::App* sub) { sub->add_option("-o,--output", output, "output directory")->required(); };

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic activation dataset");
    SynthSpec synth_spec;
    std::string truth_kind = "mean";
    std::vector<std::string> synth_meta;
    synth->add_option("--count", synth_spec.data.count, "number of examples")->capture_default_str();
    synth->add_option("--dim", synth_spec.data.dim, "activation width")->capture_default_str();
    synth->add_option("--min-len", synth_spec.data.min_len)->capture_default_str();
    synth->add_option("--max-len", synth_spec.data.max_len)->capture_default_str();
    synth->add_option("--noise", synth_spec.data.noise_sigma, "entrywise noise std")->capture_default_str();
    synth->add_option("--margin", synth_spec.data.margin, "class separation along the truth direction")
        ->capture_default_str();
    synth->add_option("--context-scale", synth_spec.data.context_scale)->capture_default_str();
    synth->add_option("--token-scale", synth_spec.data.token_scale)->capture_default_str();
    synth->add_option("--test-fraction", synth_spec.data.test_fraction)->capture_default_str();
    synth->add_option("--dev-fraction", synth_spec.data.dev_fraction)->capture_default_str();
    synth->add_option("--seed", synth_spec.data.seed)->capture_default_str();
    synth->add_option("--prefix", synth_spec.data.id_prefix, "example id prefix")->capture_default_str();
    synth->add_option("--truth-kind", truth_kind, "probe kind of the labeling rule")->capture_default_str();
    synth->add_option("--truth-seed", synth_spec.truth_seed)->capture_default_str();
    synth->add_option("--meta", synth_meta, "key=value metadata copied onto every record");
    add_output(synth);

    // train
    auto* train_cmd = app.add_subcommand("train", "train one probe per seed");
    TrainSpec train_spec;
    std::string train_kind = "mean", train_split = "train";
    TrainOverrides train_over;
    train_cmd->add_option("-m,--manifest", train_spec.manifest)->required();
    train_cmd->add_option("-k,--kind", train_kind, "mean|max|last_token|max_rolling_means|softmax|attention")
        ->capture_default_str();
    train_cmd->add_option("--temperature", train_spec.temperature, "softmax probe temperature");
    train_cmd->add_option("--window", train_spec.window, "rolling-means window");
    train_cmd->add_option("--seeds", train_spec.seeds)->capture_default_str();
    train_cmd->add_option("--split", train_split)->capture_default_str();
    train_over.attach(train_cmd);
    add_output(train_cmd);

    // eval
    auto* eval = app.add_subcommand("eval", "score probes on held-out data");
    EvalSpec eval_spec;
    std::string eval_split = "test";
    std::vector<std::string> eval_filters;
    eval->add_option("-m,--manifest", eval_spec.manifests)->required();
    eval->add_option("-p,--probe", eval_spec.probes, "probe files, one per seed")->required();
    eval->add_option("--split", eval_split)->capture_default_str();
    eval->add_option("--filter", eval_filters, "metadata key=value restriction");
    eval->add_option("--bins", eval_spec.calibration_bins, "calibration bins")->capture_default_str();
    eval->add_option("--confidence", eval_spec.confidence)->capture_default_str();
    add_output(eval);

    // cascade
    auto* cascade = app.add_subcommand("cascade", "sweep probe -> baseline routing budgets");
    CascadeSpec cascade_spec;
    std::string cascade_split = "test";
    std::vector<std::string> selections{"mid"}, combinations{"average"};
    cascade->add_option("-m,--manifest", cascade_spec.manifest)->required();
    cascade->add_option("-p,--probe", cascade_spec.probe)->required();
    cascade->add_option("-b,--baseline", cascade_spec.baseline_scores, "JSONL baseline scores")->required();
    cascade->add_option("--baseline-model", cascade_spec.baseline_model, "cost model name")->capture_default_str();
    cascade->add_option("--split", cascade_split)->capture_default_str();
    cascade->add_option("--k", cascade_spec.budgets, "routing budgets in percent")->capture_default_str();
    cascade->add_option("--selection", selections, "mid|top|bottom")->capture_default_str();
    cascade->add_option("--combination", combinations, "average|max|overwrite")->capture_default_str();
    add_output(cascade);

    // tokenscores
    auto* tokens = app.add_subcommand("tokenscores", "per-token attention/concept scores for one example");
    TokenScoresSpec token_spec;
    std::string token_file;
    tokens->add_option("-p,--probe", token_spec.probe)->required();
    tokens->add_option("-m,--manifest", token_spec.manifest)->required();
    tokens->add_option("-e,--example", token_spec.example_id)->required();
    tokens->add_option("--tokens", token_file, "token strings, one per line");
    add_output(tokens);

    // filter
    auto* filter = app.add_subcommand("filter", "drop ambiguous / low-confidence records and assign labels");
    FilterSpec filter_spec;
    std::string policy = "training";
    std::optional<int> min_conf;
    filter->add_option("-m,--manifest", filter_spec.manifest)->required();
    filter->add_option("--policy", policy, "training (confidence >= 8) | evaluation (>= 6)")->capture_default_str();
    filter->add_option("--min-confidence", min_conf, "override the policy's confidence cut");
    add_output(filter);

    // stats
    auto* stats = app.add_subcommand("stats", "length statistics and bag-of-words KL between two manifests");
    StatsSpec stats_spec;
    stats->add_option("a", stats_spec.manifest_a)->required();
    stats->add_option("b", stats_spec.manifest_b)->required();
    stats->add_option("--max-features", stats_spec.max_features)->capture_default_str();
    add_output(stats);

    // wordstats
    auto* words = app.add_subcommand("wordstats", "find label-confounding words with a linear SVM");
    WordStatsSpec words_spec;
    words->add_option("-m,--manifest", words_spec.manifest)->required();
    words->add_option("--top", words_spec.top_k)->capture_default_str();
    words->add_option("--lambda", words_spec.svm.lambda)->capture_default_str();
    words->add_option("--svm-epochs", words_spec.svm.epochs)->capture_default_str();
    words->add_option("--seed", words_spec.svm.seed)->capture_default_str();
    words->add_option("--max-features", words_spec.max_features)->capture_default_str();
    words->add_option("--remove", words_spec.remove, "tokens whose records are dropped");
    add_output(words);

    // finetune
    auto* finetune = app.add_subcommand("finetune", "continue training a probe on balanced dev samples");
    FinetuneSpec finetune_spec;
    std::string finetune_split = "dev";
    finetune->add_option("-p,--probe", finetune_spec.probe)->required();
    finetune->add_option("-m,--manifest", finetune_spec.manifest)->required();
    finetune->add_option("--split", finetune_split)->capture_default_str();
    finetune->add_option("--epochs", finetune_spec.epochs)->capture_default_str();
    finetune->add_option("--seed", finetune_spec.seed)->capture_default_str();
    add_output(finetune);

    // layercv
    auto* layercv = app.add_subcommand("layercv", "pick a layer by cross-validated accuracy");
    LayerCvSpec layer_spec;
    std::vector<std::string> layer_items;
    std::string layer_kind = "mean";
    TrainOverrides layer_over;
    layercv->add_option("--layer", layer_items, "layer=manifest")->required();
    layercv->add_option("-k,--kind", layer_kind)->capture_default_str();
    layercv->add_option("--folds", layer_spec.folds)->capture_default_str();
    layercv->add_option("--seed", layer_spec.seed)->capture_default_str();
    layer_over.attach(layercv);
    add_output(layercv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            synth_spec.truth_kind = kind_arg(truth_kind);
            synth_spec.data.metadata = key_values(synth_meta, "metadata");
            synth_spec.output_dir = output;
            const auto r = cmd_synth(synth_spec);
            std::cout << r.records << " records -> " << r.manifest.string() << '\n';
        } else if (train_cmd->parsed()) {
            train_spec.kind = kind_arg(train_kind);
            train_spec.split = split_arg(train_split);
            train_spec.train = train_over.apply(train_spec.kind);
            train_spec.output_dir = output;
            for (const auto& r : cmd_train(train_spec)) {
                std::cout << "seed " << r.seed << ": " << r.summary.epochs_run << " epochs, best "
                          << r.summary.best_epoch << " -> " << r.probe.string() << '\n';
            }
        } else if (eval->parsed()) {
            eval_spec.split = split_arg(eval_split);
            eval_spec.filters = key_values(eval_filters, "filter");
            eval_spec.output_dir = output;
            for (const auto& r : cmd_eval(eval_spec)) {
                std::cout << r.dataset << ' ' << r.probe << " auroc " << r.auroc;
                if (r.auroc_ci) std::cout << " +- " << *r.auroc_ci;
                std::cout << " tpr@1%fpr " << r.tpr_at_1pct_fpr << '\n';
            }
        } else if (cascade->parsed()) {
            cascade_spec.split = split_arg(cascade_split);
            cascade_spec.selections.clear();
            cascade_spec.combinations.clear();
            for (const auto& s : selections) {
                const auto v = parse_selection(s);
                require(v.has_value(), ErrorKind::InvalidArgument, "unknown selection '" + s + "'");
                cascade_spec.selections.push_back(*v);
            }
            for (const auto& c : combinations) {
                const auto v = parse_combination(c);
                require(v.has_value(), ErrorKind::InvalidArgument, "unknown combination '" + c + "'");
                cascade_spec.combinations.push_back(*v);
            }
            cascade_spec.output_dir = output;
            std::cout << cmd_cascade(cascade_spec).size() << " rows\n";
        } else if (tokens->parsed()) {
            if (!token_file.empty()) token_spec.tokens = token_file;
            token_spec.output_dir = output;
            std::cout << cmd_tokenscores(token_spec).size() << " tokens\n";
        } else if (filter->parsed()) {
            if (policy == "training") filter_spec.policy = FilterPolicy::training();
            else if (policy == "evaluation") filter_spec.policy = FilterPolicy::evaluation();
            else throw Error(ErrorKind::InvalidArgument, "unknown policy '" + policy + "'");
            if (min_conf) filter_spec.policy.min_confidence = *min_conf;
            filter_spec.output_dir = output;
            const auto r = cmd_filter(filter_spec);
            std::cout << "kept " << r.kept.records.size() << ", removed " << r.removed.size() << '\n';
        } else if (stats->parsed()) {
            stats_spec.output_dir = output;
            const auto s = cmd_stats(stats_spec);
            std::cout << "KL " << s.kl_a_b << " over " << s.vocabulary_size << " tokens\n";
        } else if (words->parsed()) {
            words_spec.output_dir = output;
            const auto r = cmd_wordstats(words_spec);
            std::cout << r.report.high_indicative.size() << " high / " << r.report.low_indicative.size()
                      << " low indicative tokens\n";
        } else if (finetune->parsed()) {
            finetune_spec.split = split_arg(finetune_split);
            finetune_spec.output_dir = output;
            std::cout << cmd_finetune(finetune_spec).string() << '\n';
        } else if (layercv->parsed()) {
            layer_spec.kind = kind_arg(layer_kind);
            layer_spec.train = layer_over.apply(layer_spec.kind);
            for (const auto& [layer, path] : key_values(layer_items, "layer")) {
                int l = 0;
                try {
                    l = std::stoi(layer);
                } catch (const std::exception&) {
                    throw Error(ErrorKind::InvalidArgument, "layer '" + layer + "' is not an integer");
                }
                layer_spec.manifests[l] = path;
            }
            layer_spec.output_dir = output;
            std::cout << "best layer " << cmd_layercv(layer_spec).best_layer << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "stakes: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 0;
}
