#pragma once

// Dataset manifests: one JSON object per line with the keys
//   example_id, text, stakes_score, confidence, label, split, token_count,
//   metadata, shard_ref
// Optional fields (stakes_score, confidence, label, metadata, shard_ref) are
// omitted when absent, never written as null.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "stakes/error.hpp"
#include "stakes/random.hpp"
#include "stakes/shard.hpp"

namespace stakes {

enum class Label { Low = 0, High = 1 };
enum class Split { Train, Dev, Test };

inline std::string_view to_string(Label label) { return label == Label::High ? "high" : "low"; }

inline std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Dev: return "dev";
        case Split::Test: return "test";
    }
    return "train";
}

inline std::optional<Label> parse_label(std::string_view s) {
    if (s == "high") return Label::High;
    if (s == "low") return Label::Low;
    return std::nullopt;
}

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "dev") return Split::Dev;
    if (s == "test") return Split::Test;
    return std::nullopt;
}

inline int label_value(Label label) { return label == Label::High ? 1 : 0; }

struct ExampleRecord {
    std::string example_id;
    std::string text;
    std::optional<int> stakes_score;
    std::optional<int> confidence;
    std::optional<Label> label;
    Split split = Split::Train;
    std::size_t token_count = 0;
    std::map<std::string, std::string> metadata;
    std::optional<std::string> shard_ref;

    friend bool operator==(const ExampleRecord&, const ExampleRecord&) = default;
};

struct DatasetManifest {
    std::string name;
    std::vector<ExampleRecord> records;

    std::size_t size() const noexcept { return records.size(); }

    std::vector<const ExampleRecord*> in_split(Split split) const {
        std::vector<const ExampleRecord*> out;
        for (const auto& r : records) {
            if (r.split == split) out.push_back(&r);
        }
        return out;
    }

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Label/score consistency: a labeled record with a stakes score must sit in
/// the low (1-3) or high (8-10) band matching its label.
inline bool label_consistent(const ExampleRecord& r) {
    if (!r.label || !r.stakes_score) return true;
    const int s = *r.stakes_score;
    return *r.label == Label::Low ? (s >= 1 && s <= 3) : (s >= 8 && s <= 10);
}

inline void validate_ids(const DatasetManifest& manifest) {
    std::unordered_set<std::string> seen;
    for (const auto& r : manifest.records) {
        require(seen.insert(r.example_id).second, ErrorKind::DuplicateId,
                "duplicate example_id '" + r.example_id + "'");
    }
}

namespace detail {

inline ExampleRecord record_from_json(const nlohmann::json& j) {
    static const std::unordered_set<std::string> known{"example_id", "text",   "stakes_score",
                                                       "confidence", "label",  "split",
                                                       "token_count", "metadata", "shard_ref"};
    if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw std::invalid_argument("unknown key '" + key + "'");
    }
    auto need = [&](const char* key) -> const nlohmann::json& {
        if (!j.contains(key)) throw std::invalid_argument(std::string("missing ") + key);
        return j.at(key);
    };

    ExampleRecord r;
    r.example_id = need("example_id").get<std::string>();
    if (r.example_id.empty()) throw std::invalid_argument("empty example_id");
    r.text = need("text").get<std::string>();
    const auto split = parse_split(need("split").get<std::string>());
    if (!split) throw std::invalid_argument("split must be train, dev or test");
    r.split = *split;
    const auto& tc = need("token_count");
    if (!tc.is_number_unsigned()) throw std::invalid_argument("token_count must be a nonnegative integer");
    r.token_count = tc.get<std::size_t>();

    auto score_field = [&](const char* key) -> std::optional<int> {
        if (!j.contains(key)) return std::nullopt;
        const auto& v = j.at(key);
        if (!v.is_number_integer()) throw std::invalid_argument(std::string(key) + " must be an integer");
        const int x = v.get<int>();
        if (x < 1 || x > 10) throw std::invalid_argument(std::string(key) + " must be in 1..10");
        return x;
    };
    r.stakes_score = score_field("stakes_score");
    r.confidence = score_field("confidence");
    if (j.contains("label")) {
        const auto label = parse_label(j.at("label").get<std::string>());
        if (!label) throw std::invalid_argument("label must be high or low");
        r.label = *label;
    }
    if (j.contains("metadata")) {
        r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    }
    if (j.contains("shard_ref")) r.shard_ref = j.at("shard_ref").get<std::string>();
    if (!label_consistent(r)) throw std::invalid_argument("label contradicts stakes_score");
    return r;
}

}  // namespace detail

inline nlohmann::ordered_json record_to_json(const ExampleRecord& r) {
    nlohmann::ordered_json j;
    j["example_id"] = r.example_id;
    j["text"] = r.text;
    if (r.stakes_score) j["stakes_score"] = *r.stakes_score;
    if (r.confidence) j["confidence"] = *r.confidence;
    if (r.label) j["label"] = std::string(to_string(*r.label));
    j["split"] = std::string(to_string(r.split));
    j["token_count"] = r.token_count;
    if (!r.metadata.empty()) j["metadata"] = r.metadata;
    if (r.shard_ref) j["shard_ref"] = *r.shard_ref;
    return j;
}

inline DatasetManifest parse_manifest(std::istream& in, std::string name = {}) {
    DatasetManifest manifest;
    manifest.name = std::move(name);
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ExampleRecord r;
        try {
            r = detail::record_from_json(nlohmann::json::parse(line));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Parse, "manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert(r.example_id).second) {
            throw Error(ErrorKind::DuplicateId, "manifest line " + std::to_string(line_no) +
                                                    ": duplicate example_id '" + r.example_id + "'");
        }
        manifest.records.push_back(std::move(r));
    }
    return manifest;
}

inline DatasetManifest load_manifest(const std::filesystem::path& source) {
    std::ifstream in(source);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open manifest " + source.string());
    return parse_manifest(in, source.stem().string());
}

inline void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& destination) {
    validate_ids(manifest);
    std::ofstream out(destination, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + destination.string() + " for writing");
    for (const auto& r : manifest.records) out << record_to_json(r).dump() << '\n';
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + destination.string());
}

/// Loads the shard for `record`, resolving a relative shard_ref against
/// `base_dir` and checking token_count == S.
inline ActivationShard load_record_shard(const ExampleRecord& record, const std::filesystem::path& base_dir) {
    require(record.shard_ref.has_value(), ErrorKind::MissingData,
            "record '" + record.example_id + "' has no shard_ref");
    std::filesystem::path path(*record.shard_ref);
    if (path.is_relative()) path = base_dir / path;
    auto shard = read_shard(path, record.example_id);
    require(shard.seq_len() == record.token_count, ErrorKind::InvalidArgument,
            "record '" + record.example_id + "' token_count " + std::to_string(record.token_count) +
                " != shard S " + std::to_string(shard.seq_len()));
    return shard;
}

/// A labeled view of one example, borrowed from a Dataset.
struct LabeledShard {
    const ActivationShard* shard = nullptr;
    int label = 0;  // 1 = high stakes
};

/// A manifest together with its loaded shards (parallel to `manifest.records`).
struct Dataset {
    DatasetManifest manifest;
    std::vector<ActivationShard> shards;

    /// Labeled examples of `split`, in file order. Unlabeled records are skipped.
    std::vector<LabeledShard> labeled(std::optional<Split> split = std::nullopt) const {
        std::vector<LabeledShard> out;
        for (std::size_t i = 0; i < manifest.records.size(); ++i) {
            const auto& r = manifest.records[i];
            if (split && r.split != *split) continue;
            if (!r.label) continue;
            out.push_back({&shards[i], label_value(*r.label)});
        }
        return out;
    }
};

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
    Dataset data;
    data.manifest = load_manifest(manifest_path);
    const auto base = manifest_path.parent_path();
    data.shards.reserve(data.manifest.records.size());
    for (const auto& r : data.manifest.records) data.shards.push_back(load_record_shard(r, base));
    return data;
}

/// Writes `<dir>/manifest.jsonl` and each shard at its relative shard_ref.
inline std::filesystem::path save_dataset(const Dataset& data, const std::filesystem::path& dir) {
    require(data.shards.size() == data.manifest.records.size(), ErrorKind::InvalidArgument,
            "dataset has a different number of shards and records");
    for (std::size_t i = 0; i < data.shards.size(); ++i) {
        const auto& r = data.manifest.records[i];
        require(r.shard_ref.has_value(), ErrorKind::MissingData, "record '" + r.example_id + "' has no shard_ref");
        const auto path = dir / *r.shard_ref;
        std::filesystem::create_directories(path.parent_path());
        write_shard(data.shards[i], path);
    }
    const auto manifest_path = dir / "manifest.jsonl";
    save_manifest(data.manifest, manifest_path);
    return manifest_path;
}

/// Down-samples the majority label inside `split` to the minority count.
/// Records in other splits are untouched and file order is preserved.
inline DatasetManifest balance_split(const DatasetManifest& manifest, Split split, std::uint64_t seed) {
    std::vector<std::size_t> high, low;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        if (r.split != split) continue;
        require(r.label.has_value(), ErrorKind::MissingData,
                "record '" + r.example_id + "' in split " + std::string(to_string(split)) + " is unlabeled");
        (*r.label == Label::High ? high : low).push_back(i);
    }
    require(!high.empty() && !low.empty(), ErrorKind::InvalidArgument,
            "split " + std::string(to_string(split)) + " needs both labels to balance");

    auto& majority = high.size() > low.size() ? high : low;
    const std::size_t keep = std::min(high.size(), low.size());
    std::vector<bool> drop(manifest.records.size(), false);
    if (majority.size() > keep) {
        Rng rng(seed);
        rng.shuffle(majority);
        for (std::size_t i = keep; i < majority.size(); ++i) drop[majority[i]] = true;
    }
    DatasetManifest out;
    out.name = manifest.name;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        if (!drop[i]) out.records.push_back(manifest.records[i]);
    }
    return out;
}

}  // namespace stakes
