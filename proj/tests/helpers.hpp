#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stakes/stakes.hpp"

namespace testing_util {

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("stakes_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline stakes::ActivationShard random_shard(std::mt19937_64& gen, std::size_t S, std::size_t D,
                                            std::string id = "x", double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    std::vector<float> data(S * D);
    for (auto& x : data) x = static_cast<float>(n(gen));
    return stakes::ActivationShard(std::move(id), S, D, std::move(data));
}

inline stakes::ActivationShard shard_from_rows(const std::vector<std::vector<float>>& rows, std::string id = "x") {
    std::vector<float> data;
    for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
    return stakes::ActivationShard(std::move(id), rows.size(), rows.front().size(), std::move(data));
}

inline stakes::ProbeParams random_params(std::mt19937_64& gen, const stakes::ProbeConfig& config, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    auto p = stakes::ProbeParams::zeros(config);
    p.for_each([&](double& x) { x = n(gen); });
    return p;
}

inline std::vector<double> flatten(stakes::ProbeParams p) {
    std::vector<double> out;
    p.for_each([&](double& x) { out.push_back(x); });
    return out;
}

inline stakes::ProbeParams unflatten(const stakes::ProbeConfig& config, const std::vector<double>& v) {
    auto p = stakes::ProbeParams::zeros(config);
    std::size_t i = 0;
    p.for_each([&](double& x) { x = v[i++]; });
    return p;
}

inline stakes::ExampleRecord record(std::string id, int stakes_score, int confidence, std::string text = "") {
    stakes::ExampleRecord r;
    r.example_id = std::move(id);
    r.text = std::move(text);
    r.stakes_score = stakes_score;
    r.confidence = confidence;
    r.token_count = 1;
    return r;
}

}  // namespace testing_util
