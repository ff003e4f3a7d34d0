#pragma once

// Desk-scale synthetic activations. Each sequence draws a context vector
// c ~ N(0, context_scale^2 I) and its tokens are a_s = c + e_s with
// e_s ~ N(0, token_scale^2 I), so token activations share sequence-level
// structure. The context is then pushed +-margin along the ground-truth
// direction so the classes sit apart rather than straddling a hyperplane
// with no gap. Each example is labeled by the sign of a ground-truth probe's
// logit on these clean activations, then N(0, noise_sigma^2) noise is added
// to every entry. With noise_sigma = 0 the ground-truth probe classifies
// every example correctly.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stakes/error.hpp"
#include "stakes/manifest.hpp"
#include "stakes/probe_io.hpp"
#include "stakes/random.hpp"

namespace stakes {

struct SyntheticSpec {
    std::size_t count = 200;
    std::size_t min_len = 8;  // inclusive S range
    std::size_t max_len = 32;
    std::size_t dim = 16;
    double noise_sigma = 0.1;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
    double dev_fraction = 0.0;
    double context_scale = 1.0;  // std of the per-sequence context vector
    double token_scale = 1.0;    // std of the per-token deviation around it
    double margin = 2.0;         // context shift along the ground-truth direction, sign drawn 50/50
    std::string id_prefix = "syn";
    std::map<std::string, std::string> metadata;  // copied onto every record
};

/// Unit-norm Gaussian direction(s) with zero bias.
inline ProbeParams random_params(const ProbeConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    auto params = ProbeParams::zeros(config);
    auto fill = [&](std::vector<double>& v) {
        double norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
    };
    fill(params.direction);
    if (!params.value_direction.empty()) fill(params.value_direction);
    return params;
}

inline std::string shard_file_name(const std::string& example_id) { return "shards/" + example_id + ".apsh"; }

inline Dataset generate_synthetic(const SyntheticSpec& spec, const Probe& ground_truth) {
    require(spec.count >= 1, ErrorKind::InvalidArgument, "count must be positive");
    require(spec.min_len >= 1 && spec.min_len <= spec.max_len, ErrorKind::InvalidArgument,
            "sequence length range is empty");
    require(spec.noise_sigma >= 0.0 && std::isfinite(spec.noise_sigma), ErrorKind::InvalidArgument,
            "noise_sigma must be nonnegative");
    require(ground_truth.config.dim == spec.dim, ErrorKind::DimensionMismatch,
            "ground-truth probe dim does not match requested dim");
    require(spec.test_fraction >= 0.0 && spec.dev_fraction >= 0.0 && spec.test_fraction + spec.dev_fraction < 1.0,
            ErrorKind::InvalidArgument, "test_fraction + dev_fraction must be < 1");

    Rng rng(spec.seed);
    std::vector<std::size_t> order(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) order[i] = i;
    rng.shuffle(order);
    const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(spec.count)));
    const auto n_dev = static_cast<std::size_t>(std::llround(spec.dev_fraction * static_cast<double>(spec.count)));
    std::vector<Split> split(spec.count, Split::Train);
    for (std::size_t i = 0; i < n_test && i < spec.count; ++i) split[order[i]] = Split::Test;
    for (std::size_t i = n_test; i < n_test + n_dev && i < spec.count; ++i) split[order[i]] = Split::Dev;

    Dataset out;
    out.manifest.name = spec.id_prefix;
    const std::size_t span = spec.max_len - spec.min_len + 1;
    const int width = static_cast<int>(std::to_string(spec.count).size());
    for (std::size_t i = 0; i < spec.count; ++i) {
        const std::size_t S = spec.min_len + rng.index(span);
        std::vector<double> context(spec.dim);
        for (auto& x : context) x = spec.context_scale * rng.normal();
        if (spec.margin != 0.0) {
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            for (std::size_t d = 0; d < spec.dim; ++d) context[d] += sign * spec.margin * ground_truth.params.direction[d];
        }
        std::vector<float> clean(S * spec.dim);
        for (std::size_t k = 0; k < clean.size(); ++k) {
            clean[k] = static_cast<float>(context[k % spec.dim] + spec.token_scale * rng.normal());
        }

        std::string idx = std::to_string(i);
        idx.insert(0, static_cast<std::size_t>(width) - idx.size(), '0');
        const std::string id = spec.id_prefix + "-" + idx;
        const ActivationShard clean_shard(id, S, spec.dim, clean);
        const bool high = ground_truth.logit(clean_shard) > 0.0;

        std::vector<float> noisy = std::move(clean);
        if (spec.noise_sigma > 0.0) {
            for (auto& x : noisy) x = static_cast<float>(x + spec.noise_sigma * rng.normal());
        }

        ExampleRecord r;
        r.example_id = id;
        r.label = high ? Label::High : Label::Low;
        r.split = split[i];
        r.token_count = S;
        r.metadata = spec.metadata;
        r.shard_ref = shard_file_name(id);
        out.manifest.records.push_back(std::move(r));
        out.shards.emplace_back(id, S, spec.dim, std::move(noisy));
    }
    return out;
}

}  // namespace stakes
