#pragma once

// Sequence probes over residual activations.
//
// Every probe maps an S x D activation matrix A to one logit
//   f(A) = pool(A) + b
// with p(A) = sigmoid(f(A)). With z_s = theta . a_s the pools are
//   Mean             (1/S) sum_s z_s
//   Max              max_s z_s
//   LastToken        z_S
//   MaxRollingMeans  max over windows of W = min(T, S) consecutive tokens of mean z
//   Softmax          softmax(z / phi) . z
//   Attention        softmax(A theta_q) . (A theta_v)
// Setting b = 0 gives the bias-free forms exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stakes/error.hpp"
#include "stakes/shard.hpp"

namespace stakes {

enum class ProbeKind { Mean, Max, LastToken, MaxRollingMeans, Softmax, Attention };

inline constexpr ProbeKind kAllProbeKinds[] = {ProbeKind::Mean,    ProbeKind::Max,
                                               ProbeKind::LastToken, ProbeKind::MaxRollingMeans,
                                               ProbeKind::Softmax, ProbeKind::Attention};

inline std::string_view to_string(ProbeKind kind) {
    switch (kind) {
        case ProbeKind::Mean: return "mean";
        case ProbeKind::Max: return "max";
        case ProbeKind::LastToken: return "last_token";
        case ProbeKind::MaxRollingMeans: return "max_rolling_means";
        case ProbeKind::Softmax: return "softmax";
        case ProbeKind::Attention: return "attention";
    }
    return "mean";
}

inline std::optional<ProbeKind> parse_probe_kind(std::string_view s) {
    for (auto kind : kAllProbeKinds) {
        if (to_string(kind) == s) return kind;
    }
    if (s == "last") return ProbeKind::LastToken;
    if (s == "rolling") return ProbeKind::MaxRollingMeans;
    return std::nullopt;
}

inline constexpr double kDefaultTemperature = 5.0;
inline constexpr std::size_t kDefaultWindow = 40;

struct ProbeConfig {
    ProbeKind kind = ProbeKind::Mean;
    std::size_t dim = 0;
    std::optional<double> temperature;  // Softmax only
    std::optional<std::size_t> window;  // MaxRollingMeans only

    /// Config for `kind` with the default temperature / window where relevant.
    static ProbeConfig make(ProbeKind kind, std::size_t dim, double temperature = kDefaultTemperature,
                            std::size_t window = kDefaultWindow) {
        ProbeConfig c{kind, dim, std::nullopt, std::nullopt};
        if (kind == ProbeKind::Softmax) c.temperature = temperature;
        if (kind == ProbeKind::MaxRollingMeans) c.window = window;
        c.validate();
        return c;
    }

    void validate() const {
        require(dim >= 1, ErrorKind::InvalidArgument, "probe dim must be >= 1");
        require(temperature.has_value() == (kind == ProbeKind::Softmax), ErrorKind::InvalidArgument,
                "temperature must be set exactly for softmax probes");
        require(window.has_value() == (kind == ProbeKind::MaxRollingMeans), ErrorKind::InvalidArgument,
                "window must be set exactly for max_rolling_means probes");
        if (temperature) {
            require(std::isfinite(*temperature) && *temperature > 0.0, ErrorKind::InvalidArgument,
                    "temperature must be positive");
        }
        if (window) require(*window >= 1, ErrorKind::InvalidArgument, "window must be >= 1");
    }

    friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

/// Learned parameters. `direction` is theta (theta_q for Attention);
/// `value_direction` is theta_v and is empty for every other kind.
/// The same shape doubles as a gradient container.
struct ProbeParams {
    std::vector<double> direction;
    std::vector<double> value_direction;
    double bias = 0.0;

    static ProbeParams zeros(const ProbeConfig& config) {
        ProbeParams p;
        p.direction.assign(config.dim, 0.0);
        if (config.kind == ProbeKind::Attention) p.value_direction.assign(config.dim, 0.0);
        return p;
    }

    std::size_t size() const noexcept { return direction.size() + value_direction.size() + 1; }

    /// Applies `fn(double&)` to every scalar parameter, bias last.
    template <typename Fn>
    void for_each(Fn&& fn) {
        for (auto& x : direction) fn(x);
        for (auto& x : value_direction) fn(x);
        fn(bias);
    }

    friend bool operator==(const ProbeParams&, const ProbeParams&) = default;
};

inline void check_params(const ProbeConfig& config, const ProbeParams& params) {
    config.validate();
    require(params.direction.size() == config.dim, ErrorKind::DimensionMismatch,
            "probe direction has length " + std::to_string(params.direction.size()) + ", config dim is " +
                std::to_string(config.dim));
    const std::size_t want_value = config.kind == ProbeKind::Attention ? config.dim : 0;
    require(params.value_direction.size() == want_value, ErrorKind::DimensionMismatch,
            "value direction length does not match probe kind");
    bool finite = std::isfinite(params.bias);
    for (double x : params.direction) finite = finite && std::isfinite(x);
    for (double x : params.value_direction) finite = finite && std::isfinite(x);
    require(finite, ErrorKind::NonFinite, "probe parameters must be finite");
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Stable softmax of `scale * x`.
inline std::vector<double> softmax(std::span<const double> x, double scale = 1.0) {
    std::vector<double> w(x.size());
    if (x.empty()) return w;
    double hi = x[0] * scale;
    for (double v : x) hi = std::max(hi, v * scale);
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        w[i] = std::exp(x[i] * scale - hi);
        total += w[i];
    }
    for (auto& v : w) v /= total;
    return w;
}

/// z_s = direction . a_s for every position s.
inline std::vector<double> project(const ActivationShard& A, std::span<const double> direction) {
    std::vector<double> z(A.seq_len());
    for (std::size_t s = 0; s < A.seq_len(); ++s) {
        const auto row = A.row(s);
        double acc = 0.0;
        for (std::size_t d = 0; d < row.size(); ++d) acc += direction[d] * static_cast<double>(row[d]);
        z[s] = acc;
    }
    return z;
}

namespace detail {

inline void check_input(const ActivationShard& A, const ProbeConfig& config, const ProbeParams& params) {
    check_params(config, params);
    require(A.seq_len() >= 1, ErrorKind::InvalidArgument, "activation shard is empty");
    require(A.dim() == config.dim, ErrorKind::DimensionMismatch,
            "activation dim " + std::to_string(A.dim()) + " != probe dim " + std::to_string(config.dim));
}

// grad += scale * sum_s coef[s] * a_s
inline void add_weighted_rows(const ActivationShard& A, std::span<const double> coef, double scale,
                              std::vector<double>& grad) {
    for (std::size_t s = 0; s < A.seq_len(); ++s) {
        const double c = scale * coef[s];
        if (c == 0.0) continue;
        const auto row = A.row(s);
        for (std::size_t d = 0; d < row.size(); ++d) grad[d] += c * static_cast<double>(row[d]);
    }
}

inline double mean_of(std::span<const double> z, std::size_t begin, std::size_t count) {
    double acc = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i) acc += z[i];
    return acc / static_cast<double>(count);
}

}  // namespace detail

/// Pooled logit f(A). When `grad` is non-null, `scale * df/dparams` is added
/// to it (Max-type pools use the subgradient of the first maximiser).
inline double aggregate_impl(const ActivationShard& A, const ProbeConfig& config, const ProbeParams& params,
                             ProbeParams* grad, double scale) {
    detail::check_input(A, config, params);
    const std::size_t S = A.seq_len();
    const auto z = project(A, params.direction);
    std::vector<double> coef;  // df/dz_s, only filled when a gradient is requested
    double pooled = 0.0;

    switch (config.kind) {
        case ProbeKind::Mean: {
            pooled = detail::mean_of(z, 0, S);
            if (grad) coef.assign(S, 1.0 / static_cast<double>(S));
            break;
        }
        case ProbeKind::Max: {
            const auto it = std::max_element(z.begin(), z.end());
            pooled = *it;
            if (grad) {
                coef.assign(S, 0.0);
                coef[static_cast<std::size_t>(it - z.begin())] = 1.0;
            }
            break;
        }
        case ProbeKind::LastToken: {
            pooled = z[S - 1];
            if (grad) {
                coef.assign(S, 0.0);
                coef[S - 1] = 1.0;
            }
            break;
        }
        case ProbeKind::MaxRollingMeans: {
            const std::size_t W = std::min(*config.window, S);
            std::size_t best = 0;
            pooled = detail::mean_of(z, 0, W);
            for (std::size_t i = 1; i + W <= S; ++i) {
                const double m = detail::mean_of(z, i, W);
                if (m > pooled) {
                    pooled = m;
                    best = i;
                }
            }
            if (grad) {
                coef.assign(S, 0.0);
                for (std::size_t i = best; i < best + W; ++i) coef[i] = 1.0 / static_cast<double>(W);
            }
            break;
        }
        case ProbeKind::Softmax: {
            const double phi = *config.temperature;
            const auto w = softmax(z, 1.0 / phi);
            for (std::size_t s = 0; s < S; ++s) pooled += w[s] * z[s];
            if (grad) {
                // d/dz_s [sum_j w_j z_j] = w_s (1 + (z_s - f) / phi)
                coef.resize(S);
                for (std::size_t s = 0; s < S; ++s) coef[s] = w[s] * (1.0 + (z[s] - pooled) / phi);
            }
            break;
        }
        case ProbeKind::Attention: {
            const auto v = project(A, params.value_direction);
            const auto w = softmax(z);
            for (std::size_t s = 0; s < S; ++s) pooled += w[s] * v[s];
            if (grad) {
                // df/dq_s = w_s (v_s - f), df/dv_s = w_s
                coef.resize(S);
                for (std::size_t s = 0; s < S; ++s) coef[s] = w[s] * (v[s] - pooled);
                detail::add_weighted_rows(A, w, scale, grad->value_direction);
            }
            break;
        }
    }

    if (grad) {
        detail::add_weighted_rows(A, coef, scale, grad->direction);
        grad->bias += scale;
    }
    return pooled + params.bias;
}

inline double aggregate(const ActivationShard& A, const ProbeConfig& config, const ProbeParams& params) {
    return aggregate_impl(A, config, params, nullptr, 0.0);
}

inline double score(const ActivationShard& A, const ProbeConfig& config, const ProbeParams& params) {
    return sigmoid(aggregate(A, config, params));
}

/// Per-token projections for non-Attention kinds; bias excluded.
inline std::vector<double> per_token_logits(const ActivationShard& A, const ProbeConfig& config,
                                            const ProbeParams& params) {
    require(config.kind != ProbeKind::Attention, ErrorKind::InvalidArgument,
            "per_token_logits is undefined for attention probes; use token_attribution");
    detail::check_input(A, config, params);
    return project(A, params.direction);
}

struct TokenAttribution {
    std::vector<double> attention_scores;  // theta_q . a_s, pre-softmax
    std::vector<double> concept_scores;    // theta_v . a_s

    std::vector<double> weights() const { return softmax(attention_scores); }
};

inline TokenAttribution token_attribution(const ActivationShard& A, const ProbeConfig& config,
                                          const ProbeParams& params) {
    require(config.kind == ProbeKind::Attention, ErrorKind::InvalidArgument,
            "token attribution needs an attention probe");
    detail::check_input(A, config, params);
    return {project(A, params.direction), project(A, params.value_direction)};
}

/// Parameters rounded to f32 precision, the precision probe files store.
inline ProbeParams round_to_f32(ProbeParams params) {
    params.for_each([](double& x) { x = static_cast<double>(static_cast<float>(x)); });
    return params;
}

}  // namespace stakes
