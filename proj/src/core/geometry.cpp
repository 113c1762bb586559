// SPDX-License-Identifier: Apache-2.0

#include "core/geometry.hpp"

#include "core/error.hpp"

namespace heatkv {

long long ScaleSchedule::token_count(int k) const {
    if (k < 1 || k > num_scales()) {
        throw IndexError(msg("scale index k=", k, " out of range [1, ", num_scales(), "]"));
    }
    const auto& [h, w] = resolutions[static_cast<size_t>(k - 1)];
    long long t = static_cast<long long>(h) * static_cast<long long>(w);
    if (k == 1) {
        t += prompt_tokens;
    }
    return t;
}

long long ScaleSchedule::cumulative_tokens(int k) const {
    if (k < 1 || k > num_scales()) {
        throw IndexError(msg("scale index k=", k, " out of range [1, ", num_scales(), "]"));
    }
    long long total = 0;
    for (int tau = 1; tau <= k; ++tau) {
        total += token_count(tau);
    }
    return total;
}

std::vector<long long> ScaleSchedule::cumulative_all() const {
    std::vector<long long> cum(static_cast<size_t>(num_scales()));
    long long total = 0;
    for (int k = 1; k <= num_scales(); ++k) {
        total += token_count(k);
        cum[static_cast<size_t>(k - 1)] = total;
    }
    return cum;
}

void validate(const Config& config) {
    const ScaleSchedule& sched = config.schedule;
    const ModelShape& shape = config.shape;
    const int K = sched.num_scales();

    if (K < 3) {
        throw ValidationError(
            msg("resolutions: need at least 3 scales (one sink, one prunable, one final), got K=", K));
    }
    for (int k = 1; k <= K; ++k) {
        const auto& [h, w] = sched.resolutions[static_cast<size_t>(k - 1)];
        if (h < 1 || w < 1) {
            throw ValidationError(msg("resolutions[", k, "]: empty scale (", h, "x", w, ")"));
        }
    }
    if (sched.prompt_tokens < 0) {
        throw ValidationError(msg("prompt_tokens: must be non-negative, got ", sched.prompt_tokens));
    }
    if (sched.sink_count < 1) {
        throw ValidationError(msg("sink_count: must be at least 1, got ", sched.sink_count));
    }
    if (sched.sink_count > K - 2) {
        throw ValidationError(msg("sink_count: no prunable scale (requires s <= K-2, got s=", sched.sink_count,
                                  " with K=", K, ")"));
    }

    // t_k >= 1 implies strictly increasing c_k; checked explicitly because the
    // budget formulas divide by c_k - c_s.
    long long prev = 0;
    for (int k = 1; k <= K; ++k) {
        const long long c = sched.cumulative_tokens(k);
        if (c <= prev) {
            throw ValidationError(msg("resolutions[", k, "]: cumulative token count not strictly increasing"));
        }
        prev = c;
    }

    if (shape.layers < 1) {
        throw ValidationError(msg("layers: must be positive, got ", shape.layers));
    }
    if (shape.heads_per_layer < 1) {
        throw ValidationError(msg("heads: must be positive, got ", shape.heads_per_layer));
    }
    if (shape.head_dim < 1) {
        throw ValidationError(msg("head_dim: must be positive, got ", shape.head_dim));
    }
    if (shape.bytes_per_element < 1) {
        throw ValidationError(msg("bytes_per_element: must be positive, got ", shape.bytes_per_element));
    }
}

}  // namespace heatkv
