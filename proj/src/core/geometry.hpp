// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

namespace heatkv {

/// The multi-scale generation layout: per-scale resolutions plus the
/// retention parameters every token-count formula consumes.
///
/// Scale indices are 1-based throughout the public interface. t_k denotes the
/// token count of scale k (h_k * w_k, plus the prompt tokens folded into
/// scale 1) and c_k the cumulative count through scale k.
struct ScaleSchedule {
    std::vector<std::pair<int, int>> resolutions;  // (height_k, width_k), length K
    int sink_count = 1;                            // s: leading scales never evicted
    long long prompt_tokens = 0;                   // extra input tokens counted with scale 1

    int num_scales() const { return static_cast<int>(resolutions.size()); }

    /// t_k. Throws IndexError for k outside [1, K].
    long long token_count(int k) const;

    /// c_k = sum of t_1..t_k. Throws IndexError for k outside [1, K].
    long long cumulative_tokens(int k) const;

    /// c_1..c_K in one pass; index j holds c_{j+1}.
    std::vector<long long> cumulative_all() const;
};

struct ModelShape {
    int layers = 0;           // L
    int heads_per_layer = 0;  // H
    int head_dim = 0;         // per-head K/V width, byte reporting only
    int bytes_per_element = 0;

    long long total_heads() const { return static_cast<long long>(layers) * heads_per_layer; }  // T
};

struct Config {
    ScaleSchedule schedule;
    ModelShape shape;
};

/// Checks every structural invariant and throws ValidationError naming the
/// offending field. All other modules treat a validated config as immutable.
void validate(const Config& config);

}  // namespace heatkv
