// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "core/budget.hpp"
#include "core/geometry.hpp"
#include "core/importance.hpp"
#include "core/scheduler.hpp"

namespace heatkv::testing {

/// Schedule with explicit per-scale token counts (height 1, width t_k).
inline ScaleSchedule schedule_from_tokens(std::vector<long long> tokens, int sink_count,
                                          long long prompt_tokens = 0) {
    ScaleSchedule schedule;
    for (long long t : tokens) {
        schedule.resolutions.emplace_back(1, static_cast<int>(t));
    }
    schedule.sink_count = sink_count;
    schedule.prompt_tokens = prompt_tokens;
    return schedule;
}

inline Config toy_config(std::vector<long long> tokens, int sink_count, int layers, int heads, int head_dim = 8,
                         int bytes_per_element = 2) {
    Config config;
    config.schedule = schedule_from_tokens(std::move(tokens), sink_count);
    config.shape = {layers, heads, head_dim, bytes_per_element};
    return config;
}

/// The worked L=2, H=2, t=[1,2,4,8], s=1 instance used across modules.
inline Config worked_config() {
    return toy_config({1, 2, 4, 8}, 1, 2, 2);
}

/// Importance table for the worked instance: CAS ranks the heads as
/// (1,1) < (1,2) < (2,1) < (2,2); every per-scale order matches.
inline ImportanceTable worked_table() {
    ImportanceTable table;
    table.layers = 2;
    table.heads = 2;
    table.num_scales = 4;
    table.sink_count = 1;
    table.cas = {0.05, 0.10, 0.20, 0.90};
    table.s_cas.assign(2 * 2 * 4, std::numeric_limits<double>::quiet_NaN());
    for (int head_slot = 0; head_slot < 4; ++head_slot) {
        for (int k = 2; k <= 3; ++k) {
            table.s_cas[static_cast<size_t>(head_slot) * 4 + static_cast<size_t>(k - 1)] = table.cas[
                static_cast<size_t>(head_slot)];
        }
    }
    build_orders(table);
    return table;
}

/// Infinity-shaped configuration: L=32, H=16, K=13, s=3, quadratic ramp.
inline Config infinity_config() {
    Config config;
    for (int k = 1; k <= 13; ++k) {
        config.schedule.resolutions.emplace_back(k, k);
    }
    config.schedule.sink_count = 3;
    config.schedule.prompt_tokens = 0;
    config.shape = {32, 16, 128, 2};
    return config;
}

inline std::uint64_t rand_range(std::mt19937_64& rng, std::uint64_t bound) {
    return rng() % bound;  // bias is irrelevant for test-case generation
}

/// Random valid config within the acceptance-criteria envelope.
inline Config random_config(std::mt19937_64& rng, int max_layers = 4, int max_heads = 4, int max_scales = 6,
                            int max_side = 3) {
    const int K = 3 + static_cast<int>(rand_range(rng, static_cast<std::uint64_t>(max_scales - 2)));
    const int s = 1 + static_cast<int>(rand_range(rng, static_cast<std::uint64_t>(K - 2)));
    Config config;
    for (int k = 0; k < K; ++k) {
        config.schedule.resolutions.emplace_back(1 + static_cast<int>(rand_range(rng, max_side)),
                                                 1 + static_cast<int>(rand_range(rng, max_side)));
    }
    config.schedule.sink_count = s;
    config.schedule.prompt_tokens = static_cast<long long>(rand_range(rng, 2));
    config.shape.layers = 1 + static_cast<int>(rand_range(rng, max_layers));
    config.shape.heads_per_layer = 1 + static_cast<int>(rand_range(rng, max_heads));
    config.shape.head_dim = 8;
    config.shape.bytes_per_element = 2;
    return config;
}

inline double random_feasible_fraction(std::mt19937_64& rng, const ScaleSchedule& schedule) {
    const double floor = min_feasible_fraction(schedule);
    std::uniform_real_distribution<double> dist(floor, 1.0);
    double b = dist(rng);
    if (b <= 0.0) b = floor;
    if (b > 1.0) b = 1.0;
    return b;
}

/// Random importance table: iid scores, orders built the usual way.
inline ImportanceTable random_table(std::mt19937_64& rng, const Config& config) {
    ImportanceTable table;
    table.layers = config.shape.layers;
    table.heads = config.shape.heads_per_layer;
    table.num_scales = config.schedule.num_scales();
    table.sink_count = config.schedule.sink_count;
    const size_t total = static_cast<size_t>(table.layers) * static_cast<size_t>(table.heads);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    table.cas.resize(total);
    for (auto& v : table.cas) v = dist(rng);
    table.s_cas.assign(total * static_cast<size_t>(table.num_scales),
                       std::numeric_limits<double>::quiet_NaN());
    for (size_t i = 0; i < total; ++i) {
        for (int k = table.sink_count + 1; k <= table.num_scales - 1; ++k) {
            table.s_cas[i * static_cast<size_t>(table.num_scales) + static_cast<size_t>(k - 1)] = dist(rng);
        }
    }
    build_orders(table);
    return table;
}

/// Independent reference for heads_to_prune: the smallest N whose
/// end-of-scale cache fits the real-valued budget.
inline long long linear_search_prune_count(double fraction, const ModelShape& shape, const ScaleSchedule& schedule,
                                           int k) {
    if (k <= schedule.sink_count) {
        return 0;
    }
    const long long T = shape.total_heads();
    const long long c_s = schedule.cumulative_tokens(schedule.sink_count);
    const long long c_k = schedule.cumulative_tokens(k);
    const double budget = fraction * static_cast<double>(T * schedule.cumulative_tokens(schedule.num_scales() - 1));
    for (long long n = 0; n <= T; ++n) {
        if (static_cast<double>(n * c_s + (T - n) * c_k) <= budget) {
            return n;
        }
    }
    return T;
}

/// Plain-enumeration reference for brute_force_min_early, built directly on
/// cache_size_after_layer with no shared incremental machinery.
inline int enumerate_min_early(int k, const PruneSet& previous, const PruneSet& target, long long cap, PruneMode mode,
                               Accounting accounting, const Config& config) {
    std::vector<PruneItem> candidates;
    std::set_difference(target.begin(), target.end(), previous.begin(), previous.end(),
                        std::back_inserter(candidates));
    const int n = static_cast<int>(candidates.size());
    const int layers = config.shape.layers;
    for (int m = 0; m <= n; ++m) {
        // iterate all bitmasks with m bits (n is tiny in these tests)
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
            if (__builtin_popcount(mask) != m) {
                continue;
            }
            PruneSet early;
            for (int i = 0; i < n; ++i) {
                if (mask & (1u << i)) {
                    early.insert(candidates[static_cast<size_t>(i)]);
                }
            }
            bool ok = true;
            for (int l = 1; l <= layers && ok; ++l) {
                ok = cache_size_after_layer(k, l, target, previous, early, mode, accounting, config) <= cap;
            }
            if (ok) {
                return m;
            }
        }
    }
    return -1;
}

}  // namespace heatkv::testing
