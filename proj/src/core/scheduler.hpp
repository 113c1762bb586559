// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "core/budget.hpp"
#include "core/geometry.hpp"
#include "core/importance.hpp"

namespace heatkv {

/// Granularity of the prunable unit: whole heads (a pruned head keeps only
/// the sink scales) or individual head-scales.
enum class PruneMode { binary, scale };

/// Cache-size model used when choosing early evictions. `paper` counts
/// not-yet-executed layers at the current scale's size c_k; `tight` counts
/// them at c_{k-1}, which is what a layer physically holds before its own
/// scale-k append. Paper values dominate tight values, so paper-built
/// schedules always satisfy the tight model.
enum class Accounting { paper, tight };

PruneMode prune_mode_from_name(std::string_view name);        // ArgumentError on unknown
Accounting accounting_from_name(std::string_view name);       // ArgumentError on unknown
std::string_view prune_mode_name(PruneMode mode);
std::string_view accounting_name(Accounting accounting);

/// The prunable unit. source_scale is 0 in binary mode and the source scale
/// i in (s, K-1] in scale mode.
struct PruneItem {
    int source_scale = 0;
    int layer = 0;
    int head = 0;

    friend auto operator<=>(const PruneItem&, const PruneItem&) = default;
};

using PruneSet = std::set<PruneItem>;

/// Tokens head (layer, head) holds at the end of scale k under prune set P:
/// binary mode keeps c_s for pruned heads and c_k otherwise; scale mode
/// keeps the sinks plus every retained source scale. k = 0 yields 0 (empty
/// cache before generation starts).
long long cached_tokens(int k, int layer, int head, const PruneSet& prune_set, PruneMode mode,
                        const ScaleSchedule& schedule);

/// Total cache right after layer `layer` executes at scale k: executed
/// layers have applied all scale-k removals (counted under G_k), future
/// layers only the removals present when the scale began (G_{k-1} union
/// E_k), at scale-k size under paper accounting and scale-(k-1) size under
/// tight accounting. layer ranges over [0, L]; 0 means before any layer
/// runs. Throws ScheduleError when the nesting preconditions fail.
long long cache_size_after_layer(int k, int layer, const PruneSet& target, const PruneSet& previous,
                                 const PruneSet& early, PruneMode mode, Accounting accounting, const Config& config);

/// Eviction actions for one generation scale.
struct ScaleActions {
    int k = 0;
    std::vector<PruneItem> target;  // G_k: absent by the end of the scale
    std::vector<PruneItem> early;   // E_k: evicted before the scale starts
    std::vector<PruneItem> absent;  // A_k = G_{k-1} union E_k
    std::map<int, std::vector<PruneItem>> evict_after_layer;  // layer -> items of G_k \ A_k at that layer
};

/// A complete static eviction schedule over scales 1..K-1. Scale K is
/// read-only: nothing is appended or evicted there.
struct SchedulePlan {
    Config config;
    PruneMode mode = PruneMode::binary;
    Accounting accounting = Accounting::paper;
    BudgetPlan budget;
    std::vector<ScaleActions> scales;  // index k-1
    std::string scores_digest;         // provenance of the importance scores

    const ScaleActions& at_scale(int k) const;  // IndexError outside [1, K-1]
};

/// Structural consistency of a plan (index ranges, G-nesting, early-set and
/// eviction-map coverage, per-scale prune counts). Throws ScheduleError.
void validate_plan(const SchedulePlan& plan);

/// The minimum set of newly pruned items that must be evicted before scale k
/// starts so the per-layer cache stays within `cap`. Candidates are consumed
/// from the sort (layer desc, source scale desc, rank asc) while any layer
/// exceeds the cap. In binary mode with paper accounting the result has
/// minimum cardinality.
std::vector<PruneItem> greedy_early_pruning(int k, const PruneSet& previous, const PruneSet& target, long long cap,
                                            PruneMode mode, Accounting accounting, const Config& config,
                                            const ImportanceTable& table);

/// Builds the full schedule: G_k from order prefixes of length N_k, E_k from
/// greedy_early_pruning, and per-layer eviction of the remainder.
SchedulePlan build_schedule(const ImportanceTable& table, const BudgetPlan& budget, PruneMode mode,
                            Accounting accounting, const Config& config);

/// The boundary-only baseline: everything newly pruned is evicted before the
/// scale starts (E_k = G_k \ G_{k-1}).
SchedulePlan naive_schedule(const ImportanceTable& table, const BudgetPlan& budget, PruneMode mode,
                            const Config& config, Accounting accounting = Accounting::paper);

struct EarlyPruneOracle {
    int min_size = 0;
    std::vector<PruneItem> witness;
};

/// Exhaustive reference for greedy_early_pruning: enumerates subsets of
/// G_k \ G_{k-1} in ascending cardinality (lexicographic within a
/// cardinality) and returns the first feasible one. UnsupportedError when
/// the candidate set exceeds max_candidates.
EarlyPruneOracle brute_force_min_early(int k, const PruneSet& previous, const PruneSet& target, long long cap,
                                       PruneMode mode, Accounting accounting, const Config& config,
                                       int max_candidates = 20);

struct OptimalityScale {
    int k = 0;
    int early_size = 0;
    int oracle_min = 0;  // meaningless when skipped
    bool skipped = false;
    bool optimal = false;
};

/// |E_k| versus the brute-force minimum for every scale of a built plan.
/// Scales whose candidate set exceeds max_candidates are skipped with a
/// notice. hard_fail is set iff a binary-mode, paper-accounting scale
/// misses the optimum; gaps under other configurations are informational
/// (no optimality claim is made there).
struct OptimalityReport {
    std::vector<OptimalityScale> scales;
    bool hard_fail = false;
};

OptimalityReport verify_optimality(const SchedulePlan& plan, int max_candidates = 20);

}  // namespace heatkv
