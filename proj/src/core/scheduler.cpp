// SPDX-License-Identifier: Apache-2.0

#include "core/scheduler.hpp"

#include <algorithm>
#include <numeric>

#include "core/error.hpp"

namespace heatkv {

namespace {

void check_nesting(const PruneSet& target, const PruneSet& previous, const PruneSet& early) {
    if (!std::includes(target.begin(), target.end(), previous.begin(), previous.end())) {
        throw ScheduleError("previous prune set is not contained in the target set");
    }
    for (const PruneItem& item : early) {
        if (!target.count(item) || previous.count(item)) {
            throw ScheduleError(msg("early item (", item.source_scale, ",", item.layer, ",", item.head,
                                    ") is not newly pruned at this scale"));
        }
    }
}

struct Geometry {
    int K = 0;
    int s = 0;
    int L = 0;
    int H = 0;
    long long T = 0;
    std::vector<long long> t;    // t[k] for k in [1, K]
    std::vector<long long> cum;  // cum[k] = c_k, cum[0] = 0

    explicit Geometry(const ScaleSchedule& schedule) {
        K = schedule.num_scales();
        s = schedule.sink_count;
        t.resize(static_cast<size_t>(K) + 1, 0);
        cum.resize(static_cast<size_t>(K) + 1, 0);
        for (int k = 1; k <= K; ++k) {
            t[static_cast<size_t>(k)] = schedule.token_count(k);
            cum[static_cast<size_t>(k)] = cum[static_cast<size_t>(k - 1)] + t[static_cast<size_t>(k)];
        }
    }

    explicit Geometry(const Config& config) : Geometry(config.schedule) {
        L = config.shape.layers;
        H = config.shape.heads_per_layer;
        T = config.shape.total_heads();
    }

    long long head_tokens(int k, int layer, int head, const PruneSet& prune_set, PruneMode mode) const {
        if (k <= 0) {
            return 0;
        }
        // Before scale s completes only the sinks gathered so far exist.
        const long long sink = cum[static_cast<size_t>(std::min(k, s))];
        if (mode == PruneMode::binary) {
            return prune_set.count({0, layer, head}) ? sink : cum[static_cast<size_t>(k)];
        }
        long long tokens = sink;
        for (int i = s + 1; i <= k; ++i) {
            if (!prune_set.count({i, layer, head})) {
                tokens += t[static_cast<size_t>(i)];
            }
        }
        return tokens;
    }

    /// Tokens an early eviction of `item` frees from every not-yet-executed
    /// layer, under the accounting's future-scale index fk.
    long long early_reduction(const PruneItem& item, int fk, PruneMode mode) const {
        if (fk <= 0) {
            return 0;
        }
        if (mode == PruneMode::binary) {
            return cum[static_cast<size_t>(fk)] - cum[static_cast<size_t>(std::min(fk, s))];
        }
        return item.source_scale <= fk ? t[static_cast<size_t>(item.source_scale)] : 0;
    }
};

/// Rank lookups for the greedy candidate sort.
struct RankIndex {
    int heads = 0;
    std::vector<int> binary_rank;               // (l-1)*H + (h-1) -> rank in O
    std::map<int, std::vector<int>> scale_rank;  // i -> rank in O_i

    explicit RankIndex(const ImportanceTable& table) : heads(table.heads) {
        const size_t total = static_cast<size_t>(table.layers) * static_cast<size_t>(table.heads);
        binary_rank.assign(total, 0);
        for (size_t pos = 0; pos < table.binary_order.size(); ++pos) {
            const HeadRef& ref = table.binary_order[pos];
            binary_rank[slot(ref)] = static_cast<int>(pos);
        }
        for (const auto& [i, order] : table.scale_orders) {
            auto& ranks = scale_rank[i];
            ranks.assign(total, 0);
            for (size_t pos = 0; pos < order.size(); ++pos) {
                ranks[slot(order[pos])] = static_cast<int>(pos);
            }
        }
    }

    size_t slot(const HeadRef& ref) const {
        return static_cast<size_t>(ref.layer - 1) * static_cast<size_t>(heads) + static_cast<size_t>(ref.head - 1);
    }

    int rank_of(const PruneItem& item, PruneMode mode) const {
        const size_t idx = static_cast<size_t>(item.layer - 1) * static_cast<size_t>(heads) +
                           static_cast<size_t>(item.head - 1);
        if (mode == PruneMode::binary) {
            return binary_rank[idx];
        }
        return scale_rank.at(item.source_scale)[idx];
    }
};

/// Candidate order R_k: layer descending, source scale descending (scale
/// mode), rank ascending, head ascending as a final deterministic tie-break.
std::vector<PruneItem> sorted_candidates(const PruneSet& target, const PruneSet& previous, PruneMode mode,
                                         const RankIndex& ranks) {
    std::vector<PruneItem> out;
    std::set_difference(target.begin(), target.end(), previous.begin(), previous.end(), std::back_inserter(out));
    std::sort(out.begin(), out.end(), [&](const PruneItem& a, const PruneItem& b) {
        if (a.layer != b.layer) return a.layer > b.layer;
        if (mode == PruneMode::scale && a.source_scale != b.source_scale) return a.source_scale > b.source_scale;
        const int ra = ranks.rank_of(a, mode);
        const int rb = ranks.rank_of(b, mode);
        if (ra != rb) return ra < rb;
        return a.head < b.head;
    });
    return out;
}

void require_head_range(const Geometry& geo, const PruneItem& item) {
    if (item.layer < 1 || item.layer > geo.L || item.head < 1 || item.head > geo.H) {
        throw ScheduleError(msg("prune item (", item.source_scale, ",", item.layer, ",", item.head,
                                ") outside the model shape ", geo.L, "x", geo.H));
    }
}

SchedulePlan assemble_schedule(const ImportanceTable& table, const BudgetPlan& budget, PruneMode mode,
                               Accounting accounting, const Config& config, bool greedy) {
    validate(config);
    const Geometry geo(config);
    if (table.layers != geo.L || table.heads != geo.H || table.num_scales != geo.K || table.sink_count != geo.s) {
        throw ValidationError("importance table does not match the configuration");
    }
    if (static_cast<int>(budget.prune_counts.size()) != geo.K - 1) {
        throw ValidationError(msg("budget plan covers ", budget.prune_counts.size(), " scales, expected ", geo.K - 1));
    }
    if (mode == PruneMode::scale) {
        for (int i = geo.s + 1; i <= geo.K - 1; ++i) {
            if (!table.scale_orders.count(i)) {
                throw ValidationError(msg("importance table lacks the ordering for source scale ", i));
            }
        }
    }

    SchedulePlan plan;
    plan.config = config;
    plan.mode = mode;
    plan.accounting = accounting;
    plan.budget = budget;

    PruneSet previous;
    for (int k = 1; k <= geo.K - 1; ++k) {
        const long long n = budget.prune_count(k);
        PruneSet target;
        if (mode == PruneMode::binary) {
            for (long long pos = 0; pos < n; ++pos) {
                const HeadRef& ref = table.binary_order[static_cast<size_t>(pos)];
                target.insert({0, ref.layer, ref.head});
            }
        } else {
            for (int i = geo.s + 1; i <= std::min(k, geo.K - 1); ++i) {
                const HeadOrder& order = table.scale_orders.at(i);
                for (long long pos = 0; pos < n; ++pos) {
                    const HeadRef& ref = order[static_cast<size_t>(pos)];
                    target.insert({i, ref.layer, ref.head});
                }
            }
        }

        std::vector<PruneItem> early;
        if (greedy) {
            early = greedy_early_pruning(k, previous, target, budget.token_cap, mode, accounting, config, table);
        } else {
            std::set_difference(target.begin(), target.end(), previous.begin(), previous.end(),
                                std::back_inserter(early));
        }

        ScaleActions actions;
        actions.k = k;
        actions.target.assign(target.begin(), target.end());
        actions.early = early;
        PruneSet absent = previous;
        absent.insert(early.begin(), early.end());
        actions.absent.assign(absent.begin(), absent.end());
        for (const PruneItem& item : target) {
            if (!absent.count(item)) {
                actions.evict_after_layer[item.layer].push_back(item);
            }
        }
        plan.scales.push_back(std::move(actions));
        previous = std::move(target);
    }
    validate_plan(plan);
    return plan;
}

}  // namespace

PruneMode prune_mode_from_name(std::string_view name) {
    if (name == "binary") return PruneMode::binary;
    if (name == "scale") return PruneMode::scale;
    throw ArgumentError(msg("unknown prune mode \"", name, "\" (expected binary or scale)"));
}

Accounting accounting_from_name(std::string_view name) {
    if (name == "paper") return Accounting::paper;
    if (name == "tight") return Accounting::tight;
    throw ArgumentError(msg("unknown accounting \"", name, "\" (expected paper or tight)"));
}

std::string_view prune_mode_name(PruneMode mode) {
    return mode == PruneMode::binary ? "binary" : "scale";
}

std::string_view accounting_name(Accounting accounting) {
    return accounting == Accounting::paper ? "paper" : "tight";
}

const ScaleActions& SchedulePlan::at_scale(int k) const {
    if (k < 1 || k > static_cast<int>(scales.size())) {
        throw IndexError(msg("schedule queried at scale ", k, ", plan covers [1, ", scales.size(), "]"));
    }
    return scales[static_cast<size_t>(k - 1)];
}

long long cached_tokens(int k, int layer, int head, const PruneSet& prune_set, PruneMode mode,
                        const ScaleSchedule& schedule) {
    if (k > schedule.num_scales()) {
        throw IndexError(msg("scale index k=", k, " out of range [0, ", schedule.num_scales(), "]"));
    }
    const Geometry geo(schedule);
    return geo.head_tokens(k, layer, head, prune_set, mode);
}

long long cache_size_after_layer(int k, int layer, const PruneSet& target, const PruneSet& previous,
                                 const PruneSet& early, PruneMode mode, Accounting accounting, const Config& config) {
    const Geometry geo(config);
    if (k < 1 || k > geo.K - 1) {
        throw IndexError(msg("scale index k=", k, " out of range [1, ", geo.K - 1, "]"));
    }
    if (layer < 0 || layer > geo.L) {
        throw IndexError(msg("layer index ", layer, " out of range [0, ", geo.L, "]"));
    }
    check_nesting(target, previous, early);

    PruneSet absent = previous;
    absent.insert(early.begin(), early.end());
    const int fk = accounting == Accounting::paper ? k : k - 1;

    long long total = 0;
    for (int l = 1; l <= geo.L; ++l) {
        const PruneSet& effective = l <= layer ? target : absent;
        const int scale_index = l <= layer ? k : fk;
        for (int h = 1; h <= geo.H; ++h) {
            total += geo.head_tokens(scale_index, l, h, effective, mode);
        }
    }
    return total;
}

std::vector<PruneItem> greedy_early_pruning(int k, const PruneSet& previous, const PruneSet& target, long long cap,
                                            PruneMode mode, Accounting accounting, const Config& config,
                                            const ImportanceTable& table) {
    const Geometry geo(config);
    if (k < 1 || k > geo.K - 1) {
        throw IndexError(msg("scale index k=", k, " out of range [1, ", geo.K - 1, "]"));
    }
    check_nesting(target, previous, {});
    const RankIndex ranks(table);
    const std::vector<PruneItem> candidates = sorted_candidates(target, previous, mode, ranks);
    const int fk = accounting == Accounting::paper ? k : k - 1;

    // Per-layer totals with E empty; early picks only ever shrink the
    // not-yet-executed side, by early_reduction() per affected layer.
    std::vector<long long> executed(static_cast<size_t>(geo.L) + 1, 0);
    std::vector<long long> future(static_cast<size_t>(geo.L) + 1, 0);
    for (int l = 1; l <= geo.L; ++l) {
        for (int h = 1; h <= geo.H; ++h) {
            executed[static_cast<size_t>(l)] += geo.head_tokens(k, l, h, target, mode);
            future[static_cast<size_t>(l)] += geo.head_tokens(fk, l, h, previous, mode);
        }
    }

    long long executed_prefix = 0;
    long long future_suffix = std::accumulate(future.begin(), future.end(), 0ll);
    std::vector<PruneItem> early;
    size_t next_candidate = 0;
    for (int l = 1; l <= geo.L; ++l) {
        future_suffix -= future[static_cast<size_t>(l)];
        executed_prefix += executed[static_cast<size_t>(l)];
        while (executed_prefix + future_suffix > cap) {
            if (next_candidate == candidates.size()) {
                throw ScheduleError(msg("early-pruning candidates exhausted at scale ", k, " layer ", l,
                                        " with cache ", executed_prefix + future_suffix, " over cap ", cap));
            }
            const PruneItem item = candidates[next_candidate++];
            early.push_back(item);
            const long long freed = geo.early_reduction(item, fk, mode);
            if (item.layer > l && freed > 0) {
                future[static_cast<size_t>(item.layer)] -= freed;
                future_suffix -= freed;
            }
        }
    }
    std::sort(early.begin(), early.end());

    // The incremental walk must agree with the reference accounting.
    PruneSet early_set(early.begin(), early.end());
    for (int l = 1; l <= geo.L; ++l) {
        if (cache_size_after_layer(k, l, target, previous, early_set, mode, accounting, config) > cap) {
            throw InternalError(msg("greedy early pruning left scale ", k, " layer ", l, " over the cap"));
        }
    }
    return early;
}

SchedulePlan build_schedule(const ImportanceTable& table, const BudgetPlan& budget, PruneMode mode,
                            Accounting accounting, const Config& config) {
    return assemble_schedule(table, budget, mode, accounting, config, /*greedy=*/true);
}

SchedulePlan naive_schedule(const ImportanceTable& table, const BudgetPlan& budget, PruneMode mode,
                            const Config& config, Accounting accounting) {
    return assemble_schedule(table, budget, mode, accounting, config, /*greedy=*/false);
}

void validate_plan(const SchedulePlan& plan) {
    validate(plan.config);
    const Geometry geo(plan.config);
    if (static_cast<int>(plan.scales.size()) != geo.K - 1) {
        throw ScheduleError(msg("plan covers ", plan.scales.size(), " scales, expected ", geo.K - 1));
    }
    if (static_cast<int>(plan.budget.prune_counts.size()) != geo.K - 1) {
        throw ScheduleError(msg("budget plan covers ", plan.budget.prune_counts.size(), " scales, expected ",
                                geo.K - 1));
    }

    PruneSet previous;
    for (int k = 1; k <= geo.K - 1; ++k) {
        const ScaleActions& actions = plan.at_scale(k);
        if (actions.k != k) {
            throw ScheduleError(msg("scale entry ", k, " is labeled k=", actions.k));
        }
        const PruneSet target(actions.target.begin(), actions.target.end());
        const PruneSet early(actions.early.begin(), actions.early.end());
        const PruneSet absent(actions.absent.begin(), actions.absent.end());

        for (const PruneItem& item : target) {
            require_head_range(geo, item);
            if (plan.mode == PruneMode::binary) {
                if (item.source_scale != 0) {
                    throw ScheduleError(msg("binary-mode item at scale ", k, " carries source scale ",
                                            item.source_scale));
                }
            } else if (item.source_scale <= geo.s || item.source_scale > k) {
                throw ScheduleError(msg("scale-mode item at scale ", k, " has source scale ", item.source_scale,
                                        " outside (", geo.s, ", ", k, "]"));
            }
        }
        check_nesting(target, previous, early);

        PruneSet expected_absent = previous;
        expected_absent.insert(early.begin(), early.end());
        if (absent != expected_absent) {
            throw ScheduleError(msg("absent set at scale ", k, " is not G_{k-1} union E_k"));
        }

        // Every remaining item evicts exactly once, at its own layer.
        PruneSet remaining;
        std::set_difference(target.begin(), target.end(), absent.begin(), absent.end(),
                            std::inserter(remaining, remaining.begin()));
        size_t evict_count = 0;
        for (const auto& [layer, items] : actions.evict_after_layer) {
            for (const PruneItem& item : items) {
                if (item.layer != layer) {
                    throw ScheduleError(msg("item (", item.source_scale, ",", item.layer, ",", item.head,
                                            ") is scheduled after layer ", layer, " at scale ", k));
                }
                if (!remaining.count(item)) {
                    throw ScheduleError(msg("item (", item.source_scale, ",", item.layer, ",", item.head,
                                            ") at scale ", k, " is evicted without being newly pruned"));
                }
                ++evict_count;
            }
        }
        if (evict_count != remaining.size()) {
            throw ScheduleError(msg("scale ", k, " evicts ", evict_count, " items, expected ", remaining.size()));
        }

        // |G_k| agreement with the budget plan.
        const long long n = plan.budget.prune_count(k);
        if (plan.mode == PruneMode::binary) {
            if (static_cast<long long>(target.size()) != n) {
                throw ScheduleError(msg("scale ", k, " prunes ", target.size(), " heads, budget requires ", n));
            }
        } else {
            std::map<int, long long> per_source;
            for (const PruneItem& item : target) {
                ++per_source[item.source_scale];
            }
            for (int i = geo.s + 1; i <= k; ++i) {
                const long long got = per_source.count(i) ? per_source[i] : 0;
                if (got != n) {
                    throw ScheduleError(msg("scale ", k, " prunes ", got, " head-scales from source ", i,
                                            ", budget requires ", n));
                }
            }
        }
        previous = target;
    }
}

EarlyPruneOracle brute_force_min_early(int k, const PruneSet& previous, const PruneSet& target, long long cap,
                                       PruneMode mode, Accounting accounting, const Config& config,
                                       int max_candidates) {
    const Geometry geo(config);
    if (k < 1 || k > geo.K - 1) {
        throw IndexError(msg("scale index k=", k, " out of range [1, ", geo.K - 1, "]"));
    }
    check_nesting(target, previous, {});

    std::vector<PruneItem> candidates;
    std::set_difference(target.begin(), target.end(), previous.begin(), previous.end(),
                        std::back_inserter(candidates));
    const int n = static_cast<int>(candidates.size());
    if (n > max_candidates) {
        throw UnsupportedError(msg("brute-force oracle limited to ", max_candidates, " candidates, scale ", k,
                                   " has ", n, "; shrink the instance or raise the limit"));
    }

    const int fk = accounting == Accounting::paper ? k : k - 1;
    std::vector<long long> executed(static_cast<size_t>(geo.L) + 1, 0);
    std::vector<long long> future(static_cast<size_t>(geo.L) + 1, 0);
    for (int l = 1; l <= geo.L; ++l) {
        for (int h = 1; h <= geo.H; ++h) {
            executed[static_cast<size_t>(l)] += geo.head_tokens(k, l, h, target, mode);
            future[static_cast<size_t>(l)] += geo.head_tokens(fk, l, h, previous, mode);
        }
    }
    std::vector<long long> reduction(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        reduction[static_cast<size_t>(i)] = geo.early_reduction(candidates[static_cast<size_t>(i)], fk, mode);
    }

    std::vector<long long> freed_at_layer(static_cast<size_t>(geo.L) + 1, 0);
    auto feasible = [&](const std::vector<int>& chosen) {
        std::fill(freed_at_layer.begin(), freed_at_layer.end(), 0);
        for (int idx : chosen) {
            freed_at_layer[static_cast<size_t>(candidates[static_cast<size_t>(idx)].layer)] +=
                reduction[static_cast<size_t>(idx)];
        }
        long long executed_prefix = 0;
        long long future_suffix = std::accumulate(future.begin(), future.end(), 0ll) -
                                  std::accumulate(freed_at_layer.begin(), freed_at_layer.end(), 0ll);
        for (int l = 1; l <= geo.L; ++l) {
            future_suffix -= future[static_cast<size_t>(l)] - freed_at_layer[static_cast<size_t>(l)];
            executed_prefix += executed[static_cast<size_t>(l)];
            if (executed_prefix + future_suffix > cap) {
                return false;
            }
        }
        return true;
    };

    // Cross-check the per-layer bases against the reference accounting once.
    {
        long long executed_prefix = 0;
        long long future_suffix = std::accumulate(future.begin(), future.end(), 0ll);
        for (int l = 1; l <= geo.L; ++l) {
            future_suffix -= future[static_cast<size_t>(l)];
            executed_prefix += executed[static_cast<size_t>(l)];
            const long long reference = cache_size_after_layer(k, l, target, previous, {}, mode, accounting, config);
            if (executed_prefix + future_suffix != reference) {
                throw InternalError("brute-force oracle base totals disagree with cache_size_after_layer");
            }
        }
    }

    for (int m = 0; m <= n; ++m) {
        std::vector<int> chosen(static_cast<size_t>(m));
        std::iota(chosen.begin(), chosen.end(), 0);
        while (true) {
            if (feasible(chosen)) {
                EarlyPruneOracle result;
                result.min_size = m;
                for (int idx : chosen) {
                    result.witness.push_back(candidates[static_cast<size_t>(idx)]);
                }
                return result;
            }
            // next lexicographic m-combination of [0, n)
            int pos = m - 1;
            while (pos >= 0 && chosen[static_cast<size_t>(pos)] == n - m + pos) {
                --pos;
            }
            if (pos < 0) {
                break;
            }
            ++chosen[static_cast<size_t>(pos)];
            for (int j = pos + 1; j < m; ++j) {
                chosen[static_cast<size_t>(j)] = chosen[static_cast<size_t>(j - 1)] + 1;
            }
        }
    }
    throw ScheduleError(msg("no early-pruning subset satisfies the cap at scale ", k,
                            "; the budget plan is inconsistent"));
}

OptimalityReport verify_optimality(const SchedulePlan& plan, int max_candidates) {
    validate_plan(plan);
    OptimalityReport report;
    PruneSet previous;
    for (const ScaleActions& actions : plan.scales) {
        const PruneSet target(actions.target.begin(), actions.target.end());
        OptimalityScale entry;
        entry.k = actions.k;
        entry.early_size = static_cast<int>(actions.early.size());

        std::vector<PruneItem> candidates;
        std::set_difference(target.begin(), target.end(), previous.begin(), previous.end(),
                            std::back_inserter(candidates));
        if (static_cast<int>(candidates.size()) > max_candidates) {
            entry.skipped = true;
        } else {
            const EarlyPruneOracle oracle = brute_force_min_early(
                actions.k, previous, target, plan.budget.token_cap, plan.mode, plan.accounting, plan.config,
                max_candidates);
            entry.oracle_min = oracle.min_size;
            entry.optimal = entry.early_size == oracle.min_size;
            if (!entry.optimal && plan.mode == PruneMode::binary && plan.accounting == Accounting::paper) {
                report.hard_fail = true;
            }
        }
        report.scales.push_back(entry);
        previous = target;
    }
    return report;
}

}  // namespace heatkv
