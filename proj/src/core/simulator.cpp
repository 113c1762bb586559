// SPDX-License-Identifier: Apache-2.0

#include "core/simulator.hpp"

#include <algorithm>

#include "core/error.hpp"

namespace heatkv {

namespace {

/// Physical cache contents of one head: the set of scales it retains.
class HeadCache {
public:
    void init(int num_scales) { retained_.assign(static_cast<size_t>(num_scales) + 1, false); }

    bool has(int scale) const { return retained_[static_cast<size_t>(scale)]; }

    void add(int scale) { retained_[static_cast<size_t>(scale)] = true; }

    void drop(int scale) { retained_[static_cast<size_t>(scale)] = false; }

    long long tokens(const ScaleSchedule& schedule) const {
        long long total = 0;
        for (int k = 1; k <= schedule.num_scales(); ++k) {
            if (retained_[static_cast<size_t>(k)]) {
                total += schedule.token_count(k);
            }
        }
        return total;
    }

private:
    std::vector<bool> retained_;
};

class CacheState {
public:
    CacheState(const Config& config) : config_(config) {
        const size_t heads = static_cast<size_t>(config.shape.total_heads());
        caches_.resize(heads);
        for (auto& c : caches_) {
            c.init(config.schedule.num_scales());
        }
        head_tokens_.assign(heads, 0);
    }

    long long total() const { return total_; }

    /// Appends scale k to head (layer, head); returns the token delta.
    long long append(int layer, int head, int k) {
        HeadCache& cache = at(layer, head);
        if (cache.has(k)) {
            throw ScheduleError(msg("scale ", k, " appended twice to head (", layer, ",", head, ")"));
        }
        cache.add(k);
        const long long delta = config_.schedule.token_count(k);
        head_tokens_[slot(layer, head)] += delta;
        total_ += delta;
        return delta;
    }

    /// Drops one retained scale; returns the token delta.
    long long evict_scale(int layer, int head, int scale) {
        HeadCache& cache = at(layer, head);
        if (!cache.has(scale)) {
            throw ScheduleError(msg("eviction of absent scale ", scale, " from head (", layer, ",", head, ")"));
        }
        cache.drop(scale);
        const long long delta = config_.schedule.token_count(scale);
        head_tokens_[slot(layer, head)] -= delta;
        total_ -= delta;
        return delta;
    }

    /// Drops every non-sink scale (binary-mode eviction); returns the freed
    /// token count.
    long long evict_to_sinks(int layer, int head) {
        HeadCache& cache = at(layer, head);
        long long freed = 0;
        for (int k = config_.schedule.sink_count + 1; k <= config_.schedule.num_scales(); ++k) {
            if (cache.has(k)) {
                cache.drop(k);
                freed += config_.schedule.token_count(k);
            }
        }
        head_tokens_[slot(layer, head)] -= freed;
        total_ -= freed;
        return freed;
    }

    /// Recomputes every head's count from its retained-scale set; the
    /// incremental counters must agree.
    void cross_check() const {
        long long recomputed_total = 0;
        for (int l = 1; l <= config_.shape.layers; ++l) {
            for (int h = 1; h <= config_.shape.heads_per_layer; ++h) {
                const long long recomputed = caches_[slot(l, h)].tokens(config_.schedule);
                if (recomputed != head_tokens_[slot(l, h)]) {
                    throw InternalError(msg("cache counter drift at head (", l, ",", h, "): tracked ",
                                            head_tokens_[slot(l, h)], ", retained scales hold ", recomputed));
                }
                recomputed_total += recomputed;
            }
        }
        if (recomputed_total != total_) {
            throw InternalError("cache total drifted from per-head counts");
        }
    }

private:
    size_t slot(int layer, int head) const {
        return static_cast<size_t>(layer - 1) * static_cast<size_t>(config_.shape.heads_per_layer) +
               static_cast<size_t>(head - 1);
    }

    HeadCache& at(int layer, int head) { return caches_[slot(layer, head)]; }

    const Config& config_;
    std::vector<HeadCache> caches_;
    std::vector<long long> head_tokens_;
    long long total_ = 0;
};

}  // namespace

long long to_bytes(long long tokens, const ModelShape& shape, long long batch) {
    return tokens * 2 * static_cast<long long>(shape.head_dim) * static_cast<long long>(shape.bytes_per_element) *
           batch;
}

SimulationReport simulate(const SchedulePlan& plan, long long batch) {
    if (batch < 1) {
        throw ArgumentError(msg("batch multiplier must be positive, got ", batch));
    }
    validate_plan(plan);
    const Config& config = plan.config;
    const int K = config.schedule.num_scales();
    const int L = config.shape.layers;
    const int H = config.shape.heads_per_layer;
    const long long T = config.shape.total_heads();
    const long long c_s = config.schedule.cumulative_tokens(config.schedule.sink_count);
    const long long cap = plan.budget.token_cap;

    SimulationReport report;
    report.token_cap = cap;
    report.batch_size = batch;

    CacheState state(config);
    PruneSet previous;
    for (int k = 1; k <= K - 1; ++k) {
        const ScaleActions& actions = plan.at_scale(k);
        const PruneSet target(actions.target.begin(), actions.target.end());
        const PruneSet early(actions.early.begin(), actions.early.end());
        const PruneSet absent(actions.absent.begin(), actions.absent.end());

        ScaleFlow flow;
        flow.scale = k;

        // Early evictions land before any layer of this scale executes. An
        // early item whose source scale is k itself has nothing cached yet;
        // it simply never appends (the absent-set check below).
        for (const PruneItem& item : actions.early) {
            if (plan.mode == PruneMode::binary) {
                flow.evicted += state.evict_to_sinks(item.layer, item.head);
            } else if (item.source_scale < k) {
                flow.evicted += state.evict_scale(item.layer, item.head, item.source_scale);
            }
        }

        for (int l = 1; l <= L; ++l) {
            for (int h = 1; h <= H; ++h) {
                const PruneItem own_scale{plan.mode == PruneMode::binary ? 0 : k, l, h};
                const bool skip = plan.mode == PruneMode::binary ? absent.count({0, l, h}) > 0
                                                                 : absent.count(own_scale) > 0;
                if (!skip) {
                    flow.appended += state.append(l, h, k);
                }
            }
            if (auto it = actions.evict_after_layer.find(l); it != actions.evict_after_layer.end()) {
                for (const PruneItem& item : it->second) {
                    flow.evicted += plan.mode == PruneMode::binary
                                        ? state.evict_to_sinks(item.layer, item.head)
                                        : state.evict_scale(item.layer, item.head, item.source_scale);
                }
            }

            Checkpoint cp;
            cp.scale = k;
            cp.layer = l;
            cp.physical_tokens = state.total();
            cp.tokens = cache_size_after_layer(k, l, target, previous, early, plan.mode, plan.accounting, config);
            const long long tight = plan.accounting == Accounting::tight
                                        ? cp.tokens
                                        : cache_size_after_layer(k, l, target, previous, early, plan.mode,
                                                                 Accounting::tight, config);
            if (tight != cp.physical_tokens) {
                throw InternalError(msg("tight accounting disagrees with the replayed cache at scale ", k,
                                        " layer ", l, ": ", tight, " vs ", cp.physical_tokens));
            }
            if (cp.tokens < cp.physical_tokens) {
                throw InternalError(msg("accounted cache below physical occupancy at scale ", k, " layer ", l));
            }
            cp.ok = cp.tokens <= cap;
            if (!cp.ok) {
                report.violations.push_back({k, l, cp.tokens, cap});
            }
            report.checkpoints.push_back(cp);
        }

        state.cross_check();
        const long long n = plan.budget.prune_count(k);
        report.end_of_scale.push_back(
            {k, state.total(), n * c_s + (T - n) * config.schedule.cumulative_tokens(k)});
        report.flows.push_back(flow);
        previous = target;
    }

    // Scale K is read-only: no appends, one checkpoint of the untouched cache.
    {
        Checkpoint cp;
        cp.scale = K;
        cp.layer = 0;
        cp.physical_tokens = state.total();
        cp.tokens = state.total();
        cp.ok = cp.tokens <= cap;
        if (!cp.ok) {
            report.violations.push_back({K, 0, cp.tokens, cap});
        }
        report.checkpoints.push_back(cp);
    }

    for (const Checkpoint& cp : report.checkpoints) {
        report.peak_tokens = std::max(report.peak_tokens, cp.tokens);
    }
    report.peak_bytes = to_bytes(report.peak_tokens, config.shape, batch);
    return report;
}

VerifySummary verify_plan(const SchedulePlan& plan) {
    VerifySummary summary;
    summary.report = simulate(plan);
    for (const Violation& v : summary.report.violations) {
        summary.pass = false;
        summary.failures.push_back(
            msg("budget violation at scale ", v.scale, " layer ", v.layer, ": ", v.tokens, " > ", v.cap));
    }
    for (const ScaleTotal& total : summary.report.end_of_scale) {
        if (total.tokens != total.expected) {
            summary.pass = false;
            summary.failures.push_back(msg("end of scale ", total.scale, " holds ", total.tokens,
                                           " tokens, closed form expects ", total.expected));
        }
    }
    return summary;
}

}  // namespace heatkv
