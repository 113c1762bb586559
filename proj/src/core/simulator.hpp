// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "core/scheduler.hpp"

namespace heatkv {

/// Cache total recorded right after one layer's append-and-evict step.
/// `tokens` is the value the budget contract is checked against, computed
/// under the plan's accounting model; `physical_tokens` is the exact cache
/// occupancy at that instant (the tight model). The two coincide for tight
/// plans, and physical never exceeds accounted.
struct Checkpoint {
    int scale = 0;
    int layer = 0;  // 0 for the read-only final-scale checkpoint
    long long tokens = 0;
    long long physical_tokens = 0;
    bool ok = true;
};

struct ScaleTotal {
    int scale = 0;
    long long tokens = 0;    // physical cache at the end of the scale
    long long expected = 0;  // N_k*c_s + (T-N_k)*c_k
};

/// Token movement during one scale, for conservation checks.
struct ScaleFlow {
    int scale = 0;
    long long appended = 0;
    long long evicted = 0;
};

struct Violation {
    int scale = 0;
    int layer = 0;
    long long tokens = 0;
    long long cap = 0;
};

struct SimulationReport {
    long long token_cap = 0;
    long long batch_size = 1;
    std::vector<Checkpoint> checkpoints;  // (K-1)*L per-layer entries plus one for scale K
    std::vector<ScaleTotal> end_of_scale;
    std::vector<ScaleFlow> flows;
    std::vector<Violation> violations;
    long long peak_tokens = 0;  // max over checkpoint tokens
    long long peak_bytes = 0;
};

/// Per-image KV bytes for a token count: key and value planes of head_dim
/// elements each, times the batch multiplier.
long long to_bytes(long long tokens, const ModelShape& shape, long long batch = 1);

/// Replays the plan through the full generation trajectory, tracking every
/// head's retained scales layer by layer. Per scale: the early set is
/// evicted before any layer runs; each layer then appends t_k tokens to its
/// non-absent heads, applies its own eviction list, and records a
/// checkpoint. Scale K appends nothing and records one read-only
/// checkpoint. Cap overruns are collected as violations, not thrown;
/// structural mismatches throw ScheduleError.
SimulationReport simulate(const SchedulePlan& plan, long long batch = 1);

struct VerifySummary {
    bool pass = true;
    std::vector<std::string> failures;
    SimulationReport report;
};

/// simulate() plus the closed-form end-of-scale check: fails iff any
/// violation was recorded or an end-of-scale total deviates from
/// N_k*c_s + (T-N_k)*c_k.
VerifySummary verify_plan(const SchedulePlan& plan);

}  // namespace heatkv
