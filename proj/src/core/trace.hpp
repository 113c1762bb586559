// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "core/geometry.hpp"

namespace heatkv {

/// Synthetic attention patterns modeled after the head archetypes seen in
/// next-scale generation traces.
enum class Archetype {
    early_scale,    // >= 0.9 of each row's mass on scale-1 columns
    local_recent,   // cross-scale mass decaying away from the newest scale
    local_early,    // cross-scale mass decaying away from scale 1
    skip_previous,  // uniform over cached columns except the directly previous scale
    strict_self,    // >= 0.99 of each row's mass on the row's own scale
    uniform,        // exactly 1/c_k per column
    random,         // each row drawn from a symmetric Dirichlet (alpha = 1)
};

Archetype archetype_from_name(std::string_view name);  // ArgumentError on unknown names
std::string_view archetype_name(Archetype pattern);
const std::vector<std::string_view>& archetype_names();

/// One calibration datum: for every (layer, head, scale k) the row-stochastic
/// attention matrix of shape t_k x c_k, row-major. Stored in f32, the trace
/// interchange precision; all aggregation happens in double.
struct AttentionSample {
    Config config;
    // index ((l-1)*H + (h-1))*K + (k-1) -> t_k * c_k floats
    std::vector<std::vector<float>> alpha;

    const std::vector<float>& matrix(int layer, int head, int k) const;
    std::vector<float>& matrix(int layer, int head, int k);
};

/// Scale-to-scale attention mass per (layer, head): a K x K matrix with
/// support on k2 <= k1 whose rows are probability vectors.
struct BetaTensor {
    int layers = 0;
    int heads = 0;
    int num_scales = 0;
    std::vector<double> values;  // L*H*K*K row-major

    static BetaTensor zeros(int layers, int heads, int num_scales);

    double at(int layer, int head, int k1, int k2) const;
    double& at(int layer, int head, int k1, int k2);
    bool same_shape(const BetaTensor& other) const;
};

/// Collapses a raw sample into per-scale attention mass. Each output row is
/// normalized by its measured mass so the row-stochastic invariant holds to
/// double precision even when the f32 input rows carry quantization drift.
/// Throws ValidationError on shape mismatch and DataError (naming layer,
/// head, scale, row) when an input row sum strays beyond 1e-5.
BetaTensor aggregate_beta(const AttentionSample& sample);

/// Element-wise arithmetic mean over the calibration set. Entries that agree
/// bit-for-bit across all samples pass through unchanged, so averaging n
/// copies of a tensor reproduces it exactly. ArgumentError on an empty list
/// or mismatched shapes.
BetaTensor mean_beta(const std::vector<BetaTensor>& samples);

/// Enforces the BetaTensor invariants: zero above the diagonal and row sums
/// within row_sum_tol of 1. Throws DataError naming the offending slot.
void check_beta(const BetaTensor& beta, double row_sum_tol);

/// Deterministic synthetic trace for the given archetype; identical seeds
/// produce bit-identical samples. The random archetype draws each row as
/// normalized Exp(1) variates (symmetric Dirichlet, alpha = 1) from a
/// per-(layer, head, scale) counter-based stream.
AttentionSample synth_trace(const Config& config, Archetype pattern, std::uint64_t seed);

/// Closed-form beta for the deterministic archetypes (equals
/// aggregate_beta(synth_trace(...)) up to f32 storage error). For random,
/// rows are drawn directly as Dirichlet vectors over the k1 lower-triangular
/// cells, which is a different law than aggregating a random raw trace.
BetaTensor synth_beta(const Config& config, Archetype pattern, std::uint64_t seed);

}  // namespace heatkv
