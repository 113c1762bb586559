// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "core/geometry.hpp"

namespace heatkv {

/// A fractional budget resolved into the hard token cap B and the per-scale
/// pruning targets N_1..N_{K-1}. The final scale is excluded from the cap
/// because its tokens are never cached.
struct BudgetPlan {
    double fraction = 1.0;
    long long token_cap = 0;
    std::vector<long long> prune_counts;  // index k-1 holds N_k, k in [1, K-1]

    long long prune_count(int k) const;  // IndexError outside [1, K-1]
};

/// B = floor(b * T * c_{K-1}). ArgumentError unless 0 < b <= 1.
long long max_tokens(double fraction, const ModelShape& shape, const ScaleSchedule& schedule);

/// N_k = clamp(ceil(T * (c_k - b*c_{K-1}) / (c_k - c_s)), 0, T) for k > s and
/// 0 otherwise: the smallest head count whose end-of-scale cache
/// N_k*c_s + (T-N_k)*c_k stays within the budget. The closed form is snapped
/// to the exact integer boundary so it agrees with a linear search.
/// Requires a feasible budget (see validate_budget); IndexError outside
/// [1, K-1].
long long heads_to_prune(double fraction, const ModelShape& shape, const ScaleSchedule& schedule, int k);

/// Smallest feasible fraction c_s / c_{K-1}: the all-pruned floor where
/// every head keeps only the sink scales.
double min_feasible_fraction(const ScaleSchedule& schedule);

/// Throws BudgetError (reporting the minimum feasible fraction) when
/// b*c_{K-1} < c_s. Feasibility is exactly the condition under which N_k is
/// non-decreasing in k.
void validate_budget(double fraction, const ModelShape& shape, const ScaleSchedule& schedule);

/// Validates, computes B and all N_k, and applies a defensive monotone pass
/// (a no-op for feasible budgets).
BudgetPlan plan_budget(double fraction, const ModelShape& shape, const ScaleSchedule& schedule);

}  // namespace heatkv
