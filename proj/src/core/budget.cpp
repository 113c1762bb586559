// SPDX-License-Identifier: Apache-2.0

#include "core/budget.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace heatkv {

namespace {

// Decimal fractions such as 0.04 are not dyadic; their product with an
// integral full-cache size can land one ulp under the mathematically exact
// integer. This slack keeps floor/ceil boundaries on the intended side and
// is far below the spacing of attainable cache sizes.
constexpr double kRealSlack = 1e-9;

void check_fraction(double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ArgumentError(msg("budget fraction must lie in (0, 1], got ", fraction));
    }
}

double budget_tokens_real(double fraction, const ModelShape& shape, const ScaleSchedule& schedule) {
    const long long full = shape.total_heads() * schedule.cumulative_tokens(schedule.num_scales() - 1);
    return fraction * static_cast<double>(full);
}

bool cache_fits(long long pruned, long long total_heads, long long c_s, long long c_k, double budget_real) {
    const long long tokens = pruned * c_s + (total_heads - pruned) * c_k;
    return static_cast<double>(tokens) <= budget_real + kRealSlack;
}

}  // namespace

long long BudgetPlan::prune_count(int k) const {
    if (k < 1 || k > static_cast<int>(prune_counts.size())) {
        throw IndexError(msg("prune count queried at k=", k, ", plan covers [1, ", prune_counts.size(), "]"));
    }
    return prune_counts[static_cast<size_t>(k - 1)];
}

long long max_tokens(double fraction, const ModelShape& shape, const ScaleSchedule& schedule) {
    check_fraction(fraction);
    return static_cast<long long>(std::floor(budget_tokens_real(fraction, shape, schedule) + kRealSlack));
}

double min_feasible_fraction(const ScaleSchedule& schedule) {
    const long long c_s = schedule.cumulative_tokens(schedule.sink_count);
    const long long c_last = schedule.cumulative_tokens(schedule.num_scales() - 1);
    return static_cast<double>(c_s) / static_cast<double>(c_last);
}

void validate_budget(double fraction, const ModelShape& shape, const ScaleSchedule& schedule) {
    check_fraction(fraction);
    const long long T = shape.total_heads();
    const long long c_s = schedule.cumulative_tokens(schedule.sink_count);
    const double budget_real = budget_tokens_real(fraction, shape, schedule);
    // The all-pruned floor: every head keeps only the sinks.
    if (!cache_fits(T, T, c_s, c_s, budget_real)) {
        throw BudgetError(msg("budget fraction ", fraction, " is infeasible: even the all-pruned cache needs ",
                              T * c_s, " tokens; minimum feasible fraction is c_s/c_{K-1} = ",
                              min_feasible_fraction(schedule)));
    }
}

long long heads_to_prune(double fraction, const ModelShape& shape, const ScaleSchedule& schedule, int k) {
    validate_budget(fraction, shape, schedule);
    const int K = schedule.num_scales();
    if (k < 1 || k > K - 1) {
        throw IndexError(msg("prune count queried at k=", k, ", valid range is [1, ", K - 1, "]"));
    }
    const int s = schedule.sink_count;
    if (k <= s) {
        return 0;
    }
    const long long T = shape.total_heads();
    const long long c_s = schedule.cumulative_tokens(s);
    const long long c_k = schedule.cumulative_tokens(k);
    const long long c_last = schedule.cumulative_tokens(K - 1);
    const double budget_real = budget_tokens_real(fraction, shape, schedule);

    const double numerator = static_cast<double>(T) * (static_cast<double>(c_k) -
                                                       fraction * static_cast<double>(c_last));
    double raw = std::ceil(numerator / static_cast<double>(c_k - c_s));
    long long n = static_cast<long long>(std::clamp(raw, 0.0, static_cast<double>(T)));

    // Snap to the exact integer boundary of the minimality predicate; at most
    // one step in either direction when the quotient grazes an integer.
    while (n > 0 && cache_fits(n - 1, T, c_s, c_k, budget_real)) {
        --n;
    }
    while (n < T && !cache_fits(n, T, c_s, c_k, budget_real)) {
        ++n;
    }
    return n;
}

BudgetPlan plan_budget(double fraction, const ModelShape& shape, const ScaleSchedule& schedule) {
    validate_budget(fraction, shape, schedule);
    BudgetPlan plan;
    plan.fraction = fraction;
    plan.token_cap = max_tokens(fraction, shape, schedule);
    const int K = schedule.num_scales();
    plan.prune_counts.resize(static_cast<size_t>(K - 1));
    for (int k = 1; k <= K - 1; ++k) {
        plan.prune_counts[static_cast<size_t>(k - 1)] = heads_to_prune(fraction, shape, schedule, k);
    }
    // No-op for feasible budgets; guarantees the nesting precondition of the
    // scheduler under any future accounting variant.
    for (size_t i = 1; i < plan.prune_counts.size(); ++i) {
        plan.prune_counts[i] = std::max(plan.prune_counts[i], plan.prune_counts[i - 1]);
    }
    return plan;
}

}  // namespace heatkv
