// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <map>
#include <vector>

#include "core/geometry.hpp"
#include "core/trace.hpp"

namespace heatkv {

struct HeadRef {
    int layer = 0;  // 1-based
    int head = 0;   // 1-based

    friend auto operator<=>(const HeadRef&, const HeadRef&) = default;
};

using HeadOrder = std::vector<HeadRef>;
using ScaleOrders = std::map<int, HeadOrder>;  // source scale i -> permutation of all T heads

/// Calibrated head importance: CAS per head, S-CAS per head-scale, and the
/// pruning orderings they induce (ascending score = least dependent first,
/// ties broken by ascending (layer, head)).
struct ImportanceTable {
    int layers = 0;
    int heads = 0;
    int num_scales = 0;
    int sink_count = 0;

    std::vector<double> cas;    // L*H row-major
    std::vector<double> s_cas;  // L*H*K row-major; NaN outside scales [s+1, K-1]

    HeadOrder binary_order;
    ScaleOrders scale_orders;

    double cas_at(int layer, int head) const;
    /// Defined for k in [s+1, K-1]; IndexError elsewhere.
    double s_cas_at(int layer, int head, int k) const;
};

/// CAS_{l,h}: mean attention mass from final-scale queries onto the cached
/// non-sink scales. The normalizer is K-s even though the sum has K-1-s
/// terms; a positive constant factor cannot change the induced argsort, so
/// the published form is implemented verbatim.
std::vector<double> compute_cas(const BetaTensor& beta, const ScaleSchedule& schedule);

/// S-CAS_{l,h,k}: mean attention mass from all future scales back onto scale
/// k, defined for k in [s+1, K-1]; other slots are NaN.
std::vector<double> compute_s_cas(const BetaTensor& beta, const ScaleSchedule& schedule);

/// Fills binary_order and scale_orders from the cas / s_cas fields.
void build_orders(ImportanceTable& table);

/// Scores plus orders in one step from an averaged beta tensor.
ImportanceTable build_importance(const BetaTensor& beta, const Config& config);

/// Rank-stability diagnostic across independent calibration runs: for each
/// source scale, every head's rank positions are centered by the
/// head-specific mean and the population standard deviation of the residuals
/// is averaged over heads. Zero iff all runs agree for every head.
/// ArgumentError with fewer than 2 runs or mismatched shapes.
std::map<int, double> rank_dispersion(const std::vector<ScaleOrders>& runs);

}  // namespace heatkv
