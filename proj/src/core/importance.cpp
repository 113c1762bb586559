// SPDX-License-Identifier: Apache-2.0

#include "core/importance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"

namespace heatkv {

namespace {

size_t head_index(const ImportanceTable& table, int layer, int head) {
    if (layer < 1 || layer > table.layers || head < 1 || head > table.heads) {
        throw IndexError(msg("head (", layer, ",", head, ") out of range"));
    }
    return static_cast<size_t>(layer - 1) * static_cast<size_t>(table.heads) + static_cast<size_t>(head - 1);
}

/// Ascending score, ties by ascending (layer, head).
HeadOrder sort_heads(const std::vector<double>& score, int layers, int heads) {
    HeadOrder order;
    order.reserve(static_cast<size_t>(layers) * static_cast<size_t>(heads));
    for (int l = 1; l <= layers; ++l) {
        for (int h = 1; h <= heads; ++h) {
            order.push_back({l, h});
        }
    }
    std::sort(order.begin(), order.end(), [&](const HeadRef& a, const HeadRef& b) {
        const double sa = score[static_cast<size_t>(a.layer - 1) * static_cast<size_t>(heads) +
                                static_cast<size_t>(a.head - 1)];
        const double sb = score[static_cast<size_t>(b.layer - 1) * static_cast<size_t>(heads) +
                                static_cast<size_t>(b.head - 1)];
        if (sa != sb) return sa < sb;
        return a < b;
    });
    return order;
}

}  // namespace

double ImportanceTable::cas_at(int layer, int head) const {
    return cas[head_index(*this, layer, head)];
}

double ImportanceTable::s_cas_at(int layer, int head, int k) const {
    if (k < sink_count + 1 || k > num_scales - 1) {
        throw IndexError(msg("S-CAS is defined for scales [", sink_count + 1, ", ", num_scales - 1, "], queried k=",
                             k));
    }
    return s_cas[head_index(*this, layer, head) * static_cast<size_t>(num_scales) + static_cast<size_t>(k - 1)];
}

std::vector<double> compute_cas(const BetaTensor& beta, const ScaleSchedule& schedule) {
    const int K = schedule.num_scales();
    const int s = schedule.sink_count;
    if (beta.num_scales != K) {
        throw ValidationError(msg("beta covers ", beta.num_scales, " scales, schedule has ", K));
    }
    if (K - s < 2) {
        throw ValidationError(msg("CAS has no summand: K-s must be >= 2, got K=", K, " s=", s));
    }
    std::vector<double> cas(static_cast<size_t>(beta.layers) * static_cast<size_t>(beta.heads));
    for (int l = 1; l <= beta.layers; ++l) {
        for (int h = 1; h <= beta.heads; ++h) {
            double sum = 0.0;
            for (int tau = s + 1; tau <= K - 1; ++tau) {
                sum += beta.at(l, h, K, tau);
            }
            cas[static_cast<size_t>(l - 1) * static_cast<size_t>(beta.heads) + static_cast<size_t>(h - 1)] =
                sum / static_cast<double>(K - s);
        }
    }
    return cas;
}

std::vector<double> compute_s_cas(const BetaTensor& beta, const ScaleSchedule& schedule) {
    const int K = schedule.num_scales();
    const int s = schedule.sink_count;
    if (beta.num_scales != K) {
        throw ValidationError(msg("beta covers ", beta.num_scales, " scales, schedule has ", K));
    }
    std::vector<double> out(
        static_cast<size_t>(beta.layers) * static_cast<size_t>(beta.heads) * static_cast<size_t>(K),
        std::numeric_limits<double>::quiet_NaN());
    for (int l = 1; l <= beta.layers; ++l) {
        for (int h = 1; h <= beta.heads; ++h) {
            const size_t base = (static_cast<size_t>(l - 1) * static_cast<size_t>(beta.heads) +
                                 static_cast<size_t>(h - 1)) *
                                static_cast<size_t>(K);
            for (int k = s + 1; k <= K - 1; ++k) {
                double sum = 0.0;
                for (int tau = k + 1; tau <= K; ++tau) {
                    sum += beta.at(l, h, tau, k);
                }
                out[base + static_cast<size_t>(k - 1)] = sum / static_cast<double>(K - k);
            }
        }
    }
    return out;
}

void build_orders(ImportanceTable& table) {
    table.binary_order = sort_heads(table.cas, table.layers, table.heads);
    table.scale_orders.clear();
    std::vector<double> per_scale(static_cast<size_t>(table.layers) * static_cast<size_t>(table.heads));
    for (int i = table.sink_count + 1; i <= table.num_scales - 1; ++i) {
        for (int l = 1; l <= table.layers; ++l) {
            for (int h = 1; h <= table.heads; ++h) {
                const size_t hi = static_cast<size_t>(l - 1) * static_cast<size_t>(table.heads) +
                                  static_cast<size_t>(h - 1);
                per_scale[hi] = table.s_cas[hi * static_cast<size_t>(table.num_scales) + static_cast<size_t>(i - 1)];
            }
        }
        table.scale_orders[i] = sort_heads(per_scale, table.layers, table.heads);
    }
}

ImportanceTable build_importance(const BetaTensor& beta, const Config& config) {
    validate(config);
    if (beta.layers != config.shape.layers || beta.heads != config.shape.heads_per_layer) {
        throw ValidationError(msg("beta shape ", beta.layers, "x", beta.heads, " does not match model shape ",
                                  config.shape.layers, "x", config.shape.heads_per_layer));
    }
    ImportanceTable table;
    table.layers = beta.layers;
    table.heads = beta.heads;
    table.num_scales = config.schedule.num_scales();
    table.sink_count = config.schedule.sink_count;
    table.cas = compute_cas(beta, config.schedule);
    table.s_cas = compute_s_cas(beta, config.schedule);
    build_orders(table);
    return table;
}

std::map<int, double> rank_dispersion(const std::vector<ScaleOrders>& runs) {
    if (runs.size() < 2) {
        throw ArgumentError(msg("rank dispersion needs at least 2 calibration runs, got ", runs.size()));
    }
    const ScaleOrders& first = runs.front();
    for (const auto& run : runs) {
        if (run.size() != first.size()) {
            throw ArgumentError("rank dispersion: runs disagree on the set of source scales");
        }
    }

    const double num_runs = static_cast<double>(runs.size());
    std::map<int, double> dispersion;
    for (const auto& [scale, reference_order] : first) {
        const size_t total = reference_order.size();
        // rank position of every head in every run
        std::map<HeadRef, std::vector<double>> ranks;
        for (const auto& run : runs) {
            auto it = run.find(scale);
            if (it == run.end() || it->second.size() != total) {
                throw ArgumentError(msg("rank dispersion: runs disagree at source scale ", scale));
            }
            for (size_t pos = 0; pos < it->second.size(); ++pos) {
                ranks[it->second[pos]].push_back(static_cast<double>(pos));
            }
        }
        if (ranks.size() != total) {
            throw ArgumentError(msg("rank dispersion: orders are not over the same heads at scale ", scale));
        }
        double acc = 0.0;
        for (const auto& [head, positions] : ranks) {
            if (positions.size() != runs.size()) {
                throw ArgumentError(msg("rank dispersion: head (", head.layer, ",", head.head,
                                        ") missing from some run at scale ", scale));
            }
            double mean = 0.0;
            for (double p : positions) mean += p;
            mean /= num_runs;
            double var = 0.0;
            for (double p : positions) var += (p - mean) * (p - mean);
            acc += std::sqrt(var / num_runs);
        }
        dispersion[scale] = acc / static_cast<double>(total);
    }
    return dispersion;
}

}  // namespace heatkv
