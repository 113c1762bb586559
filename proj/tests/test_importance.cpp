// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "core/error.hpp"
#include "core/importance.hpp"
#include "test_support.hpp"

using namespace heatkv;
using testing::toy_config;

namespace {

/// Independent evaluation of the two scores straight from the definitions.
double cas_reference(const BetaTensor& beta, const ScaleSchedule& schedule, int l, int h) {
    const int K = schedule.num_scales();
    const int s = schedule.sink_count;
    double sum = 0.0;
    for (int tau = s + 1; tau <= K - 1; ++tau) {
        sum += beta.at(l, h, K, tau);
    }
    return sum / static_cast<double>(K - s);
}

double s_cas_reference(const BetaTensor& beta, const ScaleSchedule& schedule, int l, int h, int k) {
    const int K = schedule.num_scales();
    double sum = 0.0;
    for (int tau = k + 1; tau <= K; ++tau) {
        sum += beta.at(l, h, tau, k);
    }
    return sum / static_cast<double>(K - k);
}

ScaleOrders single_scale_orders(std::vector<HeadRef> order) {
    ScaleOrders orders;
    orders[2] = std::move(order);
    return orders;
}

}  // namespace

TEST_CASE("CAS on the uniform closed form: t=[1,2,4,8], s=1") {
    const Config config = toy_config({1, 2, 4, 8}, 1, 1, 1);
    const BetaTensor beta = synth_beta(config, Archetype::uniform, 0);
    const auto cas = compute_cas(beta, config.schedule);
    // (1/3) * (2/15 + 4/15)
    CHECK(cas[0] == doctest::Approx(2.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("CAS of strict-self heads is zero up to the leakage") {
    const Config config = toy_config({1, 2, 4, 8}, 1, 2, 2);
    const BetaTensor beta = aggregate_beta(synth_trace(config, Archetype::strict_self, 1));
    for (const double v : compute_cas(beta, config.schedule)) {
        CHECK(v >= 0.0);
        CHECK(v <= 0.01);
    }
}

TEST_CASE("CAS ignores sink scales and the final scale itself") {
    // All final-scale mass on the sink and the final scale.
    const Config config = toy_config({1, 2, 4, 8}, 1, 1, 1);
    BetaTensor beta = BetaTensor::zeros(1, 1, 4);
    beta.at(1, 1, 1, 1) = 1.0;
    beta.at(1, 1, 2, 2) = 1.0;
    beta.at(1, 1, 3, 3) = 1.0;
    beta.at(1, 1, 4, 1) = 0.4;
    beta.at(1, 1, 4, 4) = 0.6;
    const auto cas = compute_cas(beta, config.schedule);
    CHECK(cas[0] == 0.0);
}

TEST_CASE("S-CAS on the uniform closed form") {
    const Config config = toy_config({1, 2, 4, 8}, 1, 1, 1);
    const BetaTensor beta = synth_beta(config, Archetype::uniform, 0);
    const auto s_cas = compute_s_cas(beta, config.schedule);
    ImportanceTable table = build_importance(beta, config);

    CHECK(table.s_cas_at(1, 1, 3) == doctest::Approx(4.0 / 15.0).epsilon(1e-12));
    CHECK(table.s_cas_at(1, 1, 2) == doctest::Approx(0.5 * (2.0 / 7.0 + 2.0 / 15.0)).epsilon(1e-12));
    CHECK(s_cas[1] == table.s_cas_at(1, 1, 2));

    // slots outside [s+1, K-1] are unset
    CHECK(std::isnan(s_cas[0]));
    CHECK(std::isnan(s_cas[3]));
    CHECK_THROWS_AS(table.s_cas_at(1, 1, 1), IndexError);
    CHECK_THROWS_AS(table.s_cas_at(1, 1, 4), IndexError);
}

TEST_CASE("S-CAS of a head whose future mass lands entirely on scale 3") {
    const Config config = toy_config({1, 2, 4, 8}, 1, 1, 1);
    BetaTensor beta = BetaTensor::zeros(1, 1, 4);
    beta.at(1, 1, 1, 1) = 1.0;
    beta.at(1, 1, 2, 2) = 1.0;
    beta.at(1, 1, 3, 3) = 1.0;
    beta.at(1, 1, 4, 3) = 1.0;
    const ImportanceTable table = build_importance(beta, config);
    CHECK(table.s_cas_at(1, 1, 3) == doctest::Approx(1.0));
    CHECK(table.s_cas_at(1, 1, 2) == doctest::Approx(0.0));
}

TEST_CASE("scores match the references over random betas") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        const Config config = testing::random_config(rng);
        const BetaTensor beta = synth_beta(config, Archetype::random, rng());
        const ImportanceTable table = build_importance(beta, config);
        for (int l = 1; l <= config.shape.layers; ++l) {
            for (int h = 1; h <= config.shape.heads_per_layer; ++h) {
                CHECK(table.cas_at(l, h) ==
                      doctest::Approx(cas_reference(beta, config.schedule, l, h)).epsilon(1e-12));
                CHECK(table.cas_at(l, h) >= 0.0);
                CHECK(table.cas_at(l, h) <= 1.0);
                for (int k = config.schedule.sink_count + 1; k <= config.schedule.num_scales() - 1; ++k) {
                    CHECK(table.s_cas_at(l, h, k) ==
                          doctest::Approx(s_cas_reference(beta, config.schedule, l, h, k)).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("CAS requires a prunable scale") {
    const Config config = toy_config({1, 2, 4}, 1, 1, 1);
    BetaTensor beta = synth_beta(config, Archetype::uniform, 0);
    ScaleSchedule bad = config.schedule;
    bad.sink_count = 2;  // K - s < 2
    CHECK_THROWS_AS(compute_cas(beta, bad), ValidationError);
}

TEST_CASE("order construction") {
    ImportanceTable table;
    table.layers = 2;
    table.heads = 2;
    table.num_scales = 3;
    table.sink_count = 1;
    table.s_cas.assign(2 * 2 * 3, std::numeric_limits<double>::quiet_NaN());

    SUBCASE("equal scores fall back to (layer, head) enumeration") {
        table.cas = {0.5, 0.5, 0.5, 0.5};
        for (size_t i = 0; i < 4; ++i) table.s_cas[i * 3 + 1] = 0.5;
        build_orders(table);
        const HeadOrder expected = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
        CHECK(table.binary_order == expected);
        CHECK(table.scale_orders.at(2) == expected);
    }
    SUBCASE("ascending CAS puts the least dependent head first") {
        table.cas = {0.9, 0.1, 0.5, 0.2};
        for (size_t i = 0; i < 4; ++i) table.s_cas[i * 3 + 1] = 0.5;
        build_orders(table);
        const HeadOrder expected = {{1, 2}, {2, 2}, {2, 1}, {1, 1}};
        CHECK(table.binary_order == expected);
    }
}

TEST_CASE("orders are equivariant under score permutation and invariant under monotone relabeling") {
    std::mt19937_64 rng(31);
    const Config config = toy_config({1, 2, 4, 3}, 1, 3, 3);
    const ImportanceTable table = testing::random_table(rng, config);

    SUBCASE("monotone relabeling") {
        ImportanceTable relabeled = table;
        for (auto& v : relabeled.cas) v = 0.25 + std::atan(3.0 * v);  // strictly increasing
        for (auto& v : relabeled.s_cas) {
            if (!std::isnan(v)) v = 0.25 + std::atan(3.0 * v);
        }
        build_orders(relabeled);
        CHECK(relabeled.binary_order == table.binary_order);
        CHECK(relabeled.scale_orders == table.scale_orders);
    }

    SUBCASE("swapping two heads' scores swaps their positions") {
        ImportanceTable swapped = table;
        std::swap(swapped.cas[0], swapped.cas[4]);  // heads (1,1) and (2,2)
        build_orders(swapped);
        HeadOrder expected = table.binary_order;
        for (auto& ref : expected) {
            if (ref == HeadRef{1, 1}) {
                ref = {2, 2};
            } else if (ref == HeadRef{2, 2}) {
                ref = {1, 1};
            }
        }
        CHECK(swapped.binary_order == expected);
    }

    SUBCASE("every order is a permutation") {
        for (const auto& [scale, order] : table.scale_orders) {
            std::set<HeadRef> unique(order.begin(), order.end());
            CHECK(unique.size() == order.size());
            CHECK(order.size() == 9);
        }
    }
}

TEST_CASE("rank dispersion is zero for identical runs") {
    std::mt19937_64 rng(8);
    const Config config = toy_config({1, 2, 4, 8, 7}, 2, 2, 3);
    const ImportanceTable table = testing::random_table(rng, config);
    const auto dispersion = rank_dispersion({table.scale_orders, table.scale_orders, table.scale_orders});
    for (const auto& [scale, value] : dispersion) {
        CHECK(value == 0.0);
    }
}

TEST_CASE("rank dispersion of a two-run adjacent swap is 1/T") {
    // Heads (1,1) and (1,2) trade places between the runs; each contributes a
    // +-0.5 residual whose population std is 0.5, averaged over T=4 heads.
    const HeadOrder base = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
    HeadOrder swapped = base;
    std::swap(swapped[0], swapped[1]);
    const auto dispersion = rank_dispersion({single_scale_orders(base), single_scale_orders(swapped)});
    CHECK(dispersion.at(2) == doctest::Approx(1.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("rank dispersion of independent random orders stays well below T") {
    const int layers = 32;
    const int heads = 16;  // T = 512
    std::mt19937_64 rng(4242);
    HeadOrder base;
    for (int l = 1; l <= layers; ++l) {
        for (int h = 1; h <= heads; ++h) {
            base.push_back({l, h});
        }
    }
    std::vector<ScaleOrders> runs;
    for (int run = 0; run < 4; ++run) {
        HeadOrder shuffled = base;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        runs.push_back(single_scale_orders(shuffled));
    }
    const auto dispersion = rank_dispersion(runs);
    CHECK(dispersion.at(2) > 0.0);
    CHECK(dispersion.at(2) < 512.0 / 2.0);
}

TEST_CASE("rank dispersion argument errors") {
    const HeadOrder base = {{1, 1}, {1, 2}};
    CHECK_THROWS_AS(rank_dispersion({}), ArgumentError);
    CHECK_THROWS_AS(rank_dispersion({single_scale_orders(base)}), ArgumentError);

    ScaleOrders other;
    other[3] = base;
    CHECK_THROWS_AS(rank_dispersion({single_scale_orders(base), other}), ArgumentError);

    ScaleOrders different_heads;
    different_heads[2] = {{1, 1}, {2, 2}};
    CHECK_THROWS_AS(rank_dispersion({single_scale_orders(base), different_heads}), ArgumentError);
}
