// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "core/error.hpp"
#include "core/simulator.hpp"
#include "test_support.hpp"

using namespace heatkv;
using testing::worked_config;
using testing::worked_table;

namespace {

SchedulePlan worked_plan(double budget_fraction, PruneMode mode = PruneMode::binary,
                         Accounting accounting = Accounting::paper) {
    const Config config = worked_config();
    return build_schedule(worked_table(), plan_budget(budget_fraction, config.shape, config.schedule), mode,
                          accounting, config);
}

const Checkpoint& checkpoint_at(const SimulationReport& report, int scale, int layer) {
    for (const Checkpoint& cp : report.checkpoints) {
        if (cp.scale == scale && cp.layer == layer) {
            return cp;
        }
    }
    throw std::runtime_error("checkpoint not found");
}

}  // namespace

TEST_CASE("full-budget run is uncompressed and violation-free") {
    const SchedulePlan plan = worked_plan(1.0);
    const SimulationReport report = simulate(plan);
    CHECK(report.violations.empty());
    CHECK(report.end_of_scale.back().tokens == 4 * 7);  // T * c_{K-1}
    CHECK(report.end_of_scale.back().tokens == report.end_of_scale.back().expected);
    CHECK(report.checkpoints.size() == 3 * 2 + 1);
}

TEST_CASE("the worked b=0.5 greedy plan replays exactly") {
    const SchedulePlan plan = worked_plan(0.5);
    const SimulationReport report = simulate(plan);
    CHECK(report.violations.empty());
    CHECK(report.token_cap == 14);

    // physical trajectory (tight accounting at every checkpoint)
    CHECK(checkpoint_at(report, 1, 1).physical_tokens == 2);
    CHECK(checkpoint_at(report, 1, 2).physical_tokens == 4);
    CHECK(checkpoint_at(report, 2, 1).physical_tokens == 8);
    CHECK(checkpoint_at(report, 2, 2).physical_tokens == 12);
    CHECK(checkpoint_at(report, 3, 1).physical_tokens == 6);
    CHECK(checkpoint_at(report, 3, 2).physical_tokens == 10);
    CHECK(checkpoint_at(report, 4, 0).physical_tokens == 10);

    // the paper-accounting scan the schedule was built against
    CHECK(checkpoint_at(report, 3, 1).tokens == 10);
    CHECK(checkpoint_at(report, 3, 2).tokens == 10);
    CHECK(checkpoint_at(report, 2, 2).tokens == 12);

    // end-of-scale totals match the closed form
    for (const ScaleTotal& total : report.end_of_scale) {
        CHECK(total.tokens == total.expected);
    }
    CHECK(report.end_of_scale[2].tokens == 10);  // 3*1 + 1*7

    CHECK(report.peak_tokens == 12);
    CHECK(report.peak_bytes == to_bytes(12, worked_config().shape));
}

TEST_CASE("the naive plan stays under budget with more early evictions") {
    const Config config = worked_config();
    const SchedulePlan naive = naive_schedule(worked_table(), plan_budget(0.5, config.shape, config.schedule),
                                              PruneMode::binary, config);
    const SimulationReport report = simulate(naive);
    CHECK(report.violations.empty());
    CHECK(naive.at_scale(3).early.size() == 3);  // vs. greedy's 1
    CHECK(report.end_of_scale[2].tokens == 10);  // same boundary total as greedy
    // scale-3 checkpoints never exceed the greedy plan's scale-3 peak
    CHECK(checkpoint_at(report, 3, 1).tokens <= 10);
    CHECK(checkpoint_at(report, 3, 2).tokens <= 10);
}

TEST_CASE("forcing the early set empty produces the hand-computed violation") {
    SchedulePlan tampered = worked_plan(0.5);
    ScaleActions& actions = tampered.scales[2];
    // (2,1) moves from the early set to an after-layer eviction
    actions.early.clear();
    actions.absent.clear();
    actions.evict_after_layer[2].push_back({0, 2, 1});
    CHECK_NOTHROW(validate_plan(tampered));

    const SimulationReport report = simulate(tampered);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].scale == 3);
    CHECK(report.violations[0].layer == 1);
    CHECK(report.violations[0].tokens == 16);
    CHECK(report.violations[0].cap == 14);

    const VerifySummary summary = verify_plan(tampered);
    CHECK_FALSE(summary.pass);
    REQUIRE_FALSE(summary.failures.empty());
    CHECK(summary.failures[0].find("16 > 14") != std::string::npos);
}

TEST_CASE("verify passes every plan built on feasible budgets") {
    std::mt19937_64 rng(1001);
    for (int trial = 0; trial < 40; ++trial) {
        const Config config = testing::random_config(rng);
        const ImportanceTable table = testing::random_table(rng, config);
        const double b = testing::random_feasible_fraction(rng, config.schedule);
        const BudgetPlan budget = plan_budget(b, config.shape, config.schedule);
        const PruneMode mode = trial % 2 == 0 ? PruneMode::binary : PruneMode::scale;
        const Accounting accounting = trial % 3 == 0 ? Accounting::tight : Accounting::paper;
        const SchedulePlan greedy = build_schedule(table, budget, mode, accounting, config);
        CHECK(verify_plan(greedy).pass);
        const SchedulePlan naive = naive_schedule(table, budget, mode, config, accounting);
        CHECK(verify_plan(naive).pass);
    }
}

TEST_CASE("a nesting violation is a consistency error, not a violation row") {
    SchedulePlan broken = worked_plan(0.5);
    broken.scales[1].target = {{0, 2, 2}};
    broken.scales[1].absent = {};
    broken.scales[1].evict_after_layer[2] = {{0, 2, 2}};
    CHECK_THROWS_AS(simulate(broken), ScheduleError);
}

TEST_CASE("to_bytes closed forms") {
    const ModelShape shape{32, 16, 128, 2};
    CHECK(to_bytes(0, shape) == 0);
    CHECK(to_bytes(100, shape) == 51200);
    CHECK(to_bytes(1, ModelShape{1, 1, 1, 1}) == 2);

    SUBCASE("linearity") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            const long long a = static_cast<long long>(rng() % 100000);
            const long long b = static_cast<long long>(rng() % 100000);
            CHECK(to_bytes(a + b, shape) == to_bytes(a, shape) + to_bytes(b, shape));
        }
    }
    SUBCASE("batch multiplier") {
        CHECK(to_bytes(100, shape, 8) == 8 * 51200);
    }
}

TEST_CASE("checkpoints agree with the layer accounting") {
    std::mt19937_64 rng(52);
    for (int trial = 0; trial < 25; ++trial) {
        const Config config = testing::random_config(rng);
        const ImportanceTable table = testing::random_table(rng, config);
        const double b = testing::random_feasible_fraction(rng, config.schedule);
        const BudgetPlan budget = plan_budget(b, config.shape, config.schedule);
        const PruneMode mode = trial % 2 == 0 ? PruneMode::binary : PruneMode::scale;

        // tight plans: the reported tokens are exactly the tight accounting,
        // which equals the physical occupancy
        const SchedulePlan tight = build_schedule(table, budget, mode, Accounting::tight, config);
        PruneSet previous;
        const SimulationReport tight_report = simulate(tight);
        for (const Checkpoint& cp : tight_report.checkpoints) {
            if (cp.layer == 0) {
                continue;
            }
            const ScaleActions& actions = tight.at_scale(cp.scale);
            const PruneSet target(actions.target.begin(), actions.target.end());
            const PruneSet early(actions.early.begin(), actions.early.end());
            const PruneSet prior = cp.scale >= 2
                                       ? PruneSet(tight.at_scale(cp.scale - 1).target.begin(),
                                                  tight.at_scale(cp.scale - 1).target.end())
                                       : PruneSet{};
            CHECK(cp.tokens == cp.physical_tokens);
            CHECK(cp.tokens == cache_size_after_layer(cp.scale, cp.layer, target, prior, early, mode,
                                                      Accounting::tight, config));
        }
        (void)previous;

        // paper plans: accounted dominates physical at every checkpoint
        const SchedulePlan paper = build_schedule(table, budget, mode, Accounting::paper, config);
        for (const Checkpoint& cp : simulate(paper).checkpoints) {
            CHECK(cp.tokens >= cp.physical_tokens);
        }
    }
}

TEST_CASE("conservation and the compression ratio") {
    std::mt19937_64 rng(9000);
    for (int trial = 0; trial < 25; ++trial) {
        const Config config = testing::random_config(rng);
        const ImportanceTable table = testing::random_table(rng, config);
        const double b = testing::random_feasible_fraction(rng, config.schedule);
        const BudgetPlan budget = plan_budget(b, config.shape, config.schedule);
        const PruneMode mode = trial % 2 == 0 ? PruneMode::binary : PruneMode::scale;
        const SchedulePlan plan = build_schedule(table, budget, mode, Accounting::paper, config);
        const SimulationReport report = simulate(plan);

        long long previous_total = 0;
        for (size_t i = 0; i < report.flows.size(); ++i) {
            const long long retained = report.end_of_scale[i].tokens;
            CHECK(retained == previous_total + report.flows[i].appended - report.flows[i].evicted);
            previous_total = retained;
        }

        // final retained tokens never exceed the cap: compression >= 1/b
        CHECK(report.end_of_scale.back().tokens <= budget.token_cap);
    }
}

TEST_CASE("batch multiplier scales bytes only") {
    const SchedulePlan plan = worked_plan(0.5);
    const SimulationReport batched = simulate(plan, 16);
    const SimulationReport single = simulate(plan);
    CHECK(batched.peak_tokens == single.peak_tokens);
    CHECK(batched.peak_bytes == 16 * single.peak_bytes);
    CHECK_THROWS_AS(simulate(plan, 0), ArgumentError);
}
