// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "core/error.hpp"
#include "core/geometry.hpp"
#include "test_support.hpp"

using namespace heatkv;
using testing::schedule_from_tokens;
using testing::toy_config;

TEST_CASE("token_count folds prompt tokens into scale 1") {
    ScaleSchedule unit;
    unit.resolutions = {{1, 1}, {2, 2}, {4, 4}};
    unit.sink_count = 1;

    CHECK(unit.token_count(1) == 1);
    CHECK(unit.token_count(3) == 16);

    unit.prompt_tokens = 1;
    CHECK(unit.token_count(1) == 2);
    CHECK(unit.token_count(2) == 4);
}

TEST_CASE("cumulative_tokens sums the prefix") {
    const ScaleSchedule a = schedule_from_tokens({1, 4, 16}, 1);
    CHECK(a.cumulative_tokens(3) == 21);
    CHECK(a.cumulative_tokens(1) == a.token_count(1));

    const ScaleSchedule b = schedule_from_tokens({1, 2, 4, 8}, 1);
    CHECK(b.cumulative_tokens(3) == 7);

    const auto all = b.cumulative_all();
    CHECK(all == std::vector<long long>{1, 3, 7, 15});
}

TEST_CASE("scale index bounds") {
    const ScaleSchedule sched = schedule_from_tokens({1, 2, 4}, 1);
    CHECK_THROWS_AS(sched.token_count(0), IndexError);
    CHECK_THROWS_AS(sched.token_count(4), IndexError);
    CHECK_THROWS_AS(sched.cumulative_tokens(-1), IndexError);
}

TEST_CASE("validate accepts the minimal legal config") {
    CHECK_NOTHROW(validate(toy_config({1, 2, 4}, 1, 1, 1)));
}

TEST_CASE("validate rejects sink counts without a prunable scale") {
    try {
        validate(toy_config({1, 2, 4}, 2, 1, 1));
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("no prunable scale") != std::string::npos);
    }
}

TEST_CASE("validate rejects empty scales") {
    Config config = toy_config({1, 2, 4}, 1, 1, 1);
    config.schedule.resolutions[1] = {0, 3};
    try {
        validate(config);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("empty scale") != std::string::npos);
    }
}

TEST_CASE("validate names shape fields") {
    Config config = toy_config({1, 2, 4}, 1, 1, 1);
    config.shape.layers = 0;
    CHECK_THROWS_WITH_AS(validate(config), doctest::Contains("layers"), ValidationError);
    config.shape.layers = 1;
    config.shape.bytes_per_element = 0;
    CHECK_THROWS_WITH_AS(validate(config), doctest::Contains("bytes_per_element"), ValidationError);
    config.shape.bytes_per_element = 2;
    config.schedule.prompt_tokens = -1;
    CHECK_THROWS_WITH_AS(validate(config), doctest::Contains("prompt_tokens"), ValidationError);

    Config two_scales = toy_config({1, 2}, 1, 1, 1);
    CHECK_THROWS_WITH_AS(validate(two_scales), doctest::Contains("at least 3 scales"), ValidationError);
}

TEST_CASE("telescoping: c_k - c_{k-1} = t_k over random schedules") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 50; ++trial) {
        const Config config = testing::random_config(rng);
        const auto& sched = config.schedule;
        for (int k = 2; k <= sched.num_scales(); ++k) {
            CHECK(sched.cumulative_tokens(k) - sched.cumulative_tokens(k - 1) == sched.token_count(k));
        }
    }
}

TEST_CASE("quadratic ramps grow super-linearly") {
    ScaleSchedule ramp;
    for (int k = 1; k <= 12; ++k) {
        ramp.resolutions.emplace_back(k, k);
    }
    ramp.sink_count = 1;
    for (int k = 2; 2 * k <= 12; ++k) {
        CHECK(static_cast<double>(ramp.cumulative_tokens(2 * k)) >
              2.0 * static_cast<double>(ramp.cumulative_tokens(k)));
    }
}
