#include <doctest.h>

#include "egrsd/reward.hpp"

#include <stdexcept>
#include <vector>

using namespace egrsd;

TEST_CASE("shaped_reward") {
    CHECK(shaped_reward(false, 3, 16, 0.5) == 0.0);
    CHECK(shaped_reward(true, 16, 16, 0.5) == 1.0);
    CHECK(shaped_reward(true, 0, 16, 0.5) == 1.5);
    CHECK(shaped_reward(true, 8, 16, 0.5) == 1.25);
    CHECK(shaped_reward(true, 5, 16, 0.0) == 1.0);
    CHECK_THROWS_AS(shaped_reward(true, 17, 16, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(shaped_reward(true, 0, 0, 0.5), std::invalid_argument);
}

TEST_CASE("welford_update") {
    const std::vector<double> r{1.0, 0.0};
    const auto s = welford_update({}, r);
    CHECK(s.count == 2);
    CHECK(s.mean == 0.5);
    CHECK(s.m2 == 0.5);
    CHECK(reward_std(s) == 0.5);

    const auto split = welford_update(welford_update({}, std::vector<double>{1.0}), std::vector<double>{0.0});
    CHECK(split.mean == s.mean);
    CHECK(split.m2 == s.m2);
}

TEST_CASE("reward_std floors constant rewards") {
    const auto s = welford_update({}, std::vector<double>(5, 1.25));
    CHECK(s.m2 == 0.0);
    CHECK(reward_std(s) == kRewardStdFloor);
    CHECK_THROWS_AS(reward_std(RewardStats{}), std::invalid_argument);
}

TEST_CASE("whiten") {
    const auto s = welford_update({}, std::vector<double>{1.0, 0.0});
    CHECK(whiten(1.0, s, 1) == 0.5);
    CHECK(whiten(0.0, s, 10) == -0.5);
    CHECK(whiten(2.0, s, 11) == 3.0);
    CHECK(whiten(0.5, s, 11) == 0.0);
    CHECK(whiten(1.0, RewardStats{}, 50) == 0.5);
}

TEST_CASE("direction") {
    CHECK(direction(0.3) == 1);
    CHECK(direction(-2.0) == -1);
    CHECK(direction(0.0) == 0);
    CHECK(direction(-0.0) == 0);
}
