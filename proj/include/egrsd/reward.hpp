#pragma once

#include "egrsd/types.hpp"

#include <cstddef>
#include <span>

namespace egrsd {

// Steps 1..kWarmupSteps use the constant baseline instead of running stats.
inline constexpr std::size_t kWarmupSteps = 10;
inline constexpr double kWarmupBaseline = 0.5;
inline constexpr double kRewardStdFloor = 1e-6;

/// 1[correct] * (1 + beta_length * (1 - length / max_len)).
double shaped_reward(bool correct, std::size_t length, std::size_t max_len, double beta_length);

/// Welford update, one reward at a time in batch order.
RewardStats welford_update(RewardStats stats, std::span<const double> rewards);

/// Population standard deviation sqrt(m2 / count), floored at 1e-6.
double reward_std(const RewardStats& stats);

/// Whitened advantage for a reward observed at training step `step` (1-based).
/// `stats` must only contain rewards from earlier steps.
double whiten(double reward, const RewardStats& stats, std::size_t step);

/// sign(a) with sign(0) = 0.
int direction(double a);

}  // namespace egrsd
