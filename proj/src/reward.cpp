#include "egrsd/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace egrsd {

double shaped_reward(bool correct, std::size_t length, std::size_t max_len, double beta_length) {
    if (max_len == 0) throw std::invalid_argument("shaped_reward: max_len must be positive");
    if (length > max_len) throw std::invalid_argument("shaped_reward: length exceeds max_len");
    if (!correct) return 0.0;
    const double frac = static_cast<double>(length) / static_cast<double>(max_len);
    return 1.0 + beta_length * (1.0 - frac);
}

RewardStats welford_update(RewardStats stats, std::span<const double> rewards) {
    for (double r : rewards) {
        ++stats.count;
        const double d = r - stats.mean;
        stats.mean += d / static_cast<double>(stats.count);
        stats.m2 += d * (r - stats.mean);
    }
    stats.m2 = std::max(stats.m2, 0.0);
    return stats;
}

double reward_std(const RewardStats& stats) {
    if (stats.count == 0) throw std::invalid_argument("reward_std: no rewards observed");
    return std::max(std::sqrt(stats.m2 / static_cast<double>(stats.count)), kRewardStdFloor);
}

double whiten(double reward, const RewardStats& stats, std::size_t step) {
    if (step <= kWarmupSteps || stats.count == 0) return reward - kWarmupBaseline;
    return (reward - stats.mean) / reward_std(stats);
}

int direction(double a) { return (a > 0.0) - (a < 0.0); }

}  // namespace egrsd
