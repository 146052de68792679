#pragma once

#include "egrsd/types.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace egrsd {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct CheckOptions {
    std::size_t trials = 10000;
    std::uint64_t seed = 0;
    // Fault injection for exercising the harness: runs the gate with a zero floor.
    bool inject_gate_floor_zero = false;
};

/// Random minibatch of 1..max_rollouts rollouts with 1..max_tokens tokens each,
/// random log-probabilities, entropies in [0, max_entropy] nats and signs.
std::vector<RolloutTrace> random_batch(std::mt19937_64& rng, std::size_t max_rollouts, std::size_t max_tokens,
                                       std::size_t vocab_size, double max_entropy = 3.0);

/// Runs every property check; each result names the invariant it covers.
std::vector<CheckResult> run_property_suite(const CheckOptions& options);

}  // namespace egrsd
