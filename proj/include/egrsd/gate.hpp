#pragma once

#include "egrsd/types.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace egrsd {

// Normalized entropies are divided by max(batch_max, kEntropyDenominatorFloor).
inline constexpr double kEntropyDenominatorFloor = 1.0;

/// Shannon entropy -sum p ln p in nats, with 0 ln 0 = 0.
/// Throws std::invalid_argument when `dist` has negative entries or does not
/// sum to 1 within 1e-9.
double token_entropy(std::span<const double> dist);

/// Raw per-token teacher entropies of a minibatch, with the completion mask
/// and the maximum over completion positions.
struct BatchEntropyView {
    std::vector<std::vector<double>> entropies;
    std::vector<std::vector<bool>> masks;
    double batch_max = 0.0;
};

BatchEntropyView make_entropy_view(std::span<const RolloutTrace> traces);

/// max(batch_max, 1 nat).
double entropy_denominator(double batch_max);

/// H / max(batch_max, 1) at completion positions, 0 at masked positions.
/// Throws std::invalid_argument when the view has no completion positions.
std::vector<std::vector<double>> batch_normalize(const BatchEntropyView& view);

/// Minimum of entropies[t .. min(t + window, t_end - 1)].
double lookahead_min(std::span<const double> entropies, std::size_t t, std::size_t window, std::size_t t_end);

/// lookahead_min at every position of a completion sequence.
std::vector<double> lookahead_min_all(std::span<const double> entropies, std::size_t window);

/// clip(1 - gamma * h_norm, floor, ceiling).
double confidence_gate(double h_norm, double gamma, double floor, double ceiling);

struct GateRow {
    double entropy = 0.0;
    double h_norm = 0.0;
    double h_norm_cl = 0.0;
    double omega = 1.0;
    double omega_cl = 1.0;
};

struct GateParams {
    double gamma = 0.3;
    std::size_t window = 0;
    double floor = 0.1;
    double ceiling = 1.0;
};

/// Instantaneous and lookahead gates for every token of one minibatch.
///
/// The lookahead minimum runs over the completion (mask-true) positions of
/// each rollout, in order, and both gates share the batch-global denominator
/// built from the raw entropies. Masked positions get zero normalized entropy.
std::vector<std::vector<GateRow>> gate_batch(std::span<const RolloutTrace> traces, const GateParams& params);

}  // namespace egrsd
