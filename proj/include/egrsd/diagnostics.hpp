#pragma once

#include "egrsd/gate.hpp"
#include "egrsd/types.hpp"

#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace egrsd {

enum class Regime { lock, fork, pivot, mid };

std::string_view to_string(Regime r);

struct RegimeThresholds {
    double tau_low = 0.2;
    double tau_high = 0.6;
};

const RegimeThresholds& validate_thresholds(const RegimeThresholds& th);

/// lock:  h_norm <= tau_low
/// fork:  h_norm >= tau_high and h_norm_cl >= tau_high
/// pivot: h_norm >= tau_high and h_norm_cl <= tau_low
/// mid:   everything else
/// Throws std::invalid_argument if h_norm_cl > h_norm.
Regime classify_regime(double h_norm, double h_norm_cl, const RegimeThresholds& th);

/// gate(h_norm_cl) - gate(h_norm), the weight the lookahead gives back.
double weight_increment(double h_norm, double h_norm_cl, double gamma, double floor, double ceiling = 1.0);

/// Per-token quantities the reports consume.
struct DiagnosticToken {
    double h_norm = 0.0;
    double h_norm_cl = 0.0;
    double delta = 0.0;
    // |A_hat| / |A| = w * omega under the instantaneous gate.
    double weight = 1.0;
    double gate = 1.0;
};

struct DiagnosticParams {
    double gamma = 0.3;
    std::size_t window = 0;
    double epsilon = 0.2;
    double floor = 0.1;
    double ceiling = 1.0;
};

/// Mask-true tokens of a batch, in rollout then position order. The rollout
/// direction comes from the stored advantage when present, otherwise from
/// reward - 0.5.
std::vector<DiagnosticToken> diagnostic_tokens(std::span<const RolloutTrace> traces, const DiagnosticParams& params);

struct RegimeRow {
    Regime regime = Regime::mid;
    std::size_t count = 0;
    double token_share = 0.0;
    double mean_delta_omega = 0.0;
    double mean_h = 0.0;
    double mean_h_cl = 0.0;
};

/// One row per regime in the order lock, fork, pivot, mid. Empty regimes
/// report zero means. Throws std::invalid_argument on empty input.
std::vector<RegimeRow> regime_report(std::span<const DiagnosticToken> tokens, double gamma, double floor,
                                     const RegimeThresholds& th);

struct DecileRow {
    int decile = 0;
    std::size_t count = 0;
    double mean_h = 0.0;
    double mean_abs_delta = 0.0;
    double mean_weight = 0.0;
    double mean_gate = 0.0;
};

/// Ten equal-count buckets by h_norm; ties keep token order.
/// Throws std::invalid_argument with fewer than 10 tokens.
std::vector<DecileRow> decile_report(std::span<const DiagnosticToken> tokens);

/// accuracy_percent / (mean_len_tokens / 1000).
double token_efficiency(double accuracy_percent, double mean_len_tokens);

/// Rollouts whose raw entropies mix low-entropy runs, sustained high-entropy
/// spans longer than `window`, and isolated high-entropy tokens followed by
/// low entropy, so that lock, fork and pivot tokens all occur under the
/// default thresholds.
std::vector<RolloutTrace> make_regime_fixture(std::mt19937_64& rng, std::size_t rollouts, std::size_t length,
                                              std::size_t window);

// CSV writers; the first line is a "# key=value,..." comment echoing the settings.
void write_regime_csv(std::ostream& out, const std::vector<RegimeRow>& rows, const RegimeThresholds& th,
                      double gamma, std::size_t window);
void write_decile_csv(std::ostream& out, const std::vector<DecileRow>& rows, const RegimeThresholds& th,
                      double gamma, std::size_t window);

}  // namespace egrsd
