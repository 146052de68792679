#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace egrsd {

/// Worst-case MSE shrinkage 1 / (1 + a0 * h_norm).
double reference_curve(double h_norm, double a0);

/// Slope of the chord of the reference curve through h_norm = 0 and 1:
/// a0 / (1 + a0).
double gamma_from_nsr(double a0);

struct ChordReport {
    double a0 = 0.0;
    double gamma = 0.0;
    std::size_t grid_size = 0;
    double min_gap = 0.0;        // min over the grid of chord - curve
    double max_gap = 0.0;
    double argmax_gap = 0.0;     // h_norm where the gap peaks
    double endpoint_error = 0.0; // max |chord - curve| at h_norm in {0, 1}
    double min_second_difference = 0.0;
    bool passed = false;
};

/// Compares 1 - gamma * h with the reference curve on a uniform grid over
/// [0, 1]. gamma defaults to gamma_from_nsr(a0). Passes when the chord is on or
/// above the curve (>= -1e-12), meets it at both endpoints (<= 1e-12), and the
/// curve's second differences are >= -1e-12.
ChordReport chord_dominance_check(double a0, std::size_t grid_size, std::optional<double> gamma = std::nullopt);

/// A causal smoothing filter over (h_0, ..., h_W).
struct FilterSpec {
    enum class Kind { current_only, window_min, mix, window_mean };
    Kind kind = Kind::window_min;
    // mix: alpha * h_0 + (1 - alpha) * min_j h_j
    double alpha = 0.5;

    static FilterSpec current_only() { return {Kind::current_only, 1.0}; }
    static FilterSpec window_min() { return {Kind::window_min, 0.0}; }
    static FilterSpec mix(double alpha) { return {Kind::mix, alpha}; }
    // Not a family member; fails conservativity.
    static FilterSpec window_mean() { return {Kind::window_mean, 0.0}; }

    std::string name() const;
};

double apply_filter(const FilterSpec& spec, std::span<const double> window);

struct FilterAuditReport {
    std::string filter;
    std::size_t trials = 0;
    bool monotone = true;
    bool conservative = true;
    bool idempotent = true;
    bool causal = true;
    std::optional<std::string> counterexample;

    bool passed() const { return monotone && conservative && idempotent && causal; }
};

/// Randomized check of the four family conditions on windows of length
/// window + 1 with entries in [0, max_entropy]. Records the first failure.
FilterAuditReport filter_family_audit(const FilterSpec& spec, std::size_t trials, std::size_t window,
                                      std::mt19937_64& rng, double max_entropy = 3.0);

struct ExtremalityReport {
    std::size_t windows = 0;
    std::size_t lower_bound_violations = 0;        // phi < min - 1e-12
    std::size_t recovery_violations = 0;  // delta_phi > delta_min + 1e-12 (pre-clip)
    std::size_t constant_window_violations = 0;
    std::size_t strictness_violations = 0;   // current_only not strictly below min at pivots
    std::size_t post_clip_order_violations = 0;  // reported only
    double max_lower_bound_slack = 0.0;            // largest min - phi seen
    double max_recovery_slack = 0.0;      // largest delta_phi - delta_min seen

    bool passed() const {
        return lower_bound_violations == 0 && recovery_violations == 0 && constant_window_violations == 0 &&
               strictness_violations == 0;
    }
};

/// On `trials` random windows (plus one constant window per trial) checks the
/// pointwise lower bound phi >= min and the recovery ordering
/// delta_phi <= delta_min, with delta = gamma * (h_0 - phi) / H_max and
/// H_max = max(max window entry, 1). Requires window_min among `filters`.
ExtremalityReport extremality_check(std::span<const FilterSpec> filters, std::size_t trials, double gamma,
                                    std::size_t window, std::mt19937_64& rng, double max_entropy = 3.0);

}  // namespace egrsd
