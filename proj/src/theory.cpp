#include "egrsd/theory.hpp"

#include "egrsd/gate.hpp"
#include "egrsd/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace egrsd {

double reference_curve(double h_norm, double a0) { return 1.0 / (1.0 + a0 * h_norm); }

double gamma_from_nsr(double a0) {
    if (a0 < 0.0) throw std::invalid_argument("gamma_from_nsr: a0 must be non-negative");
    return a0 / (1.0 + a0);
}

ChordReport chord_dominance_check(double a0, std::size_t grid_size, std::optional<double> gamma) {
    if (grid_size < 3) throw std::invalid_argument("chord_dominance_check: grid_size must be at least 3");
    ChordReport r;
    r.a0 = a0;
    r.gamma = gamma.value_or(gamma_from_nsr(a0));
    r.grid_size = grid_size;
    r.min_gap = std::numeric_limits<double>::infinity();
    r.max_gap = -std::numeric_limits<double>::infinity();
    r.min_second_difference = std::numeric_limits<double>::infinity();

    const double step = 1.0 / static_cast<double>(grid_size - 1);
    std::vector<double> curve(grid_size);
    for (std::size_t k = 0; k < grid_size; ++k) {
        const double h = k + 1 == grid_size ? 1.0 : static_cast<double>(k) * step;
        curve[k] = reference_curve(h, a0);
        const double gap = (1.0 - r.gamma * h) - curve[k];
        r.min_gap = std::min(r.min_gap, gap);
        if (gap > r.max_gap) {
            r.max_gap = gap;
            r.argmax_gap = h;
        }
        if (k == 0 || k + 1 == grid_size) r.endpoint_error = std::max(r.endpoint_error, std::abs(gap));
    }
    for (std::size_t k = 1; k + 1 < grid_size; ++k) {
        r.min_second_difference = std::min(r.min_second_difference, curve[k - 1] - 2.0 * curve[k] + curve[k + 1]);
    }
    r.passed = r.min_gap >= -1e-12 && r.endpoint_error <= 1e-12 && r.min_second_difference >= -1e-12;
    return r;
}

std::string FilterSpec::name() const {
    switch (kind) {
        case Kind::current_only: return "current_only";
        case Kind::window_min: return "window_min";
        case Kind::mix: return "mix(" + format_double(alpha) + ")";
        case Kind::window_mean: return "window_mean";
    }
    return "unknown";
}

double apply_filter(const FilterSpec& spec, std::span<const double> window) {
    if (window.empty()) throw std::invalid_argument("apply_filter: empty window");
    const double h0 = window.front();
    const double lo = *std::min_element(window.begin(), window.end());
    switch (spec.kind) {
        case FilterSpec::Kind::current_only: return h0;
        case FilterSpec::Kind::window_min: return lo;
        // min + alpha * (h0 - min): equals h0 exactly on constant windows.
        case FilterSpec::Kind::mix: return lo + spec.alpha * (h0 - lo);
        case FilterSpec::Kind::window_mean:
            return std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
    }
    return h0;
}

namespace {

std::string describe(std::span<const double> w) {
    std::ostringstream ss;
    ss << '[';
    for (std::size_t k = 0; k < w.size(); ++k) ss << (k ? ", " : "") << format_double(w[k]);
    ss << ']';
    return ss.str();
}

// Filter evaluated inside a longer sequence, reading only [t, t + window].
double apply_at(const FilterSpec& spec, std::span<const double> seq, std::size_t t, std::size_t window) {
    const std::size_t last = std::min(t + window, seq.size() - 1);
    return apply_filter(spec, seq.subspan(t, last - t + 1));
}

}  // namespace

FilterAuditReport filter_family_audit(const FilterSpec& spec, std::size_t trials, std::size_t window,
                                      std::mt19937_64& rng, double max_entropy) {
    if (trials < 1) throw std::invalid_argument("filter_family_audit: trials must be at least 1");
    if (window < 1) throw std::invalid_argument("filter_family_audit: window must be at least 1");
    constexpr double kTol = 1e-12;
    std::uniform_real_distribution<double> entry(0.0, max_entropy);
    std::uniform_real_distribution<double> bump(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> coord(0, window);

    FilterAuditReport r;
    r.filter = spec.name();
    r.trials = trials;
    auto note = [&](const std::string& what) {
        if (!r.counterexample) r.counterexample = what;
    };

    std::vector<double> h(window + 1);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        for (auto& x : h) x = entry(rng);
        const double phi = apply_filter(spec, h);

        auto raised = h;
        const std::size_t j = coord(rng);
        raised[j] += bump(rng);
        if (apply_filter(spec, raised) < phi - kTol) {
            r.monotone = false;
            note("monotonicity fails raising h_" + std::to_string(j) + " of " + describe(h));
        }

        if (phi > h.front() + kTol) {
            r.conservative = false;
            note("conservativity fails on " + describe(h) + ": phi = " + format_double(phi));
        }

        const double c = entry(rng);
        const std::vector<double> flat(window + 1, c);
        if (std::abs(apply_filter(spec, flat) - c) > kTol) {
            r.idempotent = false;
            note("idempotency fails on constant " + format_double(c));
        }

        // Embed the window in a sequence with a past and a far future, then
        // scramble everything outside [t, t + window].
        std::vector<double> seq(3 * (window + 1));
        for (auto& x : seq) x = entry(rng);
        const std::size_t t = window + 1;
        const double before = apply_at(spec, seq, t, window);
        for (std::size_t k = 0; k < seq.size(); ++k) {
            if (k < t || k > t + window) seq[k] = entry(rng);
        }
        if (apply_at(spec, seq, t, window) != before) {
            r.causal = false;
            note("causality fails: output depends on entries outside the window");
        }
    }
    return r;
}

ExtremalityReport extremality_check(std::span<const FilterSpec> filters, std::size_t trials, double gamma,
                                    std::size_t window, std::mt19937_64& rng, double max_entropy) {
    const bool has_min = std::any_of(filters.begin(), filters.end(),
                                     [](const FilterSpec& f) { return f.kind == FilterSpec::Kind::window_min; });
    if (!has_min) throw std::invalid_argument("extremality_check: window_min must be among the filters");
    if (window < 1) throw std::invalid_argument("extremality_check: window must be at least 1");
    constexpr double kTol = 1e-12;
    constexpr double kFloor = 0.1;
    std::uniform_real_distribution<double> entry(0.0, max_entropy);

    ExtremalityReport r;
    std::vector<double> h(window + 1);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        for (auto& x : h) x = entry(rng);
        const double lo = *std::min_element(h.begin(), h.end());
        const double h_max = entropy_denominator(*std::max_element(h.begin(), h.end()));
        const double h0 = h.front();
        const double delta_min = gamma * (h0 - lo) / h_max;
        const double post_min = confidence_gate(lo / h_max, gamma, kFloor, 1.0) - confidence_gate(h0 / h_max, gamma, kFloor, 1.0);
        ++r.windows;

        for (const auto& f : filters) {
            const double phi = apply_filter(f, h);
            r.max_lower_bound_slack = std::max(r.max_lower_bound_slack, lo - phi);
            if (phi < lo - kTol) ++r.lower_bound_violations;

            const double delta = gamma * (h0 - phi) / h_max;
            r.max_recovery_slack = std::max(r.max_recovery_slack, delta - delta_min);
            if (delta > delta_min + kTol) ++r.recovery_violations;

            const double post = confidence_gate(phi / h_max, gamma, kFloor, 1.0) - confidence_gate(h0 / h_max, gamma, kFloor, 1.0);
            if (post > post_min + kTol) ++r.post_clip_order_violations;

            if (f.kind == FilterSpec::Kind::current_only && h0 > lo && gamma > 0.0 && !(delta < delta_min)) {
                ++r.strictness_violations;
            }
        }

        // Constant window: every filter returns the common value, zero recovery.
        const std::vector<double> flat(window + 1, entry(rng));
        const double flat_max = entropy_denominator(flat.front());
        for (const auto& f : filters) {
            const double delta = gamma * (flat.front() - apply_filter(f, flat)) / flat_max;
            if (delta != 0.0) ++r.constant_window_violations;
        }
    }
    return r;
}

}  // namespace egrsd
