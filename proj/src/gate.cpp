#include "egrsd/gate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace egrsd {

double token_entropy(std::span<const double> dist) {
    if (dist.empty()) throw std::invalid_argument("token_entropy: empty distribution");
    double total = 0.0;
    for (double p : dist) {
        if (!std::isfinite(p) || p < 0.0) throw std::invalid_argument("token_entropy: negative or non-finite probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("token_entropy: probabilities sum to " + std::to_string(total));
    }
    double h = 0.0;
    for (double p : dist) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::max(h, 0.0);
}

BatchEntropyView make_entropy_view(std::span<const RolloutTrace> traces) {
    BatchEntropyView view;
    view.entropies.reserve(traces.size());
    view.masks.reserve(traces.size());
    for (const auto& trace : traces) {
        auto& h = view.entropies.emplace_back();
        auto& m = view.masks.emplace_back();
        h.reserve(trace.tokens.size());
        m.reserve(trace.tokens.size());
        for (const auto& tok : trace.tokens) {
            h.push_back(tok.teacher_entropy);
            m.push_back(tok.mask);
            if (tok.mask) view.batch_max = std::max(view.batch_max, tok.teacher_entropy);
        }
    }
    return view;
}

double entropy_denominator(double batch_max) { return std::max(batch_max, kEntropyDenominatorFloor); }

std::vector<std::vector<double>> batch_normalize(const BatchEntropyView& view) {
    bool any = false;
    for (const auto& m : view.masks) any = any || std::find(m.begin(), m.end(), true) != m.end();
    if (!any) throw std::invalid_argument("batch_normalize: no completion positions in batch");

    const double denom = entropy_denominator(view.batch_max);
    std::vector<std::vector<double>> out(view.entropies.size());
    for (std::size_t i = 0; i < view.entropies.size(); ++i) {
        const auto& h = view.entropies[i];
        out[i].assign(h.size(), 0.0);
        for (std::size_t t = 0; t < h.size(); ++t) {
            if (view.masks[i][t]) out[i][t] = h[t] / denom;
        }
    }
    return out;
}

double lookahead_min(std::span<const double> entropies, std::size_t t, std::size_t window, std::size_t t_end) {
    if (t_end > entropies.size()) throw std::out_of_range("lookahead_min: t_end beyond sequence");
    if (t >= t_end) throw std::out_of_range("lookahead_min: position out of range");
    const std::size_t last = std::min(t + window, t_end - 1);
    double best = entropies[t];
    for (std::size_t j = t + 1; j <= last; ++j) best = std::min(best, entropies[j]);
    return best;
}

std::vector<double> lookahead_min_all(std::span<const double> entropies, std::size_t window) {
    std::vector<double> out(entropies.size());
    for (std::size_t t = 0; t < entropies.size(); ++t) {
        out[t] = lookahead_min(entropies, t, window, entropies.size());
    }
    return out;
}

double confidence_gate(double h_norm, double gamma, double floor, double ceiling) {
    return std::clamp(1.0 - gamma * h_norm, floor, ceiling);
}

std::vector<std::vector<GateRow>> gate_batch(std::span<const RolloutTrace> traces, const GateParams& params) {
    const auto view = make_entropy_view(traces);
    const auto h_norm = batch_normalize(view);
    const double denom = entropy_denominator(view.batch_max);

    std::vector<std::vector<GateRow>> rows(traces.size());
    std::vector<double> completion;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& h = view.entropies[i];
        const auto& m = view.masks[i];
        completion.clear();
        for (std::size_t t = 0; t < h.size(); ++t) {
            if (m[t]) completion.push_back(h[t]);
        }
        const auto mins = lookahead_min_all(completion, params.window);

        rows[i].resize(h.size());
        std::size_t k = 0;
        for (std::size_t t = 0; t < h.size(); ++t) {
            auto& row = rows[i][t];
            row.entropy = h[t];
            if (!m[t]) {
                row.omega = row.omega_cl = confidence_gate(0.0, params.gamma, params.floor, params.ceiling);
                continue;
            }
            row.h_norm = h_norm[i][t];
            row.h_norm_cl = mins[k++] / denom;
            row.omega = confidence_gate(row.h_norm, params.gamma, params.floor, params.ceiling);
            row.omega_cl = confidence_gate(row.h_norm_cl, params.gamma, params.floor, params.ceiling);
        }
    }
    return rows;
}

}  // namespace egrsd
