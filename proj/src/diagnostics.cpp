#include "egrsd/diagnostics.hpp"

#include "egrsd/credit.hpp"
#include "egrsd/io.hpp"
#include "egrsd/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace egrsd {

std::string_view to_string(Regime r) {
    switch (r) {
        case Regime::lock: return "lock";
        case Regime::fork: return "fork";
        case Regime::pivot: return "pivot";
        case Regime::mid: return "mid";
    }
    return "mid";
}

const RegimeThresholds& validate_thresholds(const RegimeThresholds& th) {
    if (!(th.tau_low > 0.0 && th.tau_low < th.tau_high && th.tau_high < 1.0)) {
        throw std::invalid_argument("thresholds must satisfy 0 < tau_low < tau_high < 1");
    }
    return th;
}

Regime classify_regime(double h_norm, double h_norm_cl, const RegimeThresholds& th) {
    if (h_norm_cl > h_norm) throw std::invalid_argument("classify_regime: lookahead entropy exceeds current entropy");
    if (h_norm <= th.tau_low) return Regime::lock;
    if (h_norm >= th.tau_high && h_norm_cl >= th.tau_high) return Regime::fork;
    if (h_norm >= th.tau_high && h_norm_cl <= th.tau_low) return Regime::pivot;
    return Regime::mid;
}

double weight_increment(double h_norm, double h_norm_cl, double gamma, double floor, double ceiling) {
    return confidence_gate(h_norm_cl, gamma, floor, ceiling) - confidence_gate(h_norm, gamma, floor, ceiling);
}

std::vector<DiagnosticToken> diagnostic_tokens(std::span<const RolloutTrace> traces, const DiagnosticParams& params) {
    const auto rows = gate_batch(traces, {params.gamma, params.window, params.floor, params.ceiling});
    std::vector<DiagnosticToken> out;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& trace = traces[i];
        const double a = trace.advantage.value_or(trace.reward - kWarmupBaseline);
        const int d = direction(a);
        for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
            const auto& tok = trace.tokens[t];
            if (!tok.mask) continue;
            DiagnosticToken dt;
            dt.h_norm = rows[i][t].h_norm;
            dt.h_norm_cl = rows[i][t].h_norm_cl;
            dt.delta = log_ratio(tok.teacher_logprob, tok.student_logprob);
            dt.gate = rows[i][t].omega;
            dt.weight = magnitude(d, dt.delta, params.epsilon) * dt.gate;
            out.push_back(dt);
        }
    }
    return out;
}

std::vector<RegimeRow> regime_report(std::span<const DiagnosticToken> tokens, double gamma, double floor,
                                     const RegimeThresholds& th) {
    if (tokens.empty()) throw std::invalid_argument("regime_report: no tokens");
    validate_thresholds(th);
    std::vector<RegimeRow> rows(4);
    for (int r = 0; r < 4; ++r) rows[r].regime = static_cast<Regime>(r);
    for (const auto& tok : tokens) {
        auto& row = rows[static_cast<int>(classify_regime(tok.h_norm, tok.h_norm_cl, th))];
        ++row.count;
        row.mean_delta_omega += weight_increment(tok.h_norm, tok.h_norm_cl, gamma, floor);
        row.mean_h += tok.h_norm;
        row.mean_h_cl += tok.h_norm_cl;
    }
    const double n = static_cast<double>(tokens.size());
    for (auto& row : rows) {
        row.token_share = static_cast<double>(row.count) / n;
        if (row.count == 0) continue;
        const double c = static_cast<double>(row.count);
        row.mean_delta_omega /= c;
        row.mean_h /= c;
        row.mean_h_cl /= c;
    }
    return rows;
}

std::vector<DecileRow> decile_report(std::span<const DiagnosticToken> tokens) {
    constexpr std::size_t kBuckets = 10;
    if (tokens.size() < kBuckets) throw std::invalid_argument("decile_report: need at least 10 tokens");
    std::vector<std::size_t> order(tokens.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return tokens[a].h_norm < tokens[b].h_norm; });

    std::vector<DecileRow> rows(kBuckets);
    const std::size_t n = tokens.size();
    for (std::size_t b = 0; b < kBuckets; ++b) {
        auto& row = rows[b];
        row.decile = static_cast<int>(b + 1);
        const std::size_t begin = b * n / kBuckets;
        const std::size_t end = (b + 1) * n / kBuckets;
        for (std::size_t k = begin; k < end; ++k) {
            const auto& tok = tokens[order[k]];
            row.mean_h += tok.h_norm;
            row.mean_abs_delta += std::abs(tok.delta);
            row.mean_weight += tok.weight;
            row.mean_gate += tok.gate;
        }
        row.count = end - begin;
        const double c = static_cast<double>(row.count);
        row.mean_h /= c;
        row.mean_abs_delta /= c;
        row.mean_weight /= c;
        row.mean_gate /= c;
    }
    return rows;
}

double token_efficiency(double accuracy_percent, double mean_len_tokens) {
    if (!(mean_len_tokens > 0.0)) throw std::invalid_argument("token_efficiency: mean length must be positive");
    return accuracy_percent / (mean_len_tokens / 1000.0);
}

std::vector<RolloutTrace> make_regime_fixture(std::mt19937_64& rng, std::size_t rollouts, std::size_t length,
                                              std::size_t window) {
    std::uniform_real_distribution<double> low(0.0, 0.1);
    std::uniform_real_distribution<double> high(2.4, 3.0);
    std::uniform_int_distribution<int> pick(0, 2);
    std::vector<RolloutTrace> traces;
    for (std::size_t i = 0; i < rollouts; ++i) {
        std::vector<double> h;
        while (h.size() < length) {
            switch (pick(rng)) {
                case 0:  // lock run
                    for (std::size_t k = 0; k < 3; ++k) h.push_back(low(rng));
                    break;
                case 1:  // fork span, long enough that its head sees only high entropy
                    for (std::size_t k = 0; k < 2 * window + 2; ++k) h.push_back(high(rng));
                    h.push_back(low(rng));
                    break;
                default:  // pivot: one uncertain token that resolves immediately
                    h.push_back(high(rng));
                    h.push_back(low(rng));
                    break;
            }
        }
        h.resize(length);
        RolloutTrace trace;
        trace.prompt_id = "fixture-" + std::to_string(i);
        trace.correct = true;
        trace.reward = 1.0;
        trace.advantage = 1.0;
        for (double e : h) {
            TokenRecord tok;
            tok.teacher_entropy = e;
            tok.student_logprob = -1.0;
            tok.teacher_logprob = -1.0 + 0.1 * e;
            trace.tokens.push_back(tok);
        }
        trace.completion_length = trace.tokens.size();
        traces.push_back(std::move(trace));
    }
    return traces;
}

namespace {

void write_settings(std::ostream& out, const RegimeThresholds& th, double gamma, std::size_t window) {
    out << "# tau_low=" << format_double(th.tau_low) << ",tau_high=" << format_double(th.tau_high)
        << ",gamma=" << format_double(gamma) << ",window=" << window << '\n';
}

}  // namespace

void write_regime_csv(std::ostream& out, const std::vector<RegimeRow>& rows, const RegimeThresholds& th,
                      double gamma, std::size_t window) {
    write_settings(out, th, gamma, window);
    out << "regime,token_share,mean_delta_omega,mean_h,mean_h_cl\n";
    for (const auto& r : rows) {
        out << to_string(r.regime) << ',' << format_double(r.token_share) << ',' << format_double(r.mean_delta_omega)
            << ',' << format_double(r.mean_h) << ',' << format_double(r.mean_h_cl) << '\n';
    }
}

void write_decile_csv(std::ostream& out, const std::vector<DecileRow>& rows, const RegimeThresholds& th,
                      double gamma, std::size_t window) {
    write_settings(out, th, gamma, window);
    out << "decile,mean_h,mean_abs_delta,mean_weight,mean_gate\n";
    for (const auto& r : rows) {
        out << r.decile << ',' << format_double(r.mean_h) << ',' << format_double(r.mean_abs_delta) << ','
            << format_double(r.mean_weight) << ',' << format_double(r.mean_gate) << '\n';
    }
}

}  // namespace egrsd
