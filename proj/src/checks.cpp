#include "egrsd/checks.hpp"

#include "egrsd/credit.hpp"
#include "egrsd/diagnostics.hpp"
#include "egrsd/gate.hpp"
#include "egrsd/io.hpp"
#include "egrsd/policy.hpp"
#include "egrsd/reward.hpp"
#include "egrsd/theory.hpp"
#include "egrsd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

namespace egrsd {

std::vector<RolloutTrace> random_batch(std::mt19937_64& rng, std::size_t max_rollouts, std::size_t max_tokens,
                                       std::size_t vocab_size, double max_entropy) {
    std::uniform_int_distribution<std::size_t> n_rollouts(1, max_rollouts);
    std::uniform_int_distribution<std::size_t> n_tokens(1, max_tokens);
    std::uniform_int_distribution<TokenId> token(0, static_cast<TokenId>(vocab_size - 1));
    std::uniform_real_distribution<double> logprob(-4.0, 0.0);
    std::uniform_real_distribution<double> entropy(0.0, max_entropy);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<RolloutTrace> batch(n_rollouts(rng));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto& trace = batch[i];
        trace.prompt_id = "r" + std::to_string(i);
        trace.prompt = {token(rng), token(rng), token(rng)};
        const std::size_t len = n_tokens(rng);
        for (std::size_t t = 0; t < len; ++t) {
            TokenRecord tok;
            tok.token_id = token(rng);
            tok.student_logprob = logprob(rng);
            tok.teacher_logprob = logprob(rng);
            tok.teacher_entropy = entropy(rng);
            trace.tokens.push_back(tok);
        }
        trace.completion_length = len;
        trace.correct = unit(rng) < 0.5;
        trace.reward = trace.correct ? 1.0 + 0.5 * unit(rng) : 0.0;
    }
    return batch;
}

namespace {

using Clock = std::chrono::steady_clock;

CheckResult timed(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    const auto start = Clock::now();
    CheckResult r;
    r.name = name;
    try {
        auto [ok, detail] = body();
        r.passed = ok;
        r.detail = std::move(detail);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
}

std::vector<double> random_advantages(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> a(-2.0, 2.0);
    std::vector<double> out(n);
    for (auto& x : out) x = a(rng);
    return out;
}

// Loss of a batch with every token advantage held fixed, evaluated at `params`.
double frozen_advantage_loss(const BatchCredit& credit, std::span<const RolloutTrace> traces, const PolicyParams& params) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        std::vector<TokenId> history;
        for (std::size_t t = 0; t < traces[i].tokens.size(); ++t) {
            const auto& tok = traces[i].tokens[t];
            const auto logp = log_softmax_dist(params, encode_context(traces[i].prompt, {}, history, params.shape));
            sum += credit.credits[i][t].advantage_token * logp[tok.token_id];
            ++count;
            history.push_back(tok.token_id);
        }
    }
    return -sum / static_cast<double>(count);
}

std::pair<bool, std::string> gradient_check(std::mt19937_64& rng, std::size_t instances) {
    std::uniform_int_distribution<std::size_t> vocab_pick(2, 8);
    std::normal_distribution<double> weight(0.0, 0.5);
    double worst = 0.0;
    for (std::size_t k = 0; k < instances; ++k) {
        PolicyShape shape;
        shape.vocab_size = vocab_pick(rng);
        const std::size_t max_slots = std::min<std::size_t>(64 / shape.vocab_size, 5);
        std::uniform_int_distribution<std::size_t> window_pick(1, std::max<std::size_t>(1, max_slots - 1));
        shape.context_window = window_pick(rng);
        shape.privileged_slots = std::min<std::size_t>(max_slots - shape.context_window, 2);
        auto params = PolicyParams::zeros(shape);
        for (auto& w : params.weights) w = weight(rng);

        auto traces = random_batch(rng, 3, 4, shape.vocab_size);
        TrainConfig cfg;
        const auto credit = assemble_batch(traces, random_advantages(rng, traces.size()), cfg);
        const auto analytic = compute_gradient(credit, traces, params);

        constexpr double h = 1e-5;
        double diff_sq = 0.0;
        double ref_sq = 0.0;
        for (std::size_t j = 0; j < params.weights.size(); ++j) {
            auto plus = params;
            auto minus = params;
            plus.weights[j] += h;
            minus.weights[j] -= h;
            const double fd = (frozen_advantage_loss(credit, traces, plus) - frozen_advantage_loss(credit, traces, minus)) / (2 * h);
            diff_sq += (fd - analytic[j]) * (fd - analytic[j]);
            ref_sq += fd * fd;
        }
        const double rel = ref_sq > 0.0 ? std::sqrt(diff_sq / ref_sq) : std::sqrt(diff_sq);
        worst = std::max(worst, rel);
    }
    return {worst <= 1e-6, "max relative error " + format_double(worst) + " over " + std::to_string(instances) + " instances"};
}

}  // namespace

std::vector<CheckResult> run_property_suite(const CheckOptions& options) {
    std::mt19937_64 rng(options.seed);
    const std::size_t trials = options.trials;
    const double floor = options.inject_gate_floor_zero ? 0.0 : 0.1;
    std::vector<CheckResult> results;

    results.push_back(timed("gate_bounds", [&] {
        std::uniform_real_distribution<double> h(0.0, 3.0);
        std::uniform_real_distribution<double> g(0.0, 5.0);
        std::size_t bad = 0;
        const std::size_t n = trials * 100;
        for (std::size_t k = 0; k < n; ++k) {
            const double w = confidence_gate(h(rng), g(rng), floor, 1.0);
            if (w < 0.1 || w > 1.0) ++bad;
        }
        return std::pair{bad == 0, std::to_string(bad) + " of " + std::to_string(n) + " gates outside [0.1, 1]"};
    }));

    results.push_back(timed("gate_monotone", [&] {
        std::uniform_real_distribution<double> u(0.0, 3.0);
        std::size_t bad = 0;
        for (std::size_t k = 0; k < trials; ++k) {
            const double h1 = u(rng), h2 = u(rng), g1 = u(rng), g2 = u(rng);
            if (confidence_gate(std::min(h1, h2), g1, floor, 1.0) < confidence_gate(std::max(h1, h2), g1, floor, 1.0)) ++bad;
            if (confidence_gate(h1, std::min(g1, g2), floor, 1.0) < confidence_gate(h1, std::max(g1, g2), floor, 1.0)) ++bad;
        }
        return std::pair{bad == 0, std::to_string(bad) + " monotonicity violations"};
    }));

    results.push_back(timed("lookahead_conservative", [&] {
        std::uniform_real_distribution<double> u(0.0, 3.0);
        std::uniform_int_distribution<std::size_t> len(1, 20);
        std::uniform_int_distribution<std::size_t> win(0, 8);
        std::size_t bad = 0;
        for (std::size_t k = 0; k < trials; ++k) {
            std::vector<double> h(len(rng));
            for (auto& x : h) x = u(rng);
            const std::size_t w1 = win(rng), w2 = w1 + win(rng);
            for (std::size_t t = 0; t < h.size(); ++t) {
                const double a = lookahead_min(h, t, w1, h.size());
                const double b = lookahead_min(h, t, w2, h.size());
                if (a > h[t] || b > a || lookahead_min(h, t, 0, h.size()) != h[t]) ++bad;
            }
        }
        return std::pair{bad == 0, std::to_string(bad) + " windowed-minimum violations"};
    }));

    results.push_back(timed("degeneracy_chain", [&] {
        std::uniform_real_distribution<double> g(0.0, 2.0);
        std::uniform_real_distribution<double> e(0.05, 0.5);
        const std::size_t batches = std::max<std::size_t>(1, std::min<std::size_t>(100, trials / 100));
        std::size_t bad = 0;
        for (std::size_t k = 0; k < batches; ++k) {
            auto traces = random_batch(rng, 6, 12, 16);
            const auto adv = random_advantages(rng, traces.size());
            TrainConfig cfg;
            cfg.gamma = g(rng);
            cfg.epsilon = e(rng);
            cfg.gate_floor = floor > 0.0 ? floor : 1e-9;

            auto egrsd_cfg = cfg;
            egrsd_cfg.method = Method::egrsd;
            auto cl_cfg = cfg;
            cl_cfg.method = Method::cl_egrsd;
            cl_cfg.window = 0;
            if (!(assemble_batch(traces, adv, cl_cfg) == assemble_batch(traces, adv, egrsd_cfg))) ++bad;

            auto zero_cfg = egrsd_cfg;
            zero_cfg.gamma = 0.0;
            auto rlsd_cfg = cfg;
            rlsd_cfg.method = Method::rlsd;
            if (!(assemble_batch(traces, adv, zero_cfg) == assemble_batch(traces, adv, rlsd_cfg))) ++bad;

            for (auto& tr : traces) {
                for (auto& tok : tr.tokens) tok.teacher_logprob = tok.student_logprob;
            }
            auto grpo_cfg = cfg;
            grpo_cfg.method = Method::grpo;
            if (!(assemble_batch(traces, adv, rlsd_cfg) == assemble_batch(traces, adv, grpo_cfg))) ++bad;
        }
        return std::pair{bad == 0, std::to_string(bad) + " mismatches over " + std::to_string(batches) + " batches"};
    }));

    results.push_back(timed("credit_bounds", [&] {
        std::size_t bad = 0;
        const std::size_t batches = std::max<std::size_t>(1, std::min<std::size_t>(200, trials / 50));
        for (std::size_t k = 0; k < batches; ++k) {
            const auto traces = random_batch(rng, 6, 12, 16);
            const auto adv = random_advantages(rng, traces.size());
            TrainConfig cfg;
            cfg.gate_floor = floor > 0.0 ? floor : 1e-9;
            const auto credit = assemble_batch(traces, adv, cfg);
            for (std::size_t i = 0; i < traces.size(); ++i) {
                for (const auto& c : credit.credits[i]) {
                    const double a = std::abs(adv[i]);
                    const double x = std::abs(c.advantage_token);
                    if (direction(c.advantage_token) != direction(adv[i])) ++bad;
                    if (x > a * (1.0 + cfg.epsilon) + 1e-12 || x < a * (1.0 - cfg.epsilon) * 0.1 - 1e-12) ++bad;
                }
            }
            if (std::abs(recompute_advantage_loss(credit, traces) - credit.loss_value) > 1e-12) ++bad;
        }
        return std::pair{bad == 0, std::to_string(bad) + " sign/bound/loss violations"};
    }));

    results.push_back(timed("gradient_finite_difference", [&] { return gradient_check(rng, 50); }));

    results.push_back(timed("filter_family", [&] {
        std::ostringstream detail;
        bool ok = true;
        const std::size_t n = std::max<std::size_t>(1, trials / 10);
        for (const auto& f : {FilterSpec::current_only(), FilterSpec::mix(0.25), FilterSpec::mix(0.5),
                              FilterSpec::mix(0.75), FilterSpec::window_min()}) {
            for (std::size_t w : {1, 3, 5, 7}) {
                const auto r = filter_family_audit(f, n, w, rng);
                if (!r.passed()) {
                    ok = false;
                    detail << f.name() << " W=" << w << ": " << r.counterexample.value_or("failed") << "; ";
                }
            }
        }
        // The windowed mean is not a family member and must be caught.
        const auto mean = filter_family_audit(FilterSpec::window_mean(), n, 3, rng);
        if (mean.conservative) {
            ok = false;
            detail << "window_mean passed conservativity; ";
        }
        if (ok) detail << "members pass, window_mean rejected";
        return std::pair{ok, detail.str()};
    }));

    results.push_back(timed("filter_extremality", [&] {
        const std::vector<FilterSpec> filters = {FilterSpec::current_only(), FilterSpec::mix(0.25), FilterSpec::mix(0.5),
                                                 FilterSpec::mix(0.75), FilterSpec::window_min()};
        std::size_t lower = 0, recovery = 0, flat = 0, strict = 0;
        for (std::size_t w : {1, 3, 5, 7}) {
            const auto r = extremality_check(filters, trials, 0.3, w, rng);
            lower += r.lower_bound_violations;
            recovery += r.recovery_violations;
            flat += r.constant_window_violations;
            strict += r.strictness_violations;
        }
        const bool ok = lower + recovery + flat + strict == 0;
        return std::pair{ok, "lower bound " + std::to_string(lower) + ", recovery " + std::to_string(recovery) + ", constant " +
                                 std::to_string(flat) + ", strictness " + std::to_string(strict) + " violations"};
    }));

    results.push_back(timed("chord_dominance", [&] {
        bool ok = true;
        std::ostringstream detail;
        for (double a0 : {0.1, 0.5, 1.0, 3.0, 9.0}) {
            const auto r = chord_dominance_check(a0, 10000);
            ok = ok && r.passed;
            detail << "a0=" << a0 << " min_gap=" << format_double(r.min_gap) << "; ";
        }
        // A gamma above the endpoint match must put the chord below the curve.
        const auto bad = chord_dominance_check(1.0, 1001, 0.6);
        ok = ok && !bad.passed;
        return std::pair{ok, detail.str()};
    }));

    results.push_back(timed("welford_two_pass", [&] {
        std::uniform_real_distribution<double> r(0.0, 1.5);
        std::uniform_int_distribution<std::size_t> len(1, 40);
        double worst = 0.0;
        const std::size_t streams = std::max<std::size_t>(1, std::min<std::size_t>(1000, trials / 10));
        for (std::size_t s = 0; s < streams; ++s) {
            RewardStats stats;
            std::vector<double> all;
            const std::size_t batches = len(rng);
            for (std::size_t b = 0; b < batches; ++b) {
                std::vector<double> batch(len(rng));
                for (auto& x : batch) x = r(rng);
                stats = welford_update(stats, batch);
                all.insert(all.end(), batch.begin(), batch.end());
            }
            double mean = 0.0;
            for (double x : all) mean += x;
            mean /= static_cast<double>(all.size());
            double m2 = 0.0;
            for (double x : all) m2 += (x - mean) * (x - mean);
            worst = std::max(worst, std::abs(stats.mean - mean) / std::max(std::abs(mean), 1e-300));
            if (m2 > 0.0) worst = std::max(worst, std::abs(stats.m2 - m2) / m2);
        }
        bool warm = true;
        for (std::size_t step = 1; step <= kWarmupSteps; ++step) {
            const double reward = r(rng);
            warm = warm && whiten(reward, RewardStats{5, 0.9, 0.3, step - 1}, step) == reward - 0.5;
        }
        return std::pair{worst <= 1e-10 && warm, "max relative deviation " + format_double(worst)};
    }));

    results.push_back(timed("reward_shaping", [&] {
        std::size_t bad = 0;
        for (std::size_t lmax = 1; lmax <= 64; ++lmax) {
            for (std::size_t len = 0; len <= lmax; ++len) {
                const double expect = 1.0 + 0.5 * (1.0 - static_cast<double>(len) / static_cast<double>(lmax));
                if (shaped_reward(true, len, lmax, 0.5) != expect) ++bad;
                if (shaped_reward(false, len, lmax, 0.5) != 0.0) ++bad;
            }
        }
        return std::pair{bad == 0, std::to_string(bad) + " mismatches"};
    }));

    results.push_back(timed("regime_diagnostics", [&] {
        const RegimeThresholds th;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::size_t negative = 0;
        std::vector<DiagnosticToken> tokens(std::max<std::size_t>(10, trials * 10));
        for (auto& tok : tokens) {
            tok.h_norm = u(rng);
            tok.h_norm_cl = tok.h_norm * u(rng);
            if (weight_increment(tok.h_norm, tok.h_norm_cl, 1.0, floor) < 0.0) ++negative;
        }
        const auto rows = regime_report(tokens, 1.0, floor, th);
        double share = 0.0;
        std::size_t count = 0;
        for (const auto& r : rows) {
            share += r.token_share;
            count += r.count;
        }
        auto fixture = make_regime_fixture(rng, 16, 40, 3);
        const auto fx = regime_report(diagnostic_tokens(fixture, {0.3, 3, 0.2, 0.1, 1.0}), 0.3, 0.1, th);
        const bool selective = fx[2].count > 0 && fx[1].count > 0 && fx[2].mean_delta_omega > fx[1].mean_delta_omega;
        const bool ok = negative == 0 && count == tokens.size() && std::abs(share - 1.0) <= 1e-12 && selective;
        return std::pair{ok, "pivot mean increment " + format_double(fx[2].mean_delta_omega) + " vs fork " +
                                 format_double(fx[1].mean_delta_omega)};
    }));

    results.push_back(timed("token_efficiency", [&] {
        const double base = token_efficiency(65.59, 11008);
        const double egrsd = token_efficiency(67.24, 11064);
        const bool ok = std::abs(base - 5.96) <= 0.01 && std::abs(egrsd - 6.08) <= 0.01;
        return std::pair{ok, format_double(base) + ", " + format_double(egrsd)};
    }));

    return results;
}

}  // namespace egrsd
