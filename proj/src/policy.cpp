#include "egrsd/policy.hpp"

#include "egrsd/gate.hpp"
#include "egrsd/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace egrsd {

std::string vocab::symbol(TokenId id) {
    if (id <= 9) return std::to_string(id);
    if (id == kPlus) return "+";
    if (id == kMinus) return "-";
    if (id >= kStepLow && id < kAnswer) {
        const int v = static_cast<int>(id) - static_cast<int>(kStepLow) - 9;
        return (v < 0 ? "s" : "s+") + std::to_string(v);
    }
    if (id == kAnswer) return "=";
    if (id == kEnd) return "<eos>";
    if (id == kPad) return "<pad>";
    return "?";
}

std::string ToyTask::id() const {
    return std::to_string(lhs) + (subtract ? "-" : "+") + std::to_string(rhs);
}

ToyTask make_task(int lhs, int rhs, bool subtract) {
    if (lhs < 0 || lhs > 9 || rhs < 0 || rhs > kMaxRhs) throw std::invalid_argument("make_task: operand out of range");
    ToyTask task{lhs, rhs, subtract, {}, {}, {}, {}};
    const int v = task.value();
    if (v < 0 || v > 9) throw std::invalid_argument("make_task: result must be a single digit");
    const int sign = subtract ? -1 : 1;
    task.prompt = {subtract ? vocab::kMinus : vocab::kPlus, vocab::digit(rhs), vocab::digit(lhs)};
    task.reference = {vocab::step(sign * rhs), vocab::digit(v)};
    task.answer = {vocab::digit(v)};
    task.completion = {vocab::step(sign * rhs)};
    for (int k = 1; k <= rhs; ++k) {
        task.completion.push_back(vocab::digit(lhs + sign * k));
        task.completion.push_back(vocab::step(sign * (rhs - k)));
    }
    task.completion.insert(task.completion.end(), {vocab::kAnswer, vocab::digit(v), vocab::kEnd});
    return task;
}

std::vector<ToyTask> all_tasks() {
    std::vector<ToyTask> tasks;
    for (int subtract = 0; subtract < 2; ++subtract) {
        for (int a = 0; a <= 9; ++a) {
            for (int b = 0; b <= kMaxRhs; ++b) {
                const int v = subtract ? a - b : a + b;
                if (v >= 0 && v <= 9) tasks.push_back(make_task(a, b, subtract != 0));
            }
        }
    }
    return tasks;
}

TaskGenerator::TaskGenerator(std::uint64_t seed) : pool_(all_tasks()), rng_(seed) {}

ToyTask TaskGenerator::next() { return pool_[rng_() % pool_.size()]; }

std::vector<ToyTask> TaskGenerator::batch(std::size_t n) {
    std::vector<ToyTask> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
}

PolicyParams PolicyParams::zeros(const PolicyShape& shape) {
    return {shape, std::vector<double>(shape.feature_dim() * shape.vocab_size, 0.0)};
}

std::vector<double> encode_context(std::span<const TokenId> prompt, std::span<const TokenId> privileged,
                                   std::span<const TokenId> history, const PolicyShape& shape) {
    std::vector<double> features(shape.feature_dim(), 0.0);
    const std::size_t total = prompt.size() + history.size();
    const std::size_t w = shape.context_window;
    for (std::size_t slot = 0; slot < w; ++slot) {
        // Slot w-1 holds the most recent token.
        const std::size_t back = w - slot;
        // Positions before the start of the context read as the last vocabulary entry.
        TokenId tok = static_cast<TokenId>(shape.vocab_size - 1);
        if (back <= total) {
            const std::size_t idx = total - back;
            tok = idx < prompt.size() ? prompt[idx] : history[idx - prompt.size()];
        }
        if (tok >= shape.vocab_size) throw std::invalid_argument("encode_context: token out of vocabulary");
        features[slot * shape.vocab_size + tok] = 1.0;
    }
    const std::size_t slots = std::min(shape.privileged_slots, privileged.size());
    for (std::size_t j = 0; j < slots; ++j) {
        if (privileged[j] >= shape.vocab_size) throw std::invalid_argument("encode_context: privileged token out of vocabulary");
        features[(w + j) * shape.vocab_size + privileged[j]] = 1.0;
    }
    return features;
}

std::vector<double> log_softmax_dist(const PolicyParams& params, std::span<const double> features) {
    const std::size_t vocab = params.shape.vocab_size;
    if (features.size() != params.shape.feature_dim()) throw std::invalid_argument("log_softmax_dist: feature size mismatch");
    std::vector<double> logits(vocab, 0.0);
    for (std::size_t f = 0; f < features.size(); ++f) {
        const double x = features[f];
        if (x == 0.0) continue;
        const double* row = params.weights.data() + f * vocab;
        for (std::size_t v = 0; v < vocab; ++v) logits[v] += x * row[v];
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - top);
    const double log_z = top + std::log(z);
    for (double& l : logits) l -= log_z;
    return logits;
}

std::vector<double> logprob_gradient(const PolicyParams& params, std::span<const double> features, TokenId token) {
    const std::size_t vocab = params.shape.vocab_size;
    if (token >= vocab) throw std::invalid_argument("logprob_gradient: token out of vocabulary");
    const auto logp = log_softmax_dist(params, features);
    std::vector<double> residual(vocab);
    for (std::size_t v = 0; v < vocab; ++v) residual[v] = (v == token ? 1.0 : 0.0) - std::exp(logp[v]);

    std::vector<double> grad(params.weights.size(), 0.0);
    for (std::size_t f = 0; f < features.size(); ++f) {
        const double x = features[f];
        if (x == 0.0) continue;
        double* row = grad.data() + f * vocab;
        for (std::size_t v = 0; v < vocab; ++v) row[v] = x * residual[v];
    }
    return grad;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

TokenId sample_token(std::span<const double> logprobs, double temperature, std::mt19937_64& rng) {
    if (logprobs.empty()) throw std::invalid_argument("sample_token: empty distribution");
    if (temperature < 1e-6) {
        return static_cast<TokenId>(std::max_element(logprobs.begin(), logprobs.end()) - logprobs.begin());
    }
    const double top = *std::max_element(logprobs.begin(), logprobs.end());
    std::vector<double> weights(logprobs.size());
    double z = 0.0;
    for (std::size_t v = 0; v < logprobs.size(); ++v) {
        weights[v] = std::exp((logprobs[v] - top) / temperature);
        z += weights[v];
    }
    double u = uniform01(rng) * z;
    for (std::size_t v = 0; v < weights.size(); ++v) {
        u -= weights[v];
        if (u < 0.0) return static_cast<TokenId>(v);
    }
    // Rounding left a sliver of mass; take the last token with non-zero weight.
    for (std::size_t v = weights.size(); v-- > 0;) {
        if (weights[v] > 0.0) return static_cast<TokenId>(v);
    }
    return 0;
}

bool verify(std::span<const TokenId> completion, const ToyTask& task) {
    const auto marker = std::find(completion.begin(), completion.end(), vocab::kAnswer);
    if (marker == completion.end()) return false;
    const auto end = std::find(marker + 1, completion.end(), vocab::kEnd);
    return std::equal(marker + 1, end, task.answer.begin(), task.answer.end());
}

namespace {

std::vector<double> exp_all(const std::vector<double>& logp) {
    std::vector<double> p(logp.size());
    std::transform(logp.begin(), logp.end(), p.begin(), [](double l) { return std::exp(l); });
    return p;
}

// Renormalized copy so entropy/KL preconditions hold despite exp rounding.
std::vector<double> normalized(std::vector<double> p) {
    double z = 0.0;
    for (double x : p) z += x;
    for (double& x : p) x /= z;
    return p;
}

}  // namespace

RolloutTrace sample_rollout(const PolicyParams& student, const TeacherState& teacher, const ToyTask& task,
                            const TrainConfig& cfg, std::mt19937_64& rng) {
    if (cfg.max_len == 0) throw std::invalid_argument("sample_rollout: max_len must be positive");
    const auto& shape = student.shape;
    const std::span<const TokenId> privileged =
        cfg.teacher_privileged ? std::span<const TokenId>(task.reference) : std::span<const TokenId>{};

    RolloutTrace trace;
    trace.prompt_id = task.id();
    trace.prompt = task.prompt;
    trace.reference = task.reference;
    std::vector<TokenId> history;
    while (history.size() < cfg.max_len) {
        const auto student_features = encode_context(task.prompt, {}, history, shape);
        const auto student_logp = log_softmax_dist(student, student_features);
        const TokenId tok = sample_token(student_logp, cfg.temperature, rng);

        const auto teacher_features = encode_context(task.prompt, privileged, history, teacher.params.shape);
        const auto teacher_logp = log_softmax_dist(teacher.params, teacher_features);

        TokenRecord rec;
        rec.token_id = tok;
        rec.student_logprob = std::min(student_logp[tok], 0.0);
        rec.teacher_logprob = std::min(teacher_logp[tok], 0.0);
        rec.teacher_probs = normalized(exp_all(teacher_logp));
        rec.student_probs = normalized(exp_all(student_logp));
        rec.teacher_entropy = token_entropy(rec.teacher_probs);
        rec.mask = true;
        trace.tokens.push_back(std::move(rec));
        history.push_back(tok);
        if (tok == vocab::kEnd) break;
    }
    trace.completion_length = trace.tokens.size();
    trace.correct = verify(history, task);
    trace.reward = shaped_reward(trace.correct, trace.completion_length, cfg.max_len, cfg.beta_length);
    return trace;
}

std::vector<TokenId> greedy_decode(const PolicyParams& params, const ToyTask& task, std::size_t max_len,
                                   bool privileged) {
    std::vector<TokenId> history;
    const std::span<const TokenId> priv = privileged ? std::span<const TokenId>(task.reference) : std::span<const TokenId>{};
    while (history.size() < max_len) {
        const auto logp = log_softmax_dist(params, encode_context(task.prompt, priv, history, params.shape));
        const auto tok = static_cast<TokenId>(std::max_element(logp.begin(), logp.end()) - logp.begin());
        history.push_back(tok);
        if (tok == vocab::kEnd) break;
    }
    return history;
}

GreedyEval greedy_evaluate(const PolicyParams& params, std::span<const ToyTask> tasks, std::size_t max_len) {
    if (tasks.empty()) throw std::invalid_argument("greedy_evaluate: no tasks");
    std::size_t hits = 0;
    std::size_t tokens = 0;
    for (const auto& task : tasks) {
        const auto completion = greedy_decode(params, task, max_len);
        hits += verify(completion, task) ? 1 : 0;
        tokens += completion.size();
    }
    const double n = static_cast<double>(tasks.size());
    return {static_cast<double>(hits) / n, static_cast<double>(tokens) / n};
}

double greedy_accuracy(const PolicyParams& params, std::span<const ToyTask> tasks, std::size_t max_len) {
    return greedy_evaluate(params, tasks, max_len).accuracy;
}

TeacherState teacher_update(TeacherState teacher, const PolicyParams& student, std::size_t step) {
    if (step < 1) throw std::invalid_argument("teacher_update: step must be at least 1");
    switch (teacher.schedule.kind) {
        case TeacherSchedule::Kind::frozen: break;
        case TeacherSchedule::Kind::ema: {
            if (teacher.params.weights.size() != student.weights.size()) {
                throw std::invalid_argument("teacher_update: shape mismatch");
            }
            const double alpha = teacher.schedule.alpha;
            for (std::size_t k = 0; k < student.weights.size(); ++k) {
                teacher.params.weights[k] = alpha * teacher.params.weights[k] + (1.0 - alpha) * student.weights[k];
            }
            break;
        }
        case TeacherSchedule::Kind::hardcopy:
            if (step % static_cast<std::size_t>(teacher.schedule.period) == 0) teacher.params = student;
            break;
    }
    return teacher;
}

std::vector<TokenId> completion_tokens(const RolloutTrace& trace) {
    std::vector<TokenId> out;
    for (const auto& tok : trace.tokens) {
        if (tok.mask) out.push_back(tok.token_id);
    }
    return out;
}

}  // namespace egrsd
