#include "egrsd/types.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <string>

namespace egrsd {

namespace {

[[noreturn]] void fail(const std::string& message) { throw std::invalid_argument(message); }

void require_finite(double value, const char* field) {
    if (!std::isfinite(value)) fail(std::string(field) + " must be finite");
}

}  // namespace

std::string_view to_string(Method m) {
    switch (m) {
        case Method::egrsd: return "egrsd";
        case Method::cl_egrsd: return "cl_egrsd";
        case Method::rlsd: return "rlsd";
        case Method::grpo: return "grpo";
        case Method::opsd: return "opsd";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (auto m : {Method::egrsd, Method::cl_egrsd, Method::rlsd, Method::grpo, Method::opsd}) {
        if (to_string(m) == name) return m;
    }
    fail("unknown method '" + std::string(name) + "'");
}

std::string to_string(const TeacherSchedule& s) {
    switch (s.kind) {
        case TeacherSchedule::Kind::frozen: return "frozen";
        case TeacherSchedule::Kind::ema: {
            char buf[64];
            auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), s.alpha);
            return "ema:" + std::string(buf, end);
        }
        case TeacherSchedule::Kind::hardcopy: return "hardcopy:" + std::to_string(s.period);
    }
    return "frozen";
}

TeacherSchedule parse_teacher_schedule(std::string_view text) {
    if (text == "frozen") return TeacherSchedule::frozen();
    const auto colon = text.find(':');
    const auto head = text.substr(0, colon);
    const auto tail = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
    if (head == "ema") {
        double alpha = 0.99;
        if (!tail.empty()) {
            auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), alpha);
            if (ec != std::errc{} || ptr != tail.data() + tail.size()) fail("bad ema alpha in '" + std::string(text) + "'");
        }
        return TeacherSchedule::ema(alpha);
    }
    if (head == "hardcopy") {
        std::int64_t period = 0;
        auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), period);
        if (tail.empty() || ec != std::errc{} || ptr != tail.data() + tail.size()) {
            fail("bad hardcopy period in '" + std::string(text) + "'");
        }
        return TeacherSchedule::hardcopy(period);
    }
    fail("unknown teacher schedule '" + std::string(text) + "'");
}

const TrainConfig& validate_config(const TrainConfig& cfg) {
    require_finite(cfg.gamma, "gamma");
    require_finite(cfg.epsilon, "epsilon");
    require_finite(cfg.gate_floor, "gate_floor");
    require_finite(cfg.gate_ceiling, "gate_ceiling");
    require_finite(cfg.beta_length, "beta_length");
    require_finite(cfg.learning_rate, "learning_rate");
    require_finite(cfg.temperature, "temperature");

    if (cfg.gamma < 0.0) fail("gamma must be non-negative");
    if (cfg.gate_floor <= 0.0) fail("gate_floor must be positive");
    if (cfg.gate_ceiling != 1.0) fail("gate_ceiling must equal 1");
    if (cfg.gate_floor > cfg.gate_ceiling) fail("gate_floor must not exceed gate_ceiling");
    if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) fail("epsilon out of range");
    if (cfg.beta_length < 0.0) fail("beta_length must be non-negative");
    if (cfg.max_len == 0) fail("max_len must be at least 1");
    if (cfg.method == Method::cl_egrsd && cfg.window == 0) fail("window must be positive for method cl_egrsd");
    if (cfg.method != Method::cl_egrsd && cfg.window != 0) {
        fail("window must be 0 for method " + std::string(to_string(cfg.method)));
    }
    switch (cfg.teacher_schedule.kind) {
        case TeacherSchedule::Kind::ema:
            if (!(cfg.teacher_schedule.alpha >= 0.0 && cfg.teacher_schedule.alpha <= 1.0)) {
                fail("teacher_schedule ema alpha out of range");
            }
            break;
        case TeacherSchedule::Kind::hardcopy:
            if (cfg.teacher_schedule.period < 1) fail("teacher_schedule hardcopy period must be at least 1");
            break;
        case TeacherSchedule::Kind::frozen: break;
    }
    if (cfg.learning_rate < 0.0) fail("learning_rate must be non-negative");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) fail("beta1 out of range");
    if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) fail("beta2 out of range");
    if (!(cfg.weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (!(cfg.adam_epsilon > 0.0)) fail("adam_epsilon must be positive");
    if (!(cfg.grad_clip_norm > 0.0)) fail("grad_clip_norm must be positive");
    if (!(cfg.temperature > 0.0)) fail("temperature must be positive");
    return cfg;
}

const RunConfig& validate_run_config(const RunConfig& cfg) {
    validate_config(cfg.train);
    if (cfg.batch_size == 0) fail("batch_size must be at least 1");
    if (cfg.checkpoint_interval == 0) fail("checkpoint_interval must be at least 1");
    if (cfg.eval_tasks == 0) fail("eval_tasks must be at least 1");
    if (cfg.output_dir.empty()) fail("output_dir must not be empty");
    return cfg;
}

const RolloutTrace& validate_trace(const RolloutTrace& trace, std::size_t vocab_size) {
    require_finite(trace.reward, "reward");
    if (trace.reward < 0.0) fail("reward must be non-negative");
    if (!trace.correct && trace.reward > 0.0) fail("reward must be 0 for an incorrect completion");
    if (trace.advantage) require_finite(*trace.advantage, "advantage");

    std::size_t completion = 0;
    for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
        const auto& tok = trace.tokens[t];
        const auto where = " (token " + std::to_string(t) + ")";
        if (tok.token_id >= vocab_size) fail("token_id out of vocabulary" + where);
        if (!std::isfinite(tok.student_logprob)) fail("student_logprob must be finite" + where);
        if (!std::isfinite(tok.teacher_logprob)) fail("teacher_logprob must be finite" + where);
        if (!std::isfinite(tok.teacher_entropy)) fail("teacher_entropy must be finite" + where);
        if (tok.student_logprob > 0.0) fail("student_logprob must be <= 0" + where);
        if (tok.teacher_logprob > 0.0) fail("teacher_logprob must be <= 0" + where);
        if (tok.teacher_entropy < 0.0) fail("teacher_entropy must be non-negative" + where);
        for (const auto* dist : {&tok.teacher_probs, &tok.student_probs}) {
            if (dist->empty()) continue;
            if (dist->size() != vocab_size) fail("distribution size differs from vocabulary" + where);
            for (double p : *dist) {
                if (!std::isfinite(p) || p < 0.0) fail("distribution entries must be finite and non-negative" + where);
            }
        }
        if (tok.mask) ++completion;
    }
    for (auto id : trace.prompt) {
        if (id >= vocab_size) fail("prompt token out of vocabulary");
    }
    for (auto id : trace.reference) {
        if (id >= vocab_size) fail("reference token out of vocabulary");
    }
    if (completion == 0) fail("trace has no completion tokens");
    if (completion != trace.completion_length) fail("completion_length does not match the mask");
    return trace;
}

}  // namespace egrsd
