#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace egrsd {

using TokenId = std::uint32_t;

// Log-probabilities and entropies are in nats throughout.
struct TokenRecord {
    TokenId token_id = 0;
    double student_logprob = 0.0;
    double teacher_logprob = 0.0;
    double teacher_entropy = 0.0;
    bool mask = true;

    // Full next-token distributions. Only required by the distillation (opsd)
    // objective and by entropy recomputation audits.
    std::vector<double> teacher_probs;
    std::vector<double> student_probs;

    bool operator==(const TokenRecord&) const = default;
};

struct RolloutTrace {
    std::string prompt_id;
    std::vector<TokenId> prompt;
    std::vector<TokenId> reference;
    std::vector<TokenRecord> tokens;
    double reward = 0.0;
    bool correct = false;
    std::size_t completion_length = 0;
    // Training step that produced the rollout; groups records into batches.
    std::int64_t batch = 0;
    // Sequence-level advantage assigned during training, when known.
    std::optional<double> advantage;

    bool operator==(const RolloutTrace&) const = default;
};

struct TokenCredit {
    double delta = 0.0;
    int direction = 0;
    double magnitude = 1.0;
    double h_norm = 0.0;
    double h_norm_cl = 0.0;
    double gate = 1.0;
    double advantage_token = 0.0;

    bool operator==(const TokenCredit&) const = default;
};

enum class Method { egrsd, cl_egrsd, rlsd, grpo, opsd };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct TeacherSchedule {
    enum class Kind { frozen, ema, hardcopy };
    Kind kind = Kind::frozen;
    double alpha = 0.99;
    std::int64_t period = 1;

    static TeacherSchedule frozen() { return {}; }
    static TeacherSchedule ema(double alpha) { return {Kind::ema, alpha, 1}; }
    static TeacherSchedule hardcopy(std::int64_t period) { return {Kind::hardcopy, 0.99, period}; }

    bool operator==(const TeacherSchedule&) const = default;
};

// "frozen", "ema:<alpha>", "hardcopy:<period>"
std::string to_string(const TeacherSchedule& s);
TeacherSchedule parse_teacher_schedule(std::string_view text);

struct TrainConfig {
    double gamma = 0.3;
    std::size_t window = 0;
    double epsilon = 0.2;
    double gate_floor = 0.1;
    double gate_ceiling = 1.0;
    double beta_length = 0.5;
    std::size_t max_len = 16;
    Method method = Method::egrsd;
    TeacherSchedule teacher_schedule;
    // When false the teacher is evaluated on the student view (no reference).
    bool teacher_privileged = true;

    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    double adam_epsilon = 1e-8;
    double grad_clip_norm = 0.1;

    double temperature = 1.0;
    std::uint64_t seed = 0;

    bool operator==(const TrainConfig&) const = default;
};

// TrainConfig plus the run-level settings read from a config file.
struct RunConfig {
    TrainConfig train;
    std::size_t total_steps = 500;
    std::size_t batch_size = 32;
    std::size_t checkpoint_interval = 25;
    std::size_t eval_tasks = 200;
    std::size_t pretrain_steps = 500;
    std::string output_dir = "runs/default";
    bool reproducible = false;

    bool operator==(const RunConfig&) const = default;
};

struct RewardStats {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t step = 0;

    bool operator==(const RewardStats&) const = default;
};

const TrainConfig& validate_config(const TrainConfig& cfg);
const RunConfig& validate_run_config(const RunConfig& cfg);
const RolloutTrace& validate_trace(const RolloutTrace& trace, std::size_t vocab_size);

}  // namespace egrsd
