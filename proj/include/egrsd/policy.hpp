#pragma once

#include "egrsd/types.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace egrsd {

// Toy vocabulary: digits, operators, signed step tokens, markers.
namespace vocab {
inline constexpr TokenId kDigit0 = 0;     // 0..9
inline constexpr TokenId kPlus = 10;
inline constexpr TokenId kMinus = 11;
inline constexpr TokenId kStepLow = 12;   // 12..30 encode the signed operand -9..9
inline constexpr TokenId kAnswer = 31;    // answer marker
inline constexpr TokenId kEnd = 32;
inline constexpr TokenId kPad = 33;       // context padding, always the last id
inline constexpr std::size_t kSize = 34;

inline constexpr TokenId digit(int d) { return kDigit0 + static_cast<TokenId>(d); }
inline constexpr TokenId step(int v) { return static_cast<TokenId>(static_cast<int>(kStepLow) + v + 9); }
std::string symbol(TokenId id);
}  // namespace vocab

/// One arithmetic problem `lhs op rhs` with a single-digit result and rhs <= kMaxRhs.
///
/// The prompt is laid out as [op, rhs, lhs]. The worked completion counts the
/// result out one unit at a time: a step token with the signed right operand,
/// then alternating value and remaining-count tokens until the count reaches
/// zero, then `<answer-marker> <digit> <end>`. For 3 + 2:
///   s+2 4 s+1 5 s+0 = 5 <eos>
/// The reference solution shown to the teacher is [signed operand, result];
/// the verifier only checks what follows the marker.
struct ToyTask {
    int lhs = 0;
    int rhs = 0;
    bool subtract = false;
    std::vector<TokenId> prompt;
    std::vector<TokenId> reference;
    std::vector<TokenId> answer;
    std::vector<TokenId> completion;

    int value() const { return subtract ? lhs - rhs : lhs + rhs; }
    std::string id() const;
};

// Largest right operand; keeps the worked completion within 16 tokens.
inline constexpr int kMaxRhs = 6;

ToyTask make_task(int lhs, int rhs, bool subtract);
std::vector<ToyTask> all_tasks();

class TaskGenerator {
public:
    explicit TaskGenerator(std::uint64_t seed);
    ToyTask next();
    std::vector<ToyTask> batch(std::size_t n);

private:
    std::vector<ToyTask> pool_;
    std::mt19937_64 rng_;
};

struct PolicyShape {
    std::size_t vocab_size = vocab::kSize;
    std::size_t context_window = 3;
    std::size_t privileged_slots = 2;

    std::size_t feature_dim() const { return (context_window + privileged_slots) * vocab_size; }
    bool operator==(const PolicyShape&) const = default;
};

/// Row-major (feature_dim x vocab_size) weight matrix of a linear-softmax policy.
struct PolicyParams {
    PolicyShape shape;
    std::vector<double> weights;

    static PolicyParams zeros(const PolicyShape& shape);
    double& at(std::size_t feature, std::size_t token) { return weights[feature * shape.vocab_size + token]; }
    double at(std::size_t feature, std::size_t token) const { return weights[feature * shape.vocab_size + token]; }
    bool operator==(const PolicyParams&) const = default;
};

struct TeacherState {
    PolicyParams params;
    TeacherSchedule schedule;
    bool operator==(const TeacherState&) const = default;
};

/// One-hot features of the last `context_window` tokens of prompt + history
/// (left-padded with id vocab_size - 1), followed by one-hot privileged slots. An absent or empty
/// `privileged` leaves the privileged slots at zero (the student view).
std::vector<double> encode_context(std::span<const TokenId> prompt, std::span<const TokenId> privileged,
                                   std::span<const TokenId> history, const PolicyShape& shape);

/// Numerically stable log-softmax of features^T * weights.
std::vector<double> log_softmax_dist(const PolicyParams& params, std::span<const double> features);

/// d log p(token) / d weights = features (x) (onehot(token) - p), same layout as weights.
std::vector<double> logprob_gradient(const PolicyParams& params, std::span<const double> features, TokenId token);

/// Uniform double in [0, 1) built from the top 53 bits of one engine draw.
double uniform01(std::mt19937_64& rng);

/// Categorical draw from log-probabilities at `temperature`; argmax when the
/// temperature is below 1e-6.
TokenId sample_token(std::span<const double> logprobs, double temperature, std::mt19937_64& rng);

/// True iff the tokens after the first answer marker (up to the end token)
/// equal the task's answer.
bool verify(std::span<const TokenId> completion, const ToyTask& task);

/// Samples one completion from the student and scores it.
///
/// Recorded log-probabilities are temperature-1 evaluations. The teacher sees
/// the reference solution in its privileged slots when
/// cfg.teacher_privileged is set.
RolloutTrace sample_rollout(const PolicyParams& student, const TeacherState& teacher, const ToyTask& task,
                            const TrainConfig& cfg, std::mt19937_64& rng);

std::vector<TokenId> greedy_decode(const PolicyParams& params, const ToyTask& task, std::size_t max_len,
                                   bool privileged = false);

struct GreedyEval {
    double accuracy = 0.0;  // fraction in [0, 1]
    double mean_len = 0.0;  // tokens
};

GreedyEval greedy_evaluate(const PolicyParams& params, std::span<const ToyTask> tasks, std::size_t max_len);
double greedy_accuracy(const PolicyParams& params, std::span<const ToyTask> tasks, std::size_t max_len);

/// Applies the teacher schedule after optimizer step `step` (1-based).
TeacherState teacher_update(TeacherState teacher, const PolicyParams& student, std::size_t step);

std::vector<TokenId> completion_tokens(const RolloutTrace& trace);

}  // namespace egrsd
