#pragma once

#include "egrsd/credit.hpp"
#include "egrsd/policy.hpp"
#include "egrsd/types.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace egrsd {

struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    double epsilon = 1e-8;

    static OptimizerState for_config(const TrainConfig& cfg, std::size_t parameter_count);
    bool operator==(const OptimizerState&) const = default;
};

/// AdamW with bias correction and decoupled weight decay:
///   p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
void optimizer_step(OptimizerState& opt, std::vector<double>& params, std::span<const double> grad);

double global_norm(std::span<const double> grad);

/// Rescales `grad` to norm `max_norm` when its L2 norm exceeds it.
std::vector<double> clip_grad_norm(std::vector<double> grad, double max_norm);

/// Gradient of the batch loss with respect to the student weights.
///
/// Advantage-weighted modes: -(1/N) sum m * A_hat * grad log p(token | student
/// view), with every A_hat a constant. Distillation mode: the gradient of the
/// summed KL(teacher || student), features (x) (p_student - p_teacher).
std::vector<double> compute_gradient(const BatchCredit& credit, std::span<const RolloutTrace> traces,
                                     const PolicyParams& student);

struct TrainState {
    PolicyParams student;
    TeacherState teacher;
    OptimizerState optimizer;
    RewardStats reward_stats;
    std::size_t step = 0;
    std::mt19937_64 rng;

    static TrainState initial(const PolicyParams& base, const TrainConfig& cfg);
    bool operator==(const TrainState&) const = default;
};

struct StepMetrics {
    std::size_t step = 0;
    double loss = 0.0;
    double grad_norm_preclip = 0.0;
    double grad_norm_postclip = 0.0;
    double mean_reward = 0.0;
    double accuracy = 0.0;
    double mean_len = 0.0;
    double mean_gate = 0.0;
    double mean_magnitude = 0.0;
    double wall_ms = 0.0;
    // Number of rewards in the running statistics when this step whitened.
    std::size_t whiten_stats_count = 0;
};

struct StepOutcome {
    StepMetrics metrics;
    std::vector<RolloutTrace> traces;
    std::vector<double> advantages;
    BatchCredit credit;
};

/// One training step: rollouts, rewards, whitening with pre-step statistics,
/// credit assembly, gradient, clipping, optimizer step, teacher schedule, and
/// finally the running reward statistics update.
///
/// `parallel_rollouts` fans rollouts out over threads with one random
/// substream per rollout; otherwise rollouts draw from the state's stream in
/// order.
StepOutcome train_step(TrainState& state, std::span<const ToyTask> tasks, const TrainConfig& cfg,
                       bool parallel_rollouts = false);

/// Supervised warm start on reference completions with the reference in the
/// privileged slots. The result serves as the shared initial weights of
/// student and teacher.
PolicyParams pretrain_base(const PolicyShape& shape, std::size_t steps, std::uint64_t seed);

/// Held-out evaluation tasks for a run seed.
std::vector<ToyTask> evaluation_tasks(std::uint64_t seed, std::size_t count);

std::vector<ToyTask> sample_tasks(std::mt19937_64& rng, std::size_t count);

// Snapshot: one JSON header line, then one line of numbers per section.
void save_snapshot(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg);
TrainState load_snapshot(const std::filesystem::path& path);

struct RunOptions {
    std::optional<std::filesystem::path> resume_from;
    // Stops after this many total steps (used to simulate interruption).
    std::optional<std::size_t> stop_after;
};

struct RunArtifacts {
    std::vector<StepMetrics> metrics;
    std::filesystem::path metrics_csv;
    std::vector<std::filesystem::path> trace_dumps;
    std::filesystem::path final_snapshot;
    double final_accuracy = 0.0;
    TrainState final_state;
};

/// Runs total_steps training steps under cfg.output_dir, writing metrics.csv,
/// traces/step_NNNNNN.jsonl (+ gates_step_NNNNNN.csv) and a snapshot every
/// checkpoint interval, and snapshot_final.txt at the end.
RunArtifacts run(const RunConfig& cfg, const RunOptions& options = {});

inline constexpr const char* kMetricsHeader =
    "step,loss,grad_norm_preclip,grad_norm_postclip,mean_reward,accuracy,mean_len,mean_gate,mean_magnitude,wall_ms";

std::string format_metrics_row(const StepMetrics& m);

}  // namespace egrsd
