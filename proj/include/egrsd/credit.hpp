#pragma once

#include "egrsd/types.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace egrsd {

/// delta = log p_T - log p_S. The student term is a constant here: nothing in
/// this module is differentiated.
double log_ratio(double teacher_logprob, double student_logprob);

/// clip(exp(direction * delta), 1 - epsilon, 1 + epsilon).
double magnitude(int direction, double delta, double epsilon);

/// A * w * omega.
double token_advantage(double a_seq, double w, double omega);

struct BatchCredit {
    std::vector<std::vector<TokenCredit>> credits;
    double loss_value = 0.0;
    std::size_t token_count = 0;
    // Set for the opsd objective, whose loss is the summed teacher->student KL
    // rather than the advantage-weighted masked mean.
    bool distillation = false;

    bool operator==(const BatchCredit&) const = default;
};

/// Token credits and loss for one minibatch.
///
/// Every mode records delta, h_norm and h_norm_cl; the mode decides which of
/// the magnitude and gate are active:
///   egrsd     w from the log-ratio, gate on h_norm
///   cl_egrsd  w from the log-ratio, gate on h_norm_cl (lookahead cfg.window)
///   rlsd      w from the log-ratio, gate = 1
///   grpo      w = 1, gate = 1
///   opsd      loss = opsd_loss over the stored distributions, advantages unused
///
/// Throws std::invalid_argument on misaligned advantages, an empty completion
/// set, or a positive window for a method other than cl_egrsd.
BatchCredit assemble_batch(std::span<const RolloutTrace> traces, std::span<const double> advantages,
                           const TrainConfig& cfg);

/// -(1/N) sum m * A_hat * student_logprob, folded left to right over the stored tokens.
double recompute_advantage_loss(const BatchCredit& credit, std::span<const RolloutTrace> traces);

/// Sum over mask-true positions of KL(teacher || student) in nats.
/// Throws std::domain_error when the student assigns zero probability to a
/// token the teacher supports.
double opsd_loss(const std::vector<std::vector<double>>& teacher_dists,
                 const std::vector<std::vector<double>>& student_dists, const std::vector<bool>& mask);

}  // namespace egrsd
