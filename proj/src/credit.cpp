#include "egrsd/credit.hpp"

#include "egrsd/gate.hpp"
#include "egrsd/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace egrsd {

namespace {

void check_normalized(const std::vector<double>& dist, const char* who) {
    double total = 0.0;
    for (double p : dist) {
        if (!std::isfinite(p) || p < 0.0) throw std::invalid_argument(std::string(who) + ": invalid probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument(std::string(who) + ": distribution not normalized");
}

BatchCredit assemble_distillation(std::span<const RolloutTrace> traces, const TrainConfig& cfg) {
    BatchCredit out;
    out.distillation = true;
    std::vector<std::vector<double>> teacher;
    std::vector<std::vector<double>> student;
    std::vector<bool> mask;
    const auto gates = gate_batch(traces, {cfg.gamma, cfg.window, cfg.gate_floor, cfg.gate_ceiling});
    out.credits.resize(traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i) {
        for (std::size_t t = 0; t < traces[i].tokens.size(); ++t) {
            const auto& tok = traces[i].tokens[t];
            if (tok.teacher_probs.empty() || tok.student_probs.empty()) {
                throw std::invalid_argument("assemble_batch: opsd requires full teacher and student distributions");
            }
            teacher.push_back(tok.teacher_probs);
            student.push_back(tok.student_probs);
            mask.push_back(tok.mask);
            TokenCredit c;
            c.delta = log_ratio(tok.teacher_logprob, tok.student_logprob);
            c.h_norm = gates[i][t].h_norm;
            c.h_norm_cl = gates[i][t].h_norm_cl;
            out.credits[i].push_back(c);
            if (tok.mask) ++out.token_count;
        }
    }
    if (out.token_count == 0) throw std::invalid_argument("assemble_batch: no completion tokens");
    out.loss_value = opsd_loss(teacher, student, mask);
    return out;
}

}  // namespace

double log_ratio(double teacher_logprob, double student_logprob) {
    if (!std::isfinite(teacher_logprob) || !std::isfinite(student_logprob)) {
        throw std::invalid_argument("log_ratio: non-finite log-probability");
    }
    return teacher_logprob - student_logprob;
}

double magnitude(int direction, double delta, double epsilon) {
    return std::clamp(std::exp(static_cast<double>(direction) * delta), 1.0 - epsilon, 1.0 + epsilon);
}

double token_advantage(double a_seq, double w, double omega) { return a_seq * w * omega; }

BatchCredit assemble_batch(std::span<const RolloutTrace> traces, std::span<const double> advantages,
                           const TrainConfig& cfg) {
    if (advantages.size() != traces.size()) throw std::invalid_argument("assemble_batch: advantages not aligned with traces");
    if (cfg.window > 0 && cfg.method != Method::cl_egrsd) {
        throw std::invalid_argument("assemble_batch: window > 0 requires method cl_egrsd");
    }
    if (cfg.method == Method::opsd) return assemble_distillation(traces, cfg);

    const auto gates = gate_batch(traces, {cfg.gamma, cfg.window, cfg.gate_floor, cfg.gate_ceiling});

    BatchCredit out;
    out.credits.resize(traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const double a = advantages[i];
        const int d = direction(a);
        auto& row = out.credits[i];
        row.reserve(traces[i].tokens.size());
        for (std::size_t t = 0; t < traces[i].tokens.size(); ++t) {
            const auto& tok = traces[i].tokens[t];
            const auto& g = gates[i][t];
            TokenCredit c;
            c.delta = log_ratio(tok.teacher_logprob, tok.student_logprob);
            c.direction = d;
            c.h_norm = g.h_norm;
            c.h_norm_cl = g.h_norm_cl;
            switch (cfg.method) {
                case Method::egrsd:
                    c.magnitude = magnitude(d, c.delta, cfg.epsilon);
                    c.gate = g.omega;
                    break;
                case Method::cl_egrsd:
                    c.magnitude = magnitude(d, c.delta, cfg.epsilon);
                    c.gate = g.omega_cl;
                    break;
                case Method::rlsd:
                    c.magnitude = magnitude(d, c.delta, cfg.epsilon);
                    c.gate = 1.0;
                    break;
                case Method::grpo:
                case Method::opsd:
                    c.magnitude = 1.0;
                    c.gate = 1.0;
                    break;
            }
            c.advantage_token = token_advantage(a, c.magnitude, c.gate);
            row.push_back(c);
            if (tok.mask) ++out.token_count;
        }
    }
    if (out.token_count == 0) throw std::invalid_argument("assemble_batch: no completion tokens");
    out.loss_value = recompute_advantage_loss(out, traces);
    return out;
}

double recompute_advantage_loss(const BatchCredit& credit, std::span<const RolloutTrace> traces) {
    if (credit.credits.size() != traces.size()) throw std::invalid_argument("recompute_advantage_loss: misaligned batch");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        if (credit.credits[i].size() != traces[i].tokens.size()) {
            throw std::invalid_argument("recompute_advantage_loss: misaligned rollout");
        }
        for (std::size_t t = 0; t < traces[i].tokens.size(); ++t) {
            const auto& tok = traces[i].tokens[t];
            if (!tok.mask) continue;
            sum += credit.credits[i][t].advantage_token * tok.student_logprob;
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("recompute_advantage_loss: no completion tokens");
    return -sum / static_cast<double>(count);
}

double opsd_loss(const std::vector<std::vector<double>>& teacher_dists,
                 const std::vector<std::vector<double>>& student_dists, const std::vector<bool>& mask) {
    if (teacher_dists.size() != student_dists.size() || teacher_dists.size() != mask.size()) {
        throw std::invalid_argument("opsd_loss: misaligned inputs");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < mask.size(); ++k) {
        if (!mask[k]) continue;
        const auto& pt = teacher_dists[k];
        const auto& ps = student_dists[k];
        if (pt.size() != ps.size()) throw std::invalid_argument("opsd_loss: vocabulary mismatch");
        check_normalized(pt, "opsd_loss teacher");
        check_normalized(ps, "opsd_loss student");
        for (std::size_t v = 0; v < pt.size(); ++v) {
            if (pt[v] == 0.0) continue;
            if (ps[v] == 0.0) {
                throw std::domain_error("opsd_loss: infinite KL at position " + std::to_string(k) + ", token " +
                                        std::to_string(v));
            }
            total += pt[v] * (std::log(pt[v]) - std::log(ps[v]));
        }
    }
    return std::max(total, 0.0);
}

}  // namespace egrsd
