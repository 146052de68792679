#include "egrsd/trainer.hpp"

#include "egrsd/gate.hpp"
#include "egrsd/io.hpp"
#include "egrsd/reward.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace egrsd {

OptimizerState OptimizerState::for_config(const TrainConfig& cfg, std::size_t parameter_count) {
    OptimizerState opt;
    opt.m.assign(parameter_count, 0.0);
    opt.v.assign(parameter_count, 0.0);
    opt.learning_rate = cfg.learning_rate;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.weight_decay = cfg.weight_decay;
    opt.epsilon = cfg.adam_epsilon;
    return opt;
}

void optimizer_step(OptimizerState& opt, std::vector<double>& params, std::span<const double> grad) {
    if (params.size() != grad.size()) throw std::invalid_argument("optimizer_step: parameter/gradient size mismatch");
    if (opt.m.size() != params.size()) {
        opt.m.assign(params.size(), 0.0);
        opt.v.assign(params.size(), 0.0);
    }
    ++opt.step;
    const double t = static_cast<double>(opt.step);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    const double decay = 1.0 - opt.learning_rate * opt.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grad[k];
        opt.m[k] = opt.beta1 * opt.m[k] + (1.0 - opt.beta1) * g;
        opt.v[k] = opt.beta2 * opt.v[k] + (1.0 - opt.beta2) * g * g;
        const double m_hat = opt.m[k] / bc1;
        const double v_hat = opt.v[k] / bc2;
        params[k] = params[k] * decay - opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
}

double global_norm(std::span<const double> grad) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    return std::sqrt(sq);
}

std::vector<double> clip_grad_norm(std::vector<double> grad, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip_grad_norm: max_norm must be positive");
    const double norm = global_norm(grad);
    if (norm <= max_norm) return grad;
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
    // Rounding can leave the rescaled norm a hair above the cap.
    while (global_norm(grad) > max_norm) {
        for (double& g : grad) g = std::nextafter(g, 0.0);
    }
    return grad;
}

std::vector<double> compute_gradient(const BatchCredit& credit, std::span<const RolloutTrace> traces,
                                     const PolicyParams& student) {
    if (credit.credits.size() != traces.size()) throw std::invalid_argument("compute_gradient: misaligned batch");
    const std::size_t vocab = student.shape.vocab_size;
    std::vector<double> grad(student.weights.size(), 0.0);
    std::size_t count = 0;
    std::vector<TokenId> history;

    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& trace = traces[i];
        if (credit.credits[i].size() != trace.tokens.size()) throw std::invalid_argument("compute_gradient: misaligned rollout");
        history.clear();
        for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
            const auto& tok = trace.tokens[t];
            if (tok.mask) {
                ++count;
                const auto features = encode_context(trace.prompt, {}, history, student.shape);
                const auto logp = log_softmax_dist(student, features);
                // Per-logit coefficient c_v; the weight gradient is features (x) c.
                std::vector<double> coeff(vocab);
                if (credit.distillation) {
                    if (tok.teacher_probs.size() != vocab) {
                        throw std::invalid_argument("compute_gradient: distillation needs teacher distributions");
                    }
                    for (std::size_t v = 0; v < vocab; ++v) coeff[v] = std::exp(logp[v]) - tok.teacher_probs[v];
                } else {
                    const double a_hat = credit.credits[i][t].advantage_token;
                    for (std::size_t v = 0; v < vocab; ++v) {
                        coeff[v] = -a_hat * ((v == tok.token_id ? 1.0 : 0.0) - std::exp(logp[v]));
                    }
                }
                for (std::size_t f = 0; f < features.size(); ++f) {
                    const double x = features[f];
                    if (x == 0.0) continue;
                    double* row = grad.data() + f * vocab;
                    for (std::size_t v = 0; v < vocab; ++v) row[v] += x * coeff[v];
                }
            }
            history.push_back(tok.token_id);
        }
    }
    if (count == 0) throw std::invalid_argument("compute_gradient: no completion tokens");
    if (!credit.distillation) {
        const double inv = 1.0 / static_cast<double>(count);
        for (double& g : grad) g *= inv;
    }
    return grad;
}

TrainState TrainState::initial(const PolicyParams& base, const TrainConfig& cfg) {
    TrainState state;
    state.student = base;
    state.teacher = TeacherState{base, cfg.teacher_schedule};
    state.optimizer = OptimizerState::for_config(cfg, base.weights.size());
    state.rng.seed(cfg.seed);
    return state;
}

std::vector<ToyTask> sample_tasks(std::mt19937_64& rng, std::size_t count) {
    static const std::vector<ToyTask> pool = all_tasks();
    std::vector<ToyTask> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(pool[rng() % pool.size()]);
    return out;
}

std::vector<ToyTask> evaluation_tasks(std::uint64_t seed, std::size_t count) {
    TaskGenerator gen(seed ^ 0x9e3779b97f4a7c15ULL);
    return gen.batch(count);
}

StepOutcome train_step(TrainState& state, std::span<const ToyTask> tasks, const TrainConfig& cfg,
                       bool parallel_rollouts) {
    if (tasks.empty()) throw std::invalid_argument("train_step: empty task batch");
    const auto started = std::chrono::steady_clock::now();
    const std::size_t step = state.step + 1;

    StepOutcome out;
    out.traces.resize(tasks.size());
    if (parallel_rollouts) {
        std::vector<std::uint64_t> seeds(tasks.size());
        for (auto& s : seeds) s = state.rng();
        const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), tasks.size()));
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < tasks.size(); i += workers) {
                    std::mt19937_64 local(seeds[i]);
                    out.traces[i] = sample_rollout(state.student, state.teacher, tasks[i], cfg, local);
                }
            });
        }
    } else {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            out.traces[i] = sample_rollout(state.student, state.teacher, tasks[i], cfg, state.rng);
        }
    }

    // Whitening sees only rewards from earlier steps.
    out.metrics.whiten_stats_count = state.reward_stats.count;
    std::vector<double> rewards;
    rewards.reserve(out.traces.size());
    for (auto& trace : out.traces) {
        trace.batch = static_cast<std::int64_t>(step);
        rewards.push_back(trace.reward);
        out.advantages.push_back(whiten(trace.reward, state.reward_stats, step));
        trace.advantage = out.advantages.back();
    }

    out.credit = assemble_batch(out.traces, out.advantages, cfg);
    auto grad = compute_gradient(out.credit, out.traces, state.student);
    out.metrics.grad_norm_preclip = global_norm(grad);
    grad = clip_grad_norm(std::move(grad), cfg.grad_clip_norm);
    out.metrics.grad_norm_postclip = global_norm(grad);

    optimizer_step(state.optimizer, state.student.weights, grad);
    state.teacher = teacher_update(std::move(state.teacher), state.student, step);
    state.reward_stats = welford_update(state.reward_stats, rewards);
    state.reward_stats.step = step;
    state.step = step;

    auto& m = out.metrics;
    m.step = step;
    m.loss = out.credit.loss_value;
    double gate_sum = 0.0;
    double mag_sum = 0.0;
    std::size_t tokens = 0;
    std::size_t correct = 0;
    double reward_sum = 0.0;
    double len_sum = 0.0;
    for (std::size_t i = 0; i < out.traces.size(); ++i) {
        const auto& trace = out.traces[i];
        reward_sum += trace.reward;
        len_sum += static_cast<double>(trace.completion_length);
        correct += trace.correct ? 1 : 0;
        for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
            if (!trace.tokens[t].mask) continue;
            gate_sum += out.credit.credits[i][t].gate;
            mag_sum += out.credit.credits[i][t].magnitude;
            ++tokens;
        }
    }
    const double n = static_cast<double>(out.traces.size());
    m.mean_reward = reward_sum / n;
    m.accuracy = static_cast<double>(correct) / n;
    m.mean_len = len_sum / n;
    m.mean_gate = gate_sum / static_cast<double>(tokens);
    m.mean_magnitude = mag_sum / static_cast<double>(tokens);
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return out;
}

PolicyParams pretrain_base(const PolicyShape& shape, std::size_t steps, std::uint64_t seed) {
    auto params = PolicyParams::zeros(shape);
    TrainConfig opt_cfg;
    opt_cfg.learning_rate = 0.05;
    auto opt = OptimizerState::for_config(opt_cfg, params.weights.size());
    std::mt19937_64 rng(seed ^ 0x0b5e0b5e0b5e0b5eULL);
    constexpr std::size_t kBatch = 32;

    for (std::size_t s = 0; s < steps; ++s) {
        const auto tasks = sample_tasks(rng, kBatch);
        std::vector<double> grad(params.weights.size(), 0.0);
        std::size_t count = 0;
        for (const auto& task : tasks) {
            std::vector<TokenId> history;
            for (TokenId tok : task.completion) {
                const auto features = encode_context(task.prompt, task.reference, history, shape);
                const auto g = logprob_gradient(params, features, tok);
                for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= g[k];
                ++count;
                history.push_back(tok);
            }
        }
        for (double& g : grad) g /= static_cast<double>(count);
        optimizer_step(opt, params.weights, grad);
    }
    return params;
}

namespace {

std::string join_numbers(const std::vector<double>& values) {
    std::string out;
    out.reserve(values.size() * 20);
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (k) out += ' ';
        out += format_double(values[k]);
    }
    return out;
}

std::vector<double> split_numbers(const std::string& line, std::size_t expected, const std::string& where) {
    std::vector<double> out;
    out.reserve(expected);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p < end) {
        while (p < end && *p == ' ') ++p;
        if (p == end) break;
        double v = 0.0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc{}) throw std::runtime_error("malformed number in snapshot section " + where);
        out.push_back(v);
        p = next;
    }
    if (out.size() != expected) throw std::runtime_error("snapshot section " + where + " has wrong length");
    return out;
}

}  // namespace

void save_snapshot(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg) {
    std::ostringstream rng_state;
    rng_state << state.rng;
    const auto& o = state.optimizer;
    nlohmann::json header = {
        {"format", "egrsd-snapshot"},
        {"version", 1},
        {"step", state.step},
        {"shape", {{"vocab_size", state.student.shape.vocab_size},
                   {"context_window", state.student.shape.context_window},
                   {"privileged_slots", state.student.shape.privileged_slots}}},
        {"parameter_count", state.student.weights.size()},
        {"reward_stats", {{"count", state.reward_stats.count}, {"mean", state.reward_stats.mean},
                          {"m2", state.reward_stats.m2}, {"step", state.reward_stats.step}}},
        {"optimizer", {{"step", o.step}, {"learning_rate", o.learning_rate}, {"beta1", o.beta1}, {"beta2", o.beta2},
                       {"weight_decay", o.weight_decay}, {"epsilon", o.epsilon}}},
        {"teacher_schedule", to_string(state.teacher.schedule)},
        {"method", std::string(to_string(cfg.method))},
        {"rng", rng_state.str()},
        {"sections", {"student", "teacher", "adam_m", "adam_v"}},
    };
    std::string out = header.dump() + '\n';
    for (const auto* section : {&state.student.weights, &state.teacher.params.weights, &o.m, &o.v}) {
        out += join_numbers(*section);
        out += '\n';
    }
    write_file(path, out);
}

TrainState load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open snapshot " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty snapshot " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad snapshot header in " + path.string() + ": " + e.what());
    }
    if (header.value("format", "") != "egrsd-snapshot") throw std::runtime_error("not a snapshot: " + path.string());

    TrainState state;
    PolicyShape shape;
    shape.vocab_size = header["shape"]["vocab_size"].get<std::size_t>();
    shape.context_window = header["shape"]["context_window"].get<std::size_t>();
    shape.privileged_slots = header["shape"]["privileged_slots"].get<std::size_t>();
    const auto count = header["parameter_count"].get<std::size_t>();
    state.step = header["step"].get<std::size_t>();
    const auto& rs = header["reward_stats"];
    state.reward_stats = {rs["count"].get<std::size_t>(), rs["mean"].get<double>(), rs["m2"].get<double>(),
                          rs["step"].get<std::size_t>()};
    const auto& o = header["optimizer"];
    state.optimizer.step = o["step"].get<std::size_t>();
    state.optimizer.learning_rate = o["learning_rate"].get<double>();
    state.optimizer.beta1 = o["beta1"].get<double>();
    state.optimizer.beta2 = o["beta2"].get<double>();
    state.optimizer.weight_decay = o["weight_decay"].get<double>();
    state.optimizer.epsilon = o["epsilon"].get<double>();
    state.teacher.schedule = parse_teacher_schedule(header["teacher_schedule"].get<std::string>());
    std::istringstream rng_state(header["rng"].get<std::string>());
    rng_state >> state.rng;

    std::vector<double>* sections[] = {&state.student.weights, &state.teacher.params.weights, &state.optimizer.m,
                                       &state.optimizer.v};
    const char* names[] = {"student", "teacher", "adam_m", "adam_v"};
    for (std::size_t s = 0; s < 4; ++s) {
        if (!std::getline(in, line)) throw std::runtime_error("snapshot " + path.string() + " truncated");
        *sections[s] = split_numbers(line, count, names[s]);
    }
    state.student.shape = shape;
    state.teacher.params.shape = shape;
    return state;
}

std::string format_metrics_row(const StepMetrics& m) {
    std::string row = std::to_string(m.step);
    for (double v : {m.loss, m.grad_norm_preclip, m.grad_norm_postclip, m.mean_reward, m.accuracy, m.mean_len,
                     m.mean_gate, m.mean_magnitude, m.wall_ms}) {
        row += ',';
        row += format_double(v);
    }
    return row;
}

namespace {

std::string step_tag(std::size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu", step);
    return buf;
}

// Keeps the header and rows up to `last_step` of an existing metrics file.
std::string truncated_metrics(const std::filesystem::path& path, std::size_t last_step) {
    std::string out = std::string(kMetricsHeader) + '\n';
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::size_t step = 0;
        auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), step);
        if (ec == std::errc{} && step <= last_step) out += line + '\n';
    }
    return out;
}

}  // namespace

RunArtifacts run(const RunConfig& cfg, const RunOptions& options) {
    validate_run_config(cfg);
    const auto& tc = cfg.train;
    const std::filesystem::path dir(cfg.output_dir);
    RunArtifacts art;
    art.metrics_csv = dir / "metrics.csv";

    TrainState state;
    if (options.resume_from) {
        state = load_snapshot(*options.resume_from);
        write_file(art.metrics_csv, truncated_metrics(art.metrics_csv, state.step));
    } else {
        const auto base = pretrain_base(PolicyShape{}, cfg.pretrain_steps, tc.seed);
        state = TrainState::initial(base, tc);
        write_file(art.metrics_csv, std::string(kMetricsHeader) + '\n');
        save_snapshot(dir / "snapshot_initial.txt", state, tc);
        write_file(dir / "config.json", serialize_config(cfg));
    }

    std::ofstream metrics_out(art.metrics_csv, std::ios::app | std::ios::binary);
    if (!metrics_out) throw std::runtime_error("cannot open " + art.metrics_csv.string());

    const std::size_t last = std::min(cfg.total_steps, options.stop_after.value_or(cfg.total_steps));
    while (state.step < last) {
        const auto tasks = sample_tasks(state.rng, cfg.batch_size);
        auto outcome = train_step(state, tasks, tc, !cfg.reproducible);
        if (cfg.reproducible) outcome.metrics.wall_ms = 0.0;
        metrics_out << format_metrics_row(outcome.metrics) << '\n';
        metrics_out.flush();
        if (!metrics_out) throw std::runtime_error("write failed for " + art.metrics_csv.string());

        if (state.step % cfg.checkpoint_interval == 0) {
            const auto tag = step_tag(state.step);
            const auto trace_path = dir / "traces" / ("step_" + tag + ".jsonl");
            write_traces(trace_path, outcome.traces);
            art.trace_dumps.push_back(trace_path);

            const auto rows = gate_batch(outcome.traces, {tc.gamma, tc.window, tc.gate_floor, tc.gate_ceiling});
            std::ostringstream gates;
            write_gate_csv(gates, outcome.traces, rows);
            write_file(dir / "traces" / ("gates_step_" + tag + ".csv"), gates.str());
            save_snapshot(dir / ("snapshot_step_" + tag + ".txt"), state, tc);
        }
        art.metrics.push_back(outcome.metrics);
    }

    art.final_snapshot = dir / "snapshot_final.txt";
    save_snapshot(art.final_snapshot, state, tc);
    art.final_accuracy = greedy_accuracy(state.student, evaluation_tasks(tc.seed, cfg.eval_tasks), tc.max_len);
    art.final_state = std::move(state);
    return art;
}

}  // namespace egrsd
