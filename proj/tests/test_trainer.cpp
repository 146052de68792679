#include <doctest.h>

#include "egrsd/io.hpp"
#include "egrsd/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace egrsd;
namespace fs = std::filesystem;

namespace {

RunConfig small_run(const std::string& dir) {
    RunConfig cfg;
    cfg.total_steps = 6;
    cfg.batch_size = 4;
    cfg.checkpoint_interval = 3;
    cfg.eval_tasks = 20;
    cfg.pretrain_steps = 20;
    cfg.reproducible = true;
    cfg.output_dir = dir;
    cfg.train.seed = 5;
    return cfg;
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("optimizer_step first AdamW step moves by the learning rate") {
    OptimizerState opt;
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.5, -3.0, 0.0};
    optimizer_step(opt, p, g);
    CHECK(opt.step == 1);
    CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-9));
    CHECK(p[2] == 0.5);

    OptimizerState decay;
    decay.weight_decay = 0.1;
    std::vector<double> q{2.0};
    optimizer_step(decay, q, std::vector<double>{0.0});
    CHECK(q[0] == doctest::Approx(2.0 * (1.0 - 0.01 * 0.1)).epsilon(1e-15));

    CHECK_THROWS_AS(optimizer_step(opt, p, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("clip_grad_norm") {
    CHECK(global_norm(std::vector<double>{3.0, 4.0}) == 5.0);
    const auto c = clip_grad_norm({3.0, 4.0}, 0.1);
    CHECK(global_norm(c) <= 0.1);
    CHECK(c[0] == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(0.08).epsilon(1e-12));
    CHECK(clip_grad_norm({0.03, 0.04}, 0.1) == std::vector<double>{0.03, 0.04});
    CHECK_THROWS_AS(clip_grad_norm({1.0}, 0.0), std::invalid_argument);

    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> g(50);
        for (auto& x : g) x = (uniform01(rng) - 0.5) * std::pow(10.0, static_cast<double>(i % 7));
        CHECK(global_norm(clip_grad_norm(g, 0.1)) <= 0.1);
    }
}

TEST_CASE("compute_gradient matches the per-token sum") {
    const auto base = pretrain_base(PolicyShape{}, 5, 1);
    TrainConfig cfg;
    auto state = TrainState::initial(base, cfg);
    std::mt19937_64 rng(9);
    const auto tasks = sample_tasks(rng, 3);
    std::vector<RolloutTrace> traces;
    for (const auto& t : tasks) traces.push_back(sample_rollout(state.student, state.teacher, t, cfg, rng));
    const std::vector<double> adv{1.0, -0.5, 0.25};
    const auto credit = assemble_batch(traces, adv, cfg);
    const auto grad = compute_gradient(credit, traces, state.student);

    std::vector<double> expected(grad.size(), 0.0);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        std::vector<TokenId> history;
        for (std::size_t t = 0; t < traces[i].tokens.size(); ++t) {
            const auto& tok = traces[i].tokens[t];
            const auto f = encode_context(traces[i].prompt, {}, history, base.shape);
            const auto g = logprob_gradient(state.student, f, tok.token_id);
            for (std::size_t k = 0; k < g.size(); ++k) {
                expected[k] -= credit.credits[i][t].advantage_token * g[k] / static_cast<double>(credit.token_count);
            }
            history.push_back(tok.token_id);
        }
    }
    double err = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) err = std::max(err, std::abs(grad[k] - expected[k]));
    CHECK(err < 1e-12);
}

TEST_CASE("train_step is reproducible and whitens with earlier statistics") {
    const auto base = pretrain_base(PolicyShape{}, 20, 2);
    TrainConfig cfg;
    cfg.seed = 4;
    auto a = TrainState::initial(base, cfg);
    auto b = TrainState::initial(base, cfg);
    std::mt19937_64 ra(1);
    std::mt19937_64 rb(1);
    for (int s = 0; s < 12; ++s) {
        const auto ta = sample_tasks(ra, 8);
        const auto tb = sample_tasks(rb, 8);
        const auto oa = train_step(a, ta, cfg);
        const auto ob = train_step(b, tb, cfg);
        CHECK(oa.traces == ob.traces);
        CHECK(oa.metrics.whiten_stats_count == static_cast<std::size_t>(8 * s));
        CHECK(oa.metrics.grad_norm_postclip <= cfg.grad_clip_norm);
        if (s < 10) {
            for (std::size_t i = 0; i < oa.traces.size(); ++i) CHECK(oa.advantages[i] == oa.traces[i].reward - 0.5);
        }
    }
    CHECK(a == b);
    CHECK(a.step == 12);
    CHECK(a.reward_stats.count == 96);
}

TEST_CASE("parallel rollouts are deterministic for a seed") {
    const auto base = pretrain_base(PolicyShape{}, 10, 2);
    TrainConfig cfg;
    auto a = TrainState::initial(base, cfg);
    auto b = TrainState::initial(base, cfg);
    std::mt19937_64 rng(1);
    const auto tasks = sample_tasks(rng, 16);
    CHECK(train_step(a, tasks, cfg, true).traces == train_step(b, tasks, cfg, true).traces);
}

TEST_CASE("frozen teacher stays fixed") {
    const auto base = pretrain_base(PolicyShape{}, 10, 3);
    TrainConfig cfg;
    auto state = TrainState::initial(base, cfg);
    std::mt19937_64 rng(1);
    for (int s = 0; s < 5; ++s) train_step(state, sample_tasks(rng, 4), cfg);
    CHECK(state.teacher.params == base);
    CHECK(state.student != base);
}

TEST_CASE("snapshot round-trip") {
    const fs::path dir = "trainer_snapshot";
    fs::remove_all(dir);
    const auto base = pretrain_base(PolicyShape{}, 5, 3);
    TrainConfig cfg;
    cfg.teacher_schedule = TeacherSchedule::ema(0.9);
    auto state = TrainState::initial(base, cfg);
    std::mt19937_64 rng(1);
    for (int s = 0; s < 3; ++s) train_step(state, sample_tasks(rng, 4), cfg);
    save_snapshot(dir / "s.txt", state, cfg);
    CHECK(load_snapshot(dir / "s.txt") == state);
    write_file(dir / "bad.txt", "not a snapshot\n");
    CHECK_THROWS(load_snapshot(dir / "bad.txt"));
}

TEST_CASE("run with zero steps writes the initial snapshot only") {
    auto cfg = small_run("trainer_zero");
    fs::remove_all(cfg.output_dir);
    cfg.total_steps = 0;
    const auto art = run(cfg);
    CHECK(art.metrics.empty());
    CHECK(art.trace_dumps.empty());
    CHECK(fs::exists(fs::path(cfg.output_dir) / "snapshot_initial.txt"));
    CHECK(line_count(art.metrics_csv) == 1);
}

TEST_CASE("run dumps traces at every checkpoint") {
    auto cfg = small_run("trainer_dumps");
    fs::remove_all(cfg.output_dir);
    cfg.total_steps = 12;
    const auto art = run(cfg);
    CHECK(art.trace_dumps.size() == 4);
    for (const auto& p : art.trace_dumps) CHECK(read_traces(p).size() == cfg.batch_size);
    CHECK(fs::exists(fs::path(cfg.output_dir) / "traces" / "gates_step_000012.csv"));
    CHECK(line_count(art.metrics_csv) == 13);
    CHECK(art.final_accuracy >= 0.0);
    CHECK(art.final_accuracy <= 1.0);
}

TEST_CASE("resume reproduces an uninterrupted run") {
    auto full_cfg = small_run("trainer_full");
    auto split_cfg = small_run("trainer_split");
    fs::remove_all(full_cfg.output_dir);
    fs::remove_all(split_cfg.output_dir);
    const auto full = run(full_cfg);
    run(split_cfg, {std::nullopt, 3});
    const auto resumed = run(split_cfg, {fs::path(split_cfg.output_dir) / "snapshot_step_000003.txt", std::nullopt});
    CHECK(resumed.final_state == full.final_state);
    CHECK(read_file(resumed.metrics_csv) == read_file(full.metrics_csv));
    CHECK(resumed.final_accuracy == full.final_accuracy);
}

TEST_CASE("format_metrics_row has one field per header column") {
    StepMetrics m;
    m.step = 3;
    const auto row = format_metrics_row(m);
    CHECK(std::count(row.begin(), row.end(), ',') == 9);
    CHECK(row.rfind("3,", 0) == 0);
}
