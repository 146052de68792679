#include <doctest.h>

#include "egrsd/credit.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace egrsd;

namespace {

// One rollout, two tokens: delta = [0, 0.5], raw entropy = [0, 1] (normalized [0, 1]).
std::vector<RolloutTrace> two_token_batch() {
    RolloutTrace t;
    TokenRecord a;
    a.token_id = 1;
    a.student_logprob = -1.0;
    a.teacher_logprob = -1.0;
    a.teacher_entropy = 0.0;
    TokenRecord b = a;
    b.token_id = 2;
    b.teacher_logprob = -0.5;
    b.teacher_entropy = 1.0;
    t.tokens = {a, b};
    t.completion_length = 2;
    t.correct = true;
    t.reward = 1.0;
    return {t};
}

std::vector<double> token_advantages(const BatchCredit& c) {
    std::vector<double> out;
    for (const auto& row : c.credits) {
        for (const auto& tc : row) out.push_back(tc.advantage_token);
    }
    return out;
}

}  // namespace

TEST_CASE("log_ratio") {
    CHECK(log_ratio(-1.0, -1.0) == 0.0);
    CHECK(log_ratio(-0.5, -1.0) == 0.5);
    CHECK(log_ratio(-2.0, -1.0) == -1.0);
    CHECK_THROWS_AS(log_ratio(-INFINITY, -1.0), std::invalid_argument);
}

TEST_CASE("magnitude") {
    CHECK(magnitude(1, 0.0, 0.2) == 1.0);
    CHECK(magnitude(1, 0.5, 0.2) == 1.2);
    CHECK(magnitude(-1, 0.5, 0.2) == 0.8);
    CHECK(magnitude(0, 3.0, 0.2) == 1.0);
}

TEST_CASE("token_advantage") {
    CHECK(token_advantage(1.0, 1.2, 0.7) == doctest::Approx(0.84).epsilon(1e-15));
    CHECK(token_advantage(0.0, 1.13, 0.42) == 0.0);
    CHECK(token_advantage(-0.5, 0.8, 1.0) == doctest::Approx(-0.4).epsilon(1e-15));
}

TEST_CASE("assemble_batch per method") {
    const auto batch = two_token_batch();
    const std::vector<double> adv{1.0};
    TrainConfig cfg;
    cfg.gamma = 0.3;

    const auto egrsd = assemble_batch(batch, adv, cfg);
    const auto a = token_advantages(egrsd);
    CHECK(a[0] == 1.0);
    CHECK(a[1] == doctest::Approx(0.84).epsilon(1e-15));
    CHECK(egrsd.token_count == 2);
    CHECK(egrsd.credits[0][1].delta == 0.5);
    CHECK(egrsd.credits[0][1].direction == 1);

    cfg.method = Method::grpo;
    CHECK(token_advantages(assemble_batch(batch, adv, cfg)) == std::vector<double>{1.0, 1.0});

    cfg.method = Method::rlsd;
    const auto rlsd = token_advantages(assemble_batch(batch, adv, cfg));
    CHECK(rlsd[0] == 1.0);
    CHECK(rlsd[1] == 1.2);

    // A calm token after the uncertain one restores its weight under the lookahead.
    auto tail = batch;
    tail[0].tokens.push_back(tail[0].tokens[0]);
    tail[0].completion_length = 3;
    cfg.method = Method::cl_egrsd;
    cfg.window = 4;
    const auto cl = token_advantages(assemble_batch(tail, adv, cfg));
    CHECK(cl[0] == 1.0);
    CHECK(cl[1] == 1.2);
    cfg.method = Method::egrsd;
    cfg.window = 0;
    CHECK(token_advantages(assemble_batch(tail, adv, cfg))[1] == doctest::Approx(0.84).epsilon(1e-15));
}

TEST_CASE("assemble_batch loss is the masked mean") {
    auto batch = two_token_batch();
    batch[0].tokens.push_back(batch[0].tokens[1]);
    batch[0].tokens.back().mask = false;
    TrainConfig cfg;
    const auto c = assemble_batch(batch, std::vector<double>{1.0}, cfg);
    CHECK(c.token_count == 2);
    const double expected = -(c.credits[0][0].advantage_token * -1.0 + c.credits[0][1].advantage_token * -1.0) / 2.0;
    CHECK(c.loss_value == expected);
    CHECK(recompute_advantage_loss(c, batch) == c.loss_value);
}

TEST_CASE("assemble_batch rejects mismatches") {
    const auto batch = two_token_batch();
    TrainConfig cfg;
    cfg.window = 2;
    CHECK_THROWS_AS(assemble_batch(batch, std::vector<double>{1.0}, cfg), std::invalid_argument);
    cfg.window = 0;
    CHECK_THROWS_AS(assemble_batch(batch, std::vector<double>{1.0, 2.0}, cfg), std::invalid_argument);
    auto masked = batch;
    for (auto& tok : masked[0].tokens) tok.mask = false;
    CHECK_THROWS_AS(assemble_batch(masked, std::vector<double>{1.0}, cfg), std::invalid_argument);
}

TEST_CASE("opsd_loss") {
    const std::vector<std::vector<double>> same{{0.2, 0.8}, {0.5, 0.5}};
    CHECK(opsd_loss(same, same, {true, true}) == 0.0);
    CHECK(opsd_loss({{1.0, 0.0}}, {{0.5, 0.5}}, {true}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(opsd_loss({{0.7, 0.3}}, {{0.5, 0.5}}, {true}) == doctest::Approx(0.082282).epsilon(1e-6));
    CHECK(opsd_loss({{0.7, 0.3}}, {{0.5, 0.5}}, {false}) == 0.0);
    CHECK_THROWS_AS(opsd_loss({{0.5, 0.5}}, {{1.0, 0.0}}, {true}), std::domain_error);
    CHECK_THROWS_AS(opsd_loss({{0.5, 0.6}}, {{0.5, 0.5}}, {true}), std::invalid_argument);
}

TEST_CASE("assemble_batch opsd mode uses the stored distributions") {
    auto batch = two_token_batch();
    batch[0].tokens[0].teacher_probs = {0.7, 0.3};
    batch[0].tokens[0].student_probs = {0.5, 0.5};
    batch[0].tokens[1].teacher_probs = {0.5, 0.5};
    batch[0].tokens[1].student_probs = {0.5, 0.5};
    TrainConfig cfg;
    cfg.method = Method::opsd;
    const auto c = assemble_batch(batch, std::vector<double>{0.0}, cfg);
    CHECK(c.distillation);
    CHECK(c.loss_value == doctest::Approx(0.082282).epsilon(1e-6));

    batch[0].tokens[1].teacher_probs.clear();
    CHECK_THROWS_AS(assemble_batch(batch, std::vector<double>{0.0}, cfg), std::invalid_argument);
}
