#include <doctest.h>

#include "egrsd/gate.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace egrsd;

namespace {

RolloutTrace trace_with_entropies(const std::vector<double>& h, const std::vector<bool>& mask = {}) {
    RolloutTrace t;
    for (std::size_t k = 0; k < h.size(); ++k) {
        TokenRecord tok;
        tok.teacher_entropy = h[k];
        tok.mask = mask.empty() ? true : mask[k];
        t.tokens.push_back(tok);
        if (tok.mask) ++t.completion_length;
    }
    return t;
}

}  // namespace

TEST_CASE("token_entropy") {
    CHECK(token_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(token_entropy(std::vector<double>{0.0, 1.0, 0.0}) == 0.0);
    CHECK(token_entropy(std::vector<double>{0.7, 0.2, 0.1}) == doctest::Approx(0.801819).epsilon(1e-6));
    CHECK_THROWS_AS(token_entropy(std::vector<double>{0.5, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(token_entropy(std::vector<double>{1.2, -0.2}), std::invalid_argument);
}

TEST_CASE("batch_normalize floors the denominator at one nat") {
    std::vector<RolloutTrace> batch{trace_with_entropies({0.5, 0.25})};
    auto view = make_entropy_view(batch);
    CHECK(view.batch_max == 0.5);
    CHECK(batch_normalize(view)[0] == std::vector<double>{0.5, 0.25});

    batch = {trace_with_entropies({2.0, 1.0})};
    CHECK(batch_normalize(make_entropy_view(batch))[0] == std::vector<double>{1.0, 0.5});

    batch = {trace_with_entropies({0.0, 0.0, 0.0})};
    CHECK(batch_normalize(make_entropy_view(batch))[0] == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("batch_normalize excludes masked positions") {
    std::vector<RolloutTrace> batch{trace_with_entropies({5.0, 2.0}, {false, true}), trace_with_entropies({1.0})};
    const auto view = make_entropy_view(batch);
    CHECK(view.batch_max == 2.0);
    const auto h = batch_normalize(view);
    CHECK(h[0] == std::vector<double>{0.0, 1.0});
    CHECK(h[1] == std::vector<double>{0.5});

    batch = {trace_with_entropies({1.0}, {false})};
    CHECK_THROWS_AS(batch_normalize(make_entropy_view(batch)), std::invalid_argument);
}

TEST_CASE("lookahead_min") {
    const std::vector<double> h{3.0, 0.2, 2.0};
    CHECK(lookahead_min(h, 0, 2, 3) == 0.2);
    for (std::size_t t = 0; t < h.size(); ++t) CHECK(lookahead_min(h, t, 0, 3) == h[t]);
    const std::vector<double> g{1.0, 0.5};
    CHECK(lookahead_min(g, 1, 5, 2) == 0.5);
    CHECK_THROWS_AS(lookahead_min(g, 2, 1, 2), std::out_of_range);
    CHECK(lookahead_min_all(h, 1) == std::vector<double>{0.2, 0.2, 2.0});
}

TEST_CASE("confidence_gate") {
    CHECK(confidence_gate(1.0, 0.3, 0.1, 1.0) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(confidence_gate(0.0, 0.7, 0.1, 1.0) == 1.0);
    CHECK(confidence_gate(0.95, 1.0, 0.1, 1.0) == 0.1);
    for (double h : {0.0, 0.3, 1.0, 2.5}) CHECK(confidence_gate(h, 0.0, 0.1, 1.0) == 1.0);
}

TEST_CASE("gate_batch shares the raw-entropy denominator") {
    std::vector<RolloutTrace> batch{trace_with_entropies({3.0, 0.0, 1.5}), trace_with_entropies({0.6})};
    const auto rows = gate_batch(batch, {0.3, 1, 0.1, 1.0});
    CHECK(rows[0][0].h_norm == 1.0);
    CHECK(rows[0][0].h_norm_cl == 0.0);
    CHECK(rows[0][0].omega == doctest::Approx(0.7));
    CHECK(rows[0][0].omega_cl == 1.0);
    CHECK(rows[0][2].h_norm_cl == 0.5);
    CHECK(rows[1][0].h_norm == doctest::Approx(0.2));
    for (const auto& r : rows) {
        for (const auto& g : r) CHECK(g.omega_cl >= g.omega);
    }
}

TEST_CASE("gate_batch lookahead skips masked positions") {
    std::vector<RolloutTrace> batch{trace_with_entropies({2.0, 0.0, 1.0}, {true, false, true})};
    const auto rows = gate_batch(batch, {0.5, 1, 0.1, 1.0});
    CHECK(rows[0][0].h_norm_cl == 0.5);
    CHECK(rows[0][1].h_norm == 0.0);
    CHECK(rows[0][1].omega == 1.0);
}

TEST_CASE("gate_batch with zero window reproduces the instantaneous gate exactly") {
    std::vector<RolloutTrace> batch{trace_with_entropies({0.3, 2.7, 1.1, 0.05}), trace_with_entropies({1.9, 0.4})};
    for (const auto& r : gate_batch(batch, {0.8, 0, 0.1, 1.0})) {
        for (const auto& g : r) {
            CHECK(g.h_norm_cl == g.h_norm);
            CHECK(g.omega_cl == g.omega);
        }
    }
}
