#include <doctest.h>

#include "egrsd/theory.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace egrsd;

TEST_CASE("reference_curve and gamma_from_nsr") {
    CHECK(reference_curve(0.0, 5.0) == 1.0);
    CHECK(reference_curve(0.5, 3.0) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(gamma_from_nsr(1.0) == 0.5);
    CHECK(gamma_from_nsr(9.0) == 0.9);
    CHECK(gamma_from_nsr(0.0) == 0.0);
    CHECK_THROWS_AS(gamma_from_nsr(-1.0), std::invalid_argument);
}

TEST_CASE("chord_dominance_check") {
    const auto r = chord_dominance_check(1.0, 10001);
    CHECK(r.passed);
    CHECK(r.gamma == 0.5);
    CHECK(r.endpoint_error <= 1e-12);
    CHECK(r.min_gap >= -1e-12);
    CHECK(r.argmax_gap == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-4));
    for (double a0 : {0.1, 0.5, 3.0, 9.0}) {
        const auto q = chord_dominance_check(a0, 10000);
        CHECK(q.passed);
        CHECK(q.argmax_gap == doctest::Approx((std::sqrt(1.0 + a0) - 1.0) / a0).epsilon(1e-3));
    }
    const auto steep = chord_dominance_check(1.0, 10000, 0.6);
    CHECK_FALSE(steep.passed);
    CHECK(steep.endpoint_error == doctest::Approx(0.1).epsilon(1e-12));
    CHECK_THROWS_AS(chord_dominance_check(1.0, 2), std::invalid_argument);
}

TEST_CASE("apply_filter") {
    const std::vector<double> w{2.0, 0.5, 1.0};
    CHECK(apply_filter(FilterSpec::current_only(), w) == 2.0);
    CHECK(apply_filter(FilterSpec::window_min(), w) == 0.5);
    CHECK(apply_filter(FilterSpec::mix(0.5), w) == 1.25);
    CHECK(apply_filter(FilterSpec::window_mean(), w) == doctest::Approx(3.5 / 3.0));
    CHECK_THROWS_AS(apply_filter(FilterSpec::window_min(), std::vector<double>{}), std::invalid_argument);
    CHECK(FilterSpec::mix(0.25).name() == "mix(0.25)");
}

TEST_CASE("filter_family_audit") {
    std::mt19937_64 rng(21);
    for (std::size_t w : {1u, 3u, 5u, 7u}) {
        for (const auto& f : {FilterSpec::current_only(), FilterSpec::window_min(), FilterSpec::mix(0.3)}) {
            const auto r = filter_family_audit(f, 2000, w, rng);
            CHECK_MESSAGE(r.passed(), f.name() << " W=" << w << ": " << r.counterexample.value_or(""));
        }
    }
    const auto mean = filter_family_audit(FilterSpec::window_mean(), 2000, 3, rng);
    CHECK_FALSE(mean.conservative);
    CHECK(mean.counterexample.has_value());
    CHECK_THROWS_AS(filter_family_audit(FilterSpec::window_min(), 0, 3, rng), std::invalid_argument);
}

TEST_CASE("extremality_check") {
    std::mt19937_64 rng(22);
    const std::vector<FilterSpec> filters{FilterSpec::current_only(), FilterSpec::window_min(), FilterSpec::mix(0.5)};
    const auto r = extremality_check(filters, 5000, 0.3, 4, rng);
    CHECK(r.passed());
    CHECK(r.windows == 5000);
    CHECK(r.max_lower_bound_slack <= 1e-12);
    CHECK(r.max_recovery_slack <= 1e-12);
    const std::vector<FilterSpec> no_min{FilterSpec::current_only()};
    CHECK_THROWS_AS(extremality_check(no_min, 10, 0.3, 4, rng), std::invalid_argument);
}
