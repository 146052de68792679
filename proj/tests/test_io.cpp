#include <doctest.h>

#include "egrsd/checks.hpp"
#include "egrsd/io.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace egrsd;
namespace fs = std::filesystem;

namespace {

RolloutTrace sample_trace() {
    RolloutTrace t;
    t.prompt_id = "3+2";
    t.prompt = {10, 2, 3};
    t.reference = {23, 5};
    t.batch = 7;
    t.advantage = -0.125;
    TokenRecord a;
    a.token_id = 4;
    a.student_logprob = -0.1;
    a.teacher_logprob = -1.0 / 3.0;
    a.teacher_entropy = 0.7;
    a.teacher_probs = {0.25, 0.75};
    a.student_probs = {0.5, 0.5};
    TokenRecord b = a;
    b.mask = false;
    b.teacher_probs.clear();
    b.student_probs.clear();
    t.tokens = {a, b};
    t.completion_length = 1;
    t.correct = true;
    t.reward = 1.0 + 0.1 * 0.5;
    return t;
}

}  // namespace

TEST_CASE("format_double round-trips") {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 6.02214076e23}) {
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("trace record round-trip") {
    const auto t = sample_trace();
    const auto line = serialize_trace(t);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(parse_trace(line) == t);

    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i) {
        for (const auto& r : random_batch(rng, 3, 6, 9)) CHECK(parse_trace(serialize_trace(r)) == r);
    }
}

TEST_CASE("parse_trace reports unknown fields and rejects bad records") {
    std::string line = serialize_trace(sample_trace());
    line.insert(1, "\"extra\":1,");
    std::vector<std::string> warnings;
    CHECK(parse_trace(line, &warnings) == sample_trace());
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("extra") != std::string::npos);

    CHECK_THROWS_AS(parse_trace("{not json"), std::invalid_argument);
    CHECK_THROWS_AS(parse_trace("[1,2]"), std::invalid_argument);
    std::string v2 = serialize_trace(sample_trace());
    v2.replace(v2.find("\"v1\""), 4, "\"v2\"");
    CHECK_THROWS_WITH_AS(parse_trace(v2), "unsupported trace schema version 'v2'", std::invalid_argument);
    CHECK_THROWS_AS(parse_trace(R"({"v":"v1","prompt_id":"x"})"), std::invalid_argument);
}

TEST_CASE("trace files") {
    const fs::path p = "io_tmp/traces.jsonl";
    fs::remove_all("io_tmp");
    const std::vector<RolloutTrace> traces{sample_trace(), sample_trace()};
    write_traces(p, traces);
    CHECK(read_traces(p) == traces);
    write_file(p, serialize_trace(sample_trace()) + "\n\n{oops\n");
    CHECK_THROWS_WITH_AS(read_traces(p), doctest::Contains(":3:"), std::invalid_argument);
    CHECK_THROWS_AS(read_traces("io_tmp/missing.jsonl"), std::runtime_error);
}

TEST_CASE("config round-trip") {
    RunConfig cfg;
    cfg.train.gamma = 0.45;
    cfg.train.window = 5;
    cfg.train.method = Method::cl_egrsd;
    cfg.train.teacher_schedule = TeacherSchedule::hardcopy(20);
    cfg.train.seed = 99;
    cfg.total_steps = 40;
    cfg.output_dir = "runs/x";
    CHECK(parse_config(serialize_config(cfg)) == cfg);
}

TEST_CASE("parse_config defaults, warnings and errors") {
    std::vector<std::string> warnings;
    const auto cfg = parse_config(R"({"gamma": 0.5, "colour": "red"})", &warnings);
    CHECK(cfg.train.gamma == 0.5);
    CHECK(cfg.total_steps == RunConfig{}.total_steps);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("colour") != std::string::npos);

    CHECK_THROWS_AS(parse_config(R"({"gamma": "high"})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"method": "ppo"})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[]"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("{"), std::invalid_argument);
}

TEST_CASE("write_gate_csv") {
    const auto t = sample_trace();
    std::vector<std::vector<GateRow>> rows{{GateRow{0.7, 0.7, 0.7, 0.79, 0.79}, GateRow{}}};
    std::ostringstream out;
    write_gate_csv(out, std::vector<RolloutTrace>{t}, rows);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == kGateHeader);
    std::getline(in, line);
    CHECK(line == "0,3+2,0,4,1,0.7,0.7,0.7,0.79,0.79");
    std::getline(in, line);
    CHECK(line == "0,3+2,1,4,0,0,0,0,1,1");
    CHECK_THROWS_AS(write_gate_csv(out, std::vector<RolloutTrace>{}, rows), std::invalid_argument);
}

TEST_CASE("write_file names the path on failure") {
    fs::remove_all("io_block");
    write_file("io_block", "x");
    CHECK_THROWS_WITH_AS(write_file("io_block/sub/file.txt", "x"), doctest::Contains("io_block"), std::runtime_error);
    CHECK(read_file("io_block") == "x");
}
