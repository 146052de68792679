#include "egrsd/io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace egrsd {

using nlohmann::json;

namespace {

json token_to_json(const TokenRecord& tok) {
    json j = {
        {"token_id", tok.token_id},
        {"student_logprob", tok.student_logprob},
        {"teacher_logprob", tok.teacher_logprob},
        {"teacher_entropy", tok.teacher_entropy},
        {"mask", tok.mask},
    };
    if (!tok.teacher_probs.empty()) j["teacher_probs"] = tok.teacher_probs;
    if (!tok.student_probs.empty()) j["student_probs"] = tok.student_probs;
    return j;
}

template <typename T>
T required(const json& j, const char* key) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("trace record missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("trace field '") + key + "': " + e.what());
    }
}

void note_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where,
                  std::vector<std::string>* warnings) {
    if (warnings == nullptr) return;
    for (const auto& item : j.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || item.key() == k;
        if (!ok) warnings->push_back("ignoring unknown field '" + item.key() + "' in " + std::string(where));
    }
}

TokenRecord token_from_json(const json& j, std::vector<std::string>* warnings) {
    if (!j.is_object()) throw std::invalid_argument("token entry must be an object");
    note_unknown(j, {"token_id", "student_logprob", "teacher_logprob", "teacher_entropy", "mask", "teacher_probs", "student_probs"},
                 "token", warnings);
    TokenRecord tok;
    tok.token_id = required<TokenId>(j, "token_id");
    tok.student_logprob = required<double>(j, "student_logprob");
    tok.teacher_logprob = required<double>(j, "teacher_logprob");
    tok.teacher_entropy = required<double>(j, "teacher_entropy");
    tok.mask = j.contains("mask") ? required<bool>(j, "mask") : true;
    if (j.contains("teacher_probs")) tok.teacher_probs = required<std::vector<double>>(j, "teacher_probs");
    if (j.contains("student_probs")) tok.student_probs = required<std::vector<double>>(j, "student_probs");
    return tok;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, end);
}

std::string serialize_trace(const RolloutTrace& trace) {
    json tokens = json::array();
    for (const auto& tok : trace.tokens) tokens.push_back(token_to_json(tok));
    json j = {
        {"v", kTraceSchemaVersion},
        {"prompt_id", trace.prompt_id},
        {"batch", trace.batch},
        {"prompt", trace.prompt},
        {"reference", trace.reference},
        {"reward", trace.reward},
        {"correct", trace.correct},
        {"completion_length", trace.completion_length},
        {"tokens", std::move(tokens)},
    };
    if (trace.advantage) j["advantage"] = *trace.advantage;
    return j.dump();
}

RolloutTrace parse_trace(std::string_view line, std::vector<std::string>* warnings) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("trace record is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("trace record must be a JSON object");
    const auto version = required<std::string>(j, "v");
    if (version != kTraceSchemaVersion) throw std::invalid_argument("unsupported trace schema version '" + version + "'");
    note_unknown(j, {"v", "prompt_id", "batch", "prompt", "reference", "reward", "correct", "completion_length", "tokens", "advantage"},
                 "trace record", warnings);

    RolloutTrace trace;
    trace.prompt_id = required<std::string>(j, "prompt_id");
    if (j.contains("batch")) trace.batch = required<std::int64_t>(j, "batch");
    if (j.contains("prompt")) trace.prompt = required<std::vector<TokenId>>(j, "prompt");
    if (j.contains("reference")) trace.reference = required<std::vector<TokenId>>(j, "reference");
    trace.reward = required<double>(j, "reward");
    trace.correct = required<bool>(j, "correct");
    trace.completion_length = required<std::size_t>(j, "completion_length");
    if (j.contains("advantage")) trace.advantage = required<double>(j, "advantage");
    const auto& tokens = j.at("tokens");
    if (!tokens.is_array()) throw std::invalid_argument("trace field 'tokens' must be an array");
    for (const auto& t : tokens) trace.tokens.push_back(token_from_json(t, warnings));
    return trace;
}

void write_traces(const std::filesystem::path& path, std::span<const RolloutTrace> traces) {
    std::string out;
    for (const auto& trace : traces) {
        out += serialize_trace(trace);
        out += '\n';
    }
    write_file(path, out);
}

std::vector<RolloutTrace> read_traces(const std::filesystem::path& path, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file " + path.string());
    std::vector<RolloutTrace> traces;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            traces.push_back(parse_trace(line, warnings));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return traces;
}

RunConfig parse_config(std::string_view text, std::vector<std::string>* warnings) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config must be a flat JSON object");

    RunConfig cfg;
    auto& t = cfg.train;
    for (const auto& item : j.items()) {
        const auto& key = item.key();
        const auto& v = item.value();
        try {
            if (key == "gamma") t.gamma = v.get<double>();
            else if (key == "window") t.window = v.get<std::size_t>();
            else if (key == "epsilon") t.epsilon = v.get<double>();
            else if (key == "gate_floor") t.gate_floor = v.get<double>();
            else if (key == "gate_ceiling") t.gate_ceiling = v.get<double>();
            else if (key == "beta_length") t.beta_length = v.get<double>();
            else if (key == "max_len") t.max_len = v.get<std::size_t>();
            else if (key == "method") t.method = parse_method(v.get<std::string>());
            else if (key == "teacher_schedule") t.teacher_schedule = parse_teacher_schedule(v.get<std::string>());
            else if (key == "teacher_privileged") t.teacher_privileged = v.get<bool>();
            else if (key == "learning_rate") t.learning_rate = v.get<double>();
            else if (key == "beta1") t.beta1 = v.get<double>();
            else if (key == "beta2") t.beta2 = v.get<double>();
            else if (key == "weight_decay") t.weight_decay = v.get<double>();
            else if (key == "adam_epsilon") t.adam_epsilon = v.get<double>();
            else if (key == "grad_clip_norm") t.grad_clip_norm = v.get<double>();
            else if (key == "temperature") t.temperature = v.get<double>();
            else if (key == "seed") t.seed = v.get<std::uint64_t>();
            else if (key == "total_steps") cfg.total_steps = v.get<std::size_t>();
            else if (key == "batch_size") cfg.batch_size = v.get<std::size_t>();
            else if (key == "checkpoint_interval") cfg.checkpoint_interval = v.get<std::size_t>();
            else if (key == "eval_tasks") cfg.eval_tasks = v.get<std::size_t>();
            else if (key == "pretrain_steps") cfg.pretrain_steps = v.get<std::size_t>();
            else if (key == "output_dir") cfg.output_dir = v.get<std::string>();
            else if (key == "reproducible") cfg.reproducible = v.get<bool>();
            else if (warnings != nullptr) warnings->push_back("ignoring unknown config key '" + key + "'");
        } catch (const json::exception& e) {
            throw std::invalid_argument("config key '" + key + "': " + e.what());
        }
    }
    return cfg;
}

RunConfig read_config(const std::filesystem::path& path, std::vector<std::string>* warnings) {
    return parse_config(read_file(path), warnings);
}

std::string serialize_config(const RunConfig& cfg) {
    const auto& t = cfg.train;
    json j = {
        {"gamma", t.gamma},
        {"window", t.window},
        {"epsilon", t.epsilon},
        {"gate_floor", t.gate_floor},
        {"gate_ceiling", t.gate_ceiling},
        {"beta_length", t.beta_length},
        {"max_len", t.max_len},
        {"method", std::string(to_string(t.method))},
        {"teacher_schedule", to_string(t.teacher_schedule)},
        {"teacher_privileged", t.teacher_privileged},
        {"learning_rate", t.learning_rate},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"weight_decay", t.weight_decay},
        {"adam_epsilon", t.adam_epsilon},
        {"grad_clip_norm", t.grad_clip_norm},
        {"temperature", t.temperature},
        {"seed", t.seed},
        {"total_steps", cfg.total_steps},
        {"batch_size", cfg.batch_size},
        {"checkpoint_interval", cfg.checkpoint_interval},
        {"eval_tasks", cfg.eval_tasks},
        {"pretrain_steps", cfg.pretrain_steps},
        {"output_dir", cfg.output_dir},
        {"reproducible", cfg.reproducible},
    };
    return j.dump(2) + "\n";
}

void write_gate_csv(std::ostream& out, std::span<const RolloutTrace> traces,
                    const std::vector<std::vector<GateRow>>& rows) {
    if (rows.size() != traces.size()) throw std::invalid_argument("write_gate_csv: misaligned rows");
    out << kGateHeader << '\n';
    for (std::size_t i = 0; i < traces.size(); ++i) {
        for (std::size_t t = 0; t < traces[i].tokens.size(); ++t) {
            const auto& r = rows[i][t];
            out << i << ',' << traces[i].prompt_id << ',' << t << ',' << traces[i].tokens[t].token_id << ','
                << (traces[i].tokens[t].mask ? 1 : 0) << ',' << format_double(r.entropy) << ','
                << format_double(r.h_norm) << ',' << format_double(r.h_norm_cl) << ',' << format_double(r.omega)
                << ',' << format_double(r.omega_cl) << '\n';
        }
    }
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace egrsd
