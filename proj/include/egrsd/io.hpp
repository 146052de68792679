#pragma once

#include "egrsd/gate.hpp"
#include "egrsd/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace egrsd {

inline constexpr std::string_view kTraceSchemaVersion = "v1";

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// One JSON line per completion. Distribution vectors are written only when present.
std::string serialize_trace(const RolloutTrace& trace);

/// Parses one record. Unknown fields are skipped and reported in `warnings`.
/// Throws std::invalid_argument on malformed records or a schema version other than v1.
RolloutTrace parse_trace(std::string_view line, std::vector<std::string>* warnings = nullptr);

void write_traces(const std::filesystem::path& path, std::span<const RolloutTrace> traces);
std::vector<RolloutTrace> read_traces(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

/// Flat JSON object; keys mirror TrainConfig and RunConfig field names, with
/// method and teacher_schedule given as strings ("ema:0.99", "hardcopy:20").
/// Missing keys keep their defaults; unknown keys are reported in `warnings`.
RunConfig parse_config(std::string_view text, std::vector<std::string>* warnings = nullptr);
RunConfig read_config(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
std::string serialize_config(const RunConfig& cfg);

inline constexpr const char* kGateHeader = "rollout,prompt_id,position,token_id,mask,entropy,h_norm,h_norm_cl,omega,omega_cl";

/// Per-token gate table in the CSV layout of kGateHeader.
void write_gate_csv(std::ostream& out, std::span<const RolloutTrace> traces,
                    const std::vector<std::vector<GateRow>>& rows);

/// Writes `contents` to `path`, creating parent directories. Throws
/// std::runtime_error naming the path on failure.
void write_file(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace egrsd
