#pragma once

#include "egrsd/diagnostics.hpp"
#include "egrsd/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace egrsd {

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    bool reproducible = false;
    std::optional<std::filesystem::path> output_dir;
};

int cmd_train(const std::filesystem::path& config_path, const GlobalOptions& global, std::ostream& out,
              std::ostream& err);

struct GateCommand {
    std::filesystem::path trace_path;
    double gamma = 0.3;
    std::size_t window = 0;
    double floor = 0.1;
    double ceiling = 1.0;
    // 0 gates the whole file as one batch; N > 0 gates consecutive groups of
    // N records, each of which must carry a single batch index.
    std::size_t batch_size = 0;
};

/// Gates of every record, grouped as described by cmd.batch_size.
std::vector<std::vector<GateRow>> offline_gates(std::span<const RolloutTrace> traces, const GateCommand& cmd);

/// Writes gate.csv under the output directory.
int cmd_gate(const GateCommand& cmd, const GlobalOptions& global, std::ostream& out, std::ostream& err);

struct AnalyzeCommand {
    std::filesystem::path trace_path;
    RegimeThresholds thresholds;
    double gamma = 0.3;
    std::size_t window = 0;
    double epsilon = 0.2;
    double floor = 0.1;
};

/// Writes regime.csv and, with at least 10 tokens, decile.csv.
int cmd_analyze(const AnalyzeCommand& cmd, const GlobalOptions& global, std::ostream& out, std::ostream& err);

struct SweepCommand {
    std::filesystem::path config_path;
    std::vector<double> gammas;
    std::vector<std::size_t> windows;
};

struct SweepCell {
    double gamma = 0.0;
    std::size_t window = 0;
    Method method = Method::egrsd;
    bool ok = false;
    double accuracy = 0.0;  // percent
    double mean_len = 0.0;
    double token_efficiency = 0.0;
    std::string message;
};

inline constexpr const char* kSweepHeader = "gamma,window,method,status,accuracy,mean_len,token_efficiency,message";

/// Unique (gamma, window) cells in first-seen order.
std::vector<std::pair<double, std::size_t>> sweep_grid(std::span<const double> gammas, std::span<const std::size_t> windows);

/// Method used for a cell: a cl_egrsd base falls back to egrsd at W = 0;
/// any other base keeps its method.
Method cell_method(Method base, std::size_t window);

/// Writes sweep.csv under the output directory; a failing cell is recorded
/// and the grid continues. Exit 0 only when every cell succeeds.
int cmd_sweep(const SweepCommand& cmd, const GlobalOptions& global, std::ostream& out, std::ostream& err);

struct CheckCommand {
    std::size_t trials = 10000;
    bool inject_gate_floor_zero = false;
};

/// Writes check.csv under the output directory; exit 0 iff every check passes.
int cmd_check(const CheckCommand& cmd, const GlobalOptions& global, std::ostream& out, std::ostream& err);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(const std::string& text);

}  // namespace egrsd
