#include "egrsd/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Entropy-gated self-distillation lab"};
    app.require_subcommand(1);

    egrsd::GlobalOptions global;
    std::uint64_t seed = 0;
    std::string output_dir;
    auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config)");
    app.add_flag("--reproducible", global.reproducible, "Serial rollouts and deterministic outputs");
    auto* out_opt = app.add_option("--output-dir", output_dir, "Directory for artifacts");

    std::string train_config;
    auto* train = app.add_subcommand("train", "Run a training job from a config file");
    train->add_option("config", train_config, "Config file (flat JSON)")->required();

    egrsd::GateCommand gate;
    auto* gate_cmd = app.add_subcommand("gate", "Compute per-token gates for a trace file");
    gate_cmd->add_option("trace", gate.trace_path, "Trace file (JSONL)")->required();
    gate_cmd->add_option("--gamma", gate.gamma, "Gate slope")->capture_default_str();
    gate_cmd->add_option("--window", gate.window, "Lookahead window")->capture_default_str();
    gate_cmd->add_option("--floor", gate.floor, "Gate floor")->capture_default_str();
    gate_cmd->add_option("--batch-size", gate.batch_size, "Records per normalization batch (0: whole file)")
        ->capture_default_str();

    egrsd::AnalyzeCommand analyze;
    auto* analyze_cmd = app.add_subcommand("analyze", "Regime and entropy-decile reports for a trace file");
    analyze_cmd->add_option("trace", analyze.trace_path, "Trace file (JSONL)")->required();
    analyze_cmd->add_option("--tau-low", analyze.thresholds.tau_low, "Lock threshold")->capture_default_str();
    analyze_cmd->add_option("--tau-high", analyze.thresholds.tau_high, "Fork/pivot threshold")->capture_default_str();
    analyze_cmd->add_option("--gamma", analyze.gamma, "Gate slope")->capture_default_str();
    analyze_cmd->add_option("--window", analyze.window, "Lookahead window")->capture_default_str();
    analyze_cmd->add_option("--epsilon", analyze.epsilon, "Magnitude clip")->capture_default_str();

    egrsd::SweepCommand sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "Train one run per (gamma, window) cell");
    sweep_cmd->add_option("config", sweep.config_path, "Base config file")->required();
    sweep_cmd->add_option("--gammas", sweep.gammas, "Gamma values")->delimiter(',')->required();
    sweep_cmd->add_option("--windows", sweep.windows, "Window values")->delimiter(',')->required();

    egrsd::CheckCommand check;
    auto* check_cmd = app.add_subcommand("check", "Run the property suite");
    check_cmd->add_option("--trials", check.trials, "Randomized trials per check")->capture_default_str();
    check_cmd->add_flag("--inject-gate-floor-zero", check.inject_gate_floor_zero, "Run the gate with a zero floor");

    CLI11_PARSE(app, argc, argv);
    if (*seed_opt) global.seed = seed;
    if (*out_opt) global.output_dir = output_dir;

    if (*train) return egrsd::cmd_train(train_config, global, std::cout, std::cerr);
    if (*gate_cmd) return egrsd::cmd_gate(gate, global, std::cout, std::cerr);
    if (*analyze_cmd) return egrsd::cmd_analyze(analyze, global, std::cout, std::cerr);
    if (*sweep_cmd) return egrsd::cmd_sweep(sweep, global, std::cout, std::cerr);
    if (*check_cmd) return egrsd::cmd_check(check, global, std::cout, std::cerr);
    return 1;
}
