#include "egrsd/commands.hpp"

#include "egrsd/checks.hpp"
#include "egrsd/io.hpp"
#include "egrsd/policy.hpp"
#include "egrsd/trainer.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace egrsd {

namespace {

std::filesystem::path output_root(const GlobalOptions& global, const std::filesystem::path& fallback) {
    return global.output_dir.value_or(fallback);
}

RunConfig load_run_config(const std::filesystem::path& path, const GlobalOptions& global, std::ostream& err) {
    std::vector<std::string> warnings;
    auto cfg = read_config(path, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    if (global.seed) cfg.train.seed = *global.seed;
    if (global.reproducible) cfg.reproducible = true;
    if (global.output_dir) cfg.output_dir = global.output_dir->string();
    return cfg;
}

std::vector<RolloutTrace> load_traces(const std::filesystem::path& path, std::ostream& err) {
    std::vector<std::string> warnings;
    auto traces = read_traces(path, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    if (traces.empty()) throw std::invalid_argument(path.string() + ": no trace records");
    return traces;
}

}  // namespace

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) return text;
    std::string quoted = "\"";
    for (char c : text) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + '"';
}

int cmd_train(const std::filesystem::path& config_path, const GlobalOptions& global, std::ostream& out,
              std::ostream& err) {
    try {
        const auto cfg = load_run_config(config_path, global, err);
        validate_run_config(cfg);
        const auto art = run(cfg);
        out << "trained " << cfg.total_steps << " steps (" << to_string(cfg.train.method) << ") into " << cfg.output_dir
            << '\n';
        out << "final greedy accuracy " << std::fixed << std::setprecision(2) << 100.0 * art.final_accuracy << "% on "
            << cfg.eval_tasks << " tasks\n";
        return 0;
    } catch (const std::exception& e) {
        err << "train: " << e.what() << '\n';
        return 1;
    }
}

std::vector<std::vector<GateRow>> offline_gates(std::span<const RolloutTrace> traces, const GateCommand& cmd) {
    const GateParams params{cmd.gamma, cmd.window, cmd.floor, cmd.ceiling};
    if (cmd.batch_size == 0) return gate_batch(traces, params);

    std::vector<std::vector<GateRow>> rows;
    rows.reserve(traces.size());
    for (std::size_t start = 0; start < traces.size(); start += cmd.batch_size) {
        const auto group = traces.subspan(start, std::min(cmd.batch_size, traces.size() - start));
        for (const auto& t : group) {
            if (t.batch != group.front().batch) {
                throw std::invalid_argument("records " + std::to_string(start) + ".." +
                                            std::to_string(start + group.size() - 1) +
                                            " span several batches; check --batch-size");
            }
        }
        auto part = gate_batch(group, params);
        for (auto& r : part) rows.push_back(std::move(r));
    }
    return rows;
}

int cmd_gate(const GateCommand& cmd, const GlobalOptions& global, std::ostream& out, std::ostream& err) {
    try {
        if (cmd.gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");
        const auto traces = load_traces(cmd.trace_path, err);
        const auto rows = offline_gates(traces, cmd);
        std::ostringstream csv;
        write_gate_csv(csv, traces, rows);
        const auto path = output_root(global, ".") / "gate.csv";
        write_file(path, csv.str());
        out << "wrote " << path.string() << " (" << traces.size() << " records)\n";
        return 0;
    } catch (const std::exception& e) {
        err << "gate: " << e.what() << '\n';
        return 1;
    }
}

int cmd_analyze(const AnalyzeCommand& cmd, const GlobalOptions& global, std::ostream& out, std::ostream& err) {
    try {
        validate_thresholds(cmd.thresholds);
        const auto traces = load_traces(cmd.trace_path, err);
        const auto tokens = diagnostic_tokens(traces, {cmd.gamma, cmd.window, cmd.epsilon, cmd.floor, 1.0});
        const auto root = output_root(global, ".");

        std::ostringstream regime;
        write_regime_csv(regime, regime_report(tokens, cmd.gamma, cmd.floor, cmd.thresholds), cmd.thresholds, cmd.gamma,
                         cmd.window);
        write_file(root / "regime.csv", regime.str());
        out << "wrote " << (root / "regime.csv").string() << '\n';

        if (tokens.size() < 10) {
            err << "analyze: decile report needs at least 10 tokens, got " << tokens.size() << "; skipped\n";
            return 0;
        }
        std::ostringstream decile;
        write_decile_csv(decile, decile_report(tokens), cmd.thresholds, cmd.gamma, cmd.window);
        write_file(root / "decile.csv", decile.str());
        out << "wrote " << (root / "decile.csv").string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "analyze: " << e.what() << '\n';
        return 1;
    }
}

std::vector<std::pair<double, std::size_t>> sweep_grid(std::span<const double> gammas, std::span<const std::size_t> windows) {
    std::vector<std::pair<double, std::size_t>> cells;
    for (double g : gammas) {
        for (std::size_t w : windows) {
            const std::pair cell{g, w};
            if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
        }
    }
    return cells;
}

Method cell_method(Method base, std::size_t window) {
    if (base == Method::cl_egrsd && window == 0) return Method::egrsd;
    return base;
}

namespace {

std::string sweep_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream csv;
    csv << kSweepHeader << '\n';
    for (const auto& c : cells) {
        csv << format_double(c.gamma) << ',' << c.window << ',' << to_string(c.method) << ','
            << (c.ok ? "ok" : "failed") << ',';
        if (c.ok) {
            csv << format_double(c.accuracy) << ',' << format_double(c.mean_len) << ',' << format_double(c.token_efficiency);
        } else {
            csv << ",,";
        }
        csv << ',' << csv_field(c.message) << '\n';
    }
    return csv.str();
}

}  // namespace

int cmd_sweep(const SweepCommand& cmd, const GlobalOptions& global, std::ostream& out, std::ostream& err) {
    RunConfig base;
    try {
        if (cmd.gammas.empty() || cmd.windows.empty()) throw std::invalid_argument("gamma and window lists must be non-empty");
        base = load_run_config(cmd.config_path, global, err);
        // The cells override gamma, window and possibly method; check the rest.
        auto probe = base;
        probe.train.window = probe.train.method == Method::cl_egrsd ? 1 : 0;
        validate_run_config(probe);
    } catch (const std::exception& e) {
        err << "sweep: " << e.what() << '\n';
        return 1;
    }

    const std::filesystem::path root(base.output_dir);
    const auto csv_path = root / "sweep.csv";
    std::vector<SweepCell> cells;
    bool all_ok = true;
    for (const auto& [gamma, window] : sweep_grid(cmd.gammas, cmd.windows)) {
        SweepCell cell;
        cell.gamma = gamma;
        cell.window = window;
        cell.method = cell_method(base.train.method, window);
        try {
            auto cfg = base;
            cfg.train.gamma = gamma;
            cfg.train.window = window;
            cfg.train.method = cell.method;
            std::ostringstream dir;
            dir << "cell_g" << format_double(gamma) << "_w" << window;
            cfg.output_dir = (root / dir.str()).string();
            validate_run_config(cfg);
            const auto art = run(cfg);
            const auto eval = greedy_evaluate(art.final_state.student, evaluation_tasks(cfg.train.seed, cfg.eval_tasks),
                                              cfg.train.max_len);
            cell.ok = true;
            cell.accuracy = 100.0 * eval.accuracy;
            cell.mean_len = eval.mean_len;
            cell.token_efficiency = token_efficiency(cell.accuracy, eval.mean_len);
        } catch (const std::exception& e) {
            cell.message = e.what();
            all_ok = false;
            err << "sweep: cell gamma=" << format_double(gamma) << " window=" << window << " failed: " << e.what() << '\n';
        }
        cells.push_back(cell);
        try {
            write_file(csv_path, sweep_csv(cells));
        } catch (const std::exception& e) {
            err << "sweep: " << e.what() << '\n';
            return 1;
        }
    }
    out << "wrote " << csv_path.string() << " (" << cells.size() << " cells)\n";
    return all_ok ? 0 : 1;
}

int cmd_check(const CheckCommand& cmd, const GlobalOptions& global, std::ostream& out, std::ostream& err) {
    if (cmd.trials < 1) {
        err << "check: trials must be ≥ 1\n";
        return 2;
    }
    try {
        const auto results = run_property_suite({cmd.trials, global.seed.value_or(0), cmd.inject_gate_floor_zero});
        std::ostringstream csv;
        csv << "check,status,seconds,detail\n";
        std::vector<std::string> failed;
        for (const auto& r : results) {
            out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
            csv << r.name << ',' << (r.passed ? "pass" : "fail") << ',' << format_double(global.reproducible ? 0.0 : r.seconds)
                << ',' << csv_field(r.detail) << '\n';
            if (!r.passed) failed.push_back(r.name);
        }
        const auto path = output_root(global, ".") / "check.csv";
        write_file(path, csv.str());
        if (failed.empty()) {
            out << "all " << results.size() << " checks passed\n";
            return 0;
        }
        err << "check: " << failed.size() << " failed:";
        for (const auto& name : failed) err << ' ' << name;
        err << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "check: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace egrsd
