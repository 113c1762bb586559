// SPDX-License-Identifier: Apache-2.0
//
// heatkv command-line tool. Talks to the library exclusively through the
// public C API in heatkv/heatkv.h.
//
// Exit codes: 0 success, 1 verification or budget-violation failure,
// 2 usage/validation error.

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <future>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "heatkv/heatkv.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailure = 1;
constexpr int kExitUsage = 2;

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("HEATKV_LOG");
        if (env == nullptr) return 0;
        const std::string value(env);
        if (value == "debug") return 2;
        if (value == "info") return 1;
        return 0;
    }();
    return level;
}

void log_info(const std::string& message) {
    if (log_level() >= 1) {
        std::cerr << "heatkv: " << message << "\n";
    }
}

/// Failure carrying the exit code; thrown by command bodies.
struct CommandError {
    int exit_code;
    std::string message;
};

void check(heatkv_status status, const char* what) {
    if (status != HEATKV_OK) {
        throw CommandError{kExitUsage,
                           std::string(what) + ": " + heatkv_status_name(status) + ": " + heatkv_last_error()};
    }
}

struct StringDeleter {
    void operator()(char* p) const { heatkv_string_free(p); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

struct ConfigDeleter {
    void operator()(heatkv_config* p) const { heatkv_config_free(p); }
};
using OwnedConfig = std::unique_ptr<heatkv_config, ConfigDeleter>;

struct ScoresDeleter {
    void operator()(heatkv_scores* p) const { heatkv_scores_free(p); }
};
using OwnedScores = std::unique_ptr<heatkv_scores, ScoresDeleter>;

struct ScheduleDeleter {
    void operator()(heatkv_schedule* p) const { heatkv_schedule_free(p); }
};
using OwnedSchedule = std::unique_ptr<heatkv_schedule, ScheduleDeleter>;

struct ReportDeleter {
    void operator()(heatkv_report* p) const { heatkv_report_free(p); }
};
using OwnedReport = std::unique_ptr<heatkv_report, ReportDeleter>;

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CommandError{kExitUsage, "cannot open " + out_path + " for writing"};
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw CommandError{kExitUsage, "write failure on " + out_path};
    }
}

std::vector<std::string> split_budget_list(const std::string& list) {
    std::vector<std::string> parts;
    std::stringstream stream(list);
    std::string part;
    while (std::getline(stream, part, ',')) {
        if (!part.empty()) {
            parts.push_back(part);
        }
    }
    if (parts.empty()) {
        throw CommandError{kExitUsage, "--budget lists no fractions"};
    }
    return parts;
}

double parse_fraction(const std::string& text) {
    try {
        size_t used = 0;
        const double value = std::stod(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return value;
    } catch (const std::exception&) {
        throw CommandError{kExitUsage, "budget fraction \"" + text + "\" is not a number"};
    }
}

std::string budget_out_path(const std::string& pattern, const std::string& budget, bool multi) {
    const std::string placeholder = "{budget}";
    const size_t pos = pattern.find(placeholder);
    if (pos == std::string::npos) {
        if (multi) {
            throw CommandError{kExitUsage, "--out must contain {budget} when --budget lists several fractions"};
        }
        return pattern;
    }
    std::string out = pattern;
    out.replace(pos, placeholder.size(), budget);
    return out;
}

heatkv_mode parse_mode(const std::string& name) {
    if (name == "binary") return HEATKV_MODE_BINARY;
    if (name == "scale") return HEATKV_MODE_SCALE;
    throw CommandError{kExitUsage, "unknown --mode \"" + name + "\" (expected binary or scale)"};
}

heatkv_accounting parse_accounting(const std::string& name) {
    if (name == "paper") return HEATKV_ACCOUNTING_PAPER;
    if (name == "tight") return HEATKV_ACCOUNTING_TIGHT;
    throw CommandError{kExitUsage, "unknown --accounting \"" + name + "\" (expected paper or tight)"};
}

int run_calibrate(const std::string& traces, int sinks, const std::string& out) {
    heatkv_scores* raw = nullptr;
    check(heatkv_calibrate(traces.c_str(), sinks, &raw), "calibrate");
    OwnedScores scores(raw);
    check(heatkv_scores_write_file(scores.get(), out.c_str()), "write scores");
    log_info("scores written to " + out);
    return kExitOk;
}

int run_synth(const std::string& config_path, const std::string& pattern, std::uint64_t seed, int samples,
              const std::string& level, int sinks, const std::string& out_dir) {
    OwnedConfig config;
    if (sinks >= 0) {
        // Patch the sink count before handing the config to the library.
        std::ifstream in(config_path, std::ios::binary);
        if (!in) {
            throw CommandError{kExitUsage, "cannot open " + config_path + " for reading"};
        }
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw CommandError{kExitUsage, config_path + " is not a JSON config"};
        }
        j["sink_count"] = sinks;
        heatkv_config* patched = nullptr;
        check(heatkv_config_from_json(j.dump().c_str(), &patched), "load config");
        config.reset(patched);
    } else {
        heatkv_config* raw = nullptr;
        check(heatkv_config_from_file(config_path.c_str(), &raw), "load config");
        config.reset(raw);
    }
    check(heatkv_synth_traces(config.get(), pattern.c_str(), seed, samples, level.c_str(), out_dir.c_str()),
          "synthesize traces");
    log_info("trace directory written to " + out_dir);
    return kExitOk;
}

int run_plan(const std::string& scores_path, const std::string& budgets, const std::string& mode_name,
             const std::string& accounting_name, const std::string& out_pattern) {
    const heatkv_mode mode = parse_mode(mode_name);
    const heatkv_accounting accounting = parse_accounting(accounting_name);
    const std::vector<std::string> budget_list = split_budget_list(budgets);

    heatkv_scores* raw = nullptr;
    check(heatkv_scores_read_file(scores_path.c_str(), &raw), "load scores");
    OwnedScores scores(raw);

    // Budget sweeps fan out over independent workers; the scores handle is
    // shared read-only.
    std::vector<std::future<std::string>> workers;
    for (const std::string& budget_text : budget_list) {
        const double fraction = parse_fraction(budget_text);
        const std::string out_path = budget_out_path(out_pattern, budget_text, budget_list.size() > 1);
        workers.push_back(std::async(std::launch::async, [&scores, fraction, mode, accounting, out_path]() {
            heatkv_schedule* schedule_raw = nullptr;
            heatkv_status status = heatkv_plan(scores.get(), fraction, mode, accounting, &schedule_raw);
            if (status != HEATKV_OK) {
                throw CommandError{kExitUsage, std::string("plan: ") + heatkv_status_name(status) + ": " +
                                                   heatkv_last_error()};
            }
            OwnedSchedule schedule(schedule_raw);
            status = heatkv_schedule_write_file(schedule.get(), out_path.c_str());
            if (status != HEATKV_OK) {
                throw CommandError{kExitUsage, std::string("write schedule: ") + heatkv_status_name(status) + ": " +
                                                   heatkv_last_error()};
            }
            return out_path;
        }));
    }
    for (auto& worker : workers) {
        log_info("schedule written to " + worker.get());
    }
    return kExitOk;
}

int run_simulate(const std::string& schedule_path, const std::string& format, long long batch,
                 const std::string& out) {
    if (format != "json" && format != "csv") {
        throw CommandError{kExitUsage, "unknown --format \"" + format + "\" (expected json or csv)"};
    }
    heatkv_schedule* schedule_raw = nullptr;
    check(heatkv_schedule_read_file(schedule_path.c_str(), &schedule_raw), "load schedule");
    OwnedSchedule schedule(schedule_raw);

    heatkv_report* report_raw = nullptr;
    check(heatkv_simulate(schedule.get(), batch, &report_raw), "simulate");
    OwnedReport report(report_raw);

    char* text_raw = nullptr;
    if (format == "json") {
        check(heatkv_report_to_json(report.get(), &text_raw), "render report");
    } else {
        check(heatkv_report_to_csv(report.get(), &text_raw), "render report");
    }
    OwnedString text(text_raw);
    emit(text.get(), out);

    const int violations = heatkv_report_num_violations(report.get());
    if (violations > 0) {
        std::cerr << "heatkv: simulate found " << violations << " budget violation(s)\n";
        return kExitVerifyFailure;
    }
    return kExitOk;
}

int run_verify(const std::string& schedule_path, int max_candidates, const std::string& out) {
    heatkv_schedule* schedule_raw = nullptr;
    check(heatkv_schedule_read_file(schedule_path.c_str(), &schedule_raw), "load schedule");
    OwnedSchedule schedule(schedule_raw);

    char* text_raw = nullptr;
    int pass = 0;
    check(heatkv_verify_schedule(schedule.get(), max_candidates, &text_raw, &pass), "verify");
    OwnedString text(text_raw);
    emit(text.get(), out);
    if (pass == 0) {
        std::cerr << "heatkv: verify found early-eviction sets away from the oracle optimum\n";
        return kExitVerifyFailure;
    }
    return kExitOk;
}

int run_heatmap(const std::string& schedule_path, int scale, const std::string& out) {
    heatkv_schedule* schedule_raw = nullptr;
    check(heatkv_schedule_read_file(schedule_path.c_str(), &schedule_raw), "load schedule");
    OwnedSchedule schedule(schedule_raw);

    char* text_raw = nullptr;
    check(heatkv_heatmap_csv(schedule.get(), scale, &text_raw), "render heatmap");
    OwnedString text(text_raw);
    emit(text.get(), out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Head-granular KV-cache pruning schedules for next-scale autoregressive transformers"};
    app.require_subcommand(1);

    std::string traces_dir;
    std::string config_path;
    std::string scores_path;
    std::string schedule_path;
    std::string out_path;
    std::string pattern = "uniform";
    std::string level = "raw";
    std::string budgets = "1.0";
    std::string mode_name = "scale";
    std::string accounting_name = "paper";
    std::string format = "json";
    std::uint64_t seed = 0;
    int sinks = -1;
    int samples = 1;
    int scale = 1;
    int max_candidates = 20;
    long long batch = 1;

    CLI::App* calibrate = app.add_subcommand("calibrate", "Aggregate a trace directory into importance scores");
    calibrate->add_option("--traces", traces_dir, "Trace directory with manifest.json")->required();
    calibrate->add_option("--sinks", sinks, "Override the manifest's sink scale count");
    calibrate->add_option("--out", out_path, "Scores file to write")->required();

    CLI::App* synth = app.add_subcommand("synth", "Synthesize a calibration trace directory");
    synth->add_option("--config", config_path, "Config JSON file")->required();
    synth->add_option("--pattern", pattern,
                      "early_scale|local_recent|local_early|skip_previous|strict_self|uniform|random");
    synth->add_option("--seed", seed, "Deterministic generator seed");
    synth->add_option("--samples", samples, "Number of sample files");
    synth->add_option("--level", level, "raw|beta sample encoding");
    synth->add_option("--sinks", sinks, "Override the config's sink scale count");
    synth->add_option("--out", out_path, "Trace directory to create")->required();

    CLI::App* plan = app.add_subcommand("plan", "Build an eviction schedule from scores and a budget");
    plan->add_option("--scores", scores_path, "Scores file from calibrate")->required();
    plan->add_option("--budget", budgets, "Budget fraction in (0,1], or a comma list for a sweep");
    plan->add_option("--mode", mode_name, "binary|scale prunable unit");
    plan->add_option("--accounting", accounting_name, "paper|tight cache-size model");
    plan->add_option("--out", out_path, "Schedule file to write ({budget} placeholder for sweeps)")->required();

    CLI::App* simulate = app.add_subcommand("simulate", "Replay a schedule and report cache usage");
    simulate->add_option("--schedule", schedule_path, "Schedule file from plan")->required();
    simulate->add_option("--format", format, "json|csv report format");
    simulate->add_option("--batch", batch, "Batch multiplier for byte reporting");
    simulate->add_option("--out", out_path, "Report destination (default stdout)");

    CLI::App* verify = app.add_subcommand("verify", "Check early-eviction sets against the exhaustive oracle");
    verify->add_option("--schedule", schedule_path, "Schedule file from plan")->required();
    verify->add_option("--max-candidates", max_candidates, "Per-scale oracle size guard");
    verify->add_option("--out", out_path, "Report destination (default stdout)");

    CLI::App* heatmap = app.add_subcommand("heatmap", "Export one scale's pruning grid as CSV");
    heatmap->add_option("--schedule", schedule_path, "Schedule file from plan")->required();
    heatmap->add_option("--scale", scale, "Generation scale in [1, K-1]")->required();
    heatmap->add_option("--out", out_path, "Grid destination (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (calibrate->parsed()) {
            return run_calibrate(traces_dir, sinks, out_path);
        }
        if (synth->parsed()) {
            return run_synth(config_path, pattern, seed, samples, level, sinks, out_path);
        }
        if (plan->parsed()) {
            return run_plan(scores_path, budgets, mode_name, accounting_name, out_path);
        }
        if (simulate->parsed()) {
            return run_simulate(schedule_path, format, batch, out_path);
        }
        if (verify->parsed()) {
            return run_verify(schedule_path, max_candidates, out_path);
        }
        if (heatmap->parsed()) {
            return run_heatmap(schedule_path, scale, out_path);
        }
    } catch (const CommandError& e) {
        std::cerr << "heatkv: " << e.message << "\n";
        return e.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "heatkv: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
