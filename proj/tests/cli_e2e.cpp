// SPDX-License-Identifier: Apache-2.0
//
// Drives the installed CLI binary end to end. Invoked as:
//   cli_e2e <path-to-heatkv-binary>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void expect(bool condition, const std::string& message) {
    if (!condition) {
        std::cerr << "FAIL: " << message << "\n";
        ++g_failures;
    }
}

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& command) {
    const fs::path capture = fs::temp_directory_path() / "heatkv_cli_e2e_capture.txt";
    const std::string full = command + " > " + capture.string() + " 2>&1";
    const int raw = std::system(full.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(capture);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    result.output = buffer.str();
    return result;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

size_t line_count(const std::string& text) {
    size_t lines = 0;
    for (const char c : text) {
        lines += c == '\n';
    }
    return lines;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: cli_e2e <heatkv-binary>\n";
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path work = fs::temp_directory_path() / "heatkv_cli_e2e";
    fs::remove_all(work);
    fs::create_directories(work);

    const fs::path config_path = work / "config.json";
    {
        std::ofstream out(config_path);
        out << R"({
  "resolutions": [[1,1],[1,2],[2,2],[2,4]],
  "sink_count": 1,
  "prompt_tokens": 0,
  "layers": 2,
  "heads": 2,
  "head_dim": 8,
  "bytes_per_element": 2
})";
    }

    // synth: deterministic directories
    const fs::path traces_a = work / "traces_a";
    const fs::path traces_b = work / "traces_b";
    auto synth = run(cli + " synth --config " + config_path.string() + " --pattern random --seed 11 --samples 2" +
                     " --level raw --out " + traces_a.string());
    expect(synth.exit_code == 0, "synth exits 0: " + synth.output);
    run(cli + " synth --config " + config_path.string() + " --pattern random --seed 11 --samples 2 --level raw" +
        " --out " + traces_b.string());
    expect(slurp(traces_a / "sample_0000.bin") == slurp(traces_b / "sample_0000.bin"),
           "same seed gives byte-identical trace samples");
    expect(slurp(traces_a / "manifest.json") == slurp(traces_b / "manifest.json"),
           "same seed gives byte-identical manifests");

    // calibrate twice: byte-identical scores
    const fs::path scores_a = work / "scores_a.json";
    const fs::path scores_b = work / "scores_b.json";
    auto calibrate = run(cli + " calibrate --traces " + traces_a.string() + " --out " + scores_a.string());
    expect(calibrate.exit_code == 0, "calibrate exits 0: " + calibrate.output);
    run(cli + " calibrate --traces " + traces_b.string() + " --out " + scores_b.string());
    expect(slurp(scores_a) == slurp(scores_b), "calibrate output is byte-identical");

    // plan twice: byte-identical schedules
    const fs::path schedule_a = work / "schedule_a.json";
    const fs::path schedule_b = work / "schedule_b.json";
    auto plan = run(cli + " plan --scores " + scores_a.string() + " --budget 0.5 --mode binary" +
                    " --accounting paper --out " + schedule_a.string());
    expect(plan.exit_code == 0, "plan exits 0: " + plan.output);
    run(cli + " plan --scores " + scores_a.string() + " --budget 0.5 --mode binary --accounting paper --out " +
        schedule_b.string());
    expect(slurp(schedule_a) == slurp(schedule_b), "plan output is byte-identical");

    // budget sweep with the {budget} placeholder
    auto sweep = run(cli + " plan --scores " + scores_a.string() + " --budget 0.3,0.5 --mode scale --out " +
                     (work / "sweep_{budget}.json").string());
    expect(sweep.exit_code == 0, "budget sweep exits 0: " + sweep.output);
    expect(fs::exists(work / "sweep_0.3.json"), "sweep writes the 0.3 schedule");
    expect(fs::exists(work / "sweep_0.5.json"), "sweep writes the 0.5 schedule");
    auto sweep_no_placeholder = run(cli + " plan --scores " + scores_a.string() + " --budget 0.3,0.5 --out " +
                                    (work / "sweep.json").string());
    expect(sweep_no_placeholder.exit_code == 2, "sweep without {budget} is a usage error");

    // simulate: clean run exits 0, json and csv
    const fs::path report_json = work / "report.json";
    auto simulate = run(cli + " simulate --schedule " + schedule_a.string() + " --out " + report_json.string());
    expect(simulate.exit_code == 0, "simulate exits 0: " + simulate.output);
    expect(slurp(report_json).find("\"violations\": []") != std::string::npos, "report lists no violations");

    const fs::path report_csv = work / "report.csv";
    auto simulate_csv = run(cli + " simulate --schedule " + schedule_a.string() + " --format csv --out " +
                            report_csv.string());
    expect(simulate_csv.exit_code == 0, "csv simulate exits 0");
    // header + (K-1)*L + 1 checkpoint rows with K=4, L=2
    expect(line_count(slurp(report_csv)) == 1 + 3 * 2 + 1, "csv has one row per checkpoint plus header");

    // verify: optimal schedule passes
    auto verify = run(cli + " verify --schedule " + schedule_a.string());
    expect(verify.exit_code == 0, "verify exits 0: " + verify.output);
    expect(verify.output.find("\"pass\": true") != std::string::npos, "verify reports pass");

    // heatmap grid for the worked scale
    auto heatmap = run(cli + " heatmap --schedule " + schedule_a.string() + " --scale 3");
    expect(heatmap.exit_code == 0, "heatmap exits 0");
    expect(heatmap.output.rfind("layer,1,2\n", 0) == 0, "heatmap header row carries head indices");
    expect(line_count(heatmap.output) == 3, "heatmap has one row per layer plus header");
    auto heatmap_oob = run(cli + " heatmap --schedule " + schedule_a.string() + " --scale 7");
    expect(heatmap_oob.exit_code == 2, "out-of-range heatmap scale is a usage error");

    // tampering: move the early eviction to an after-layer eviction; the
    // budget contract breaks and both simulate and verify must say so
    {
        nlohmann::json doc = nlohmann::json::parse(slurp(schedule_a));
        for (auto& entry : doc["scales"]) {
            if (entry["k"] == 3) {
                nlohmann::json moved = entry["absent"];
                entry["absent"] = nlohmann::json::array();
                for (auto& item : moved) {
                    entry["evict_after_layer"][std::to_string(item[0].get<int>())].push_back(item);
                }
            }
        }
        const fs::path tampered = work / "tampered.json";
        std::ofstream(tampered) << doc.dump(2) << "\n";

        auto bad_simulate = run(cli + " simulate --schedule " + tampered.string() + " --format csv");
        expect(bad_simulate.exit_code == 1, "tampered schedule makes simulate exit 1");
        expect(bad_simulate.output.find("3,1,16,") != std::string::npos,
               "tampered schedule shows the 16-token checkpoint row");
        expect(bad_simulate.output.find("violation") != std::string::npos, "simulate names the violation");

        auto bad_verify = run(cli + " verify --schedule " + tampered.string());
        expect(bad_verify.exit_code == 1, "tampered schedule makes verify exit 1");
        expect(bad_verify.output.find("\"gap\"") != std::string::npos, "verify reports the optimality gap");
    }

    // infeasible budget reports the floor and exits 2
    auto infeasible = run(cli + " plan --scores " + scores_a.string() + " --budget 0.05 --out " +
                          (work / "never.json").string());
    expect(infeasible.exit_code == 2, "infeasible budget is a usage error");
    expect(infeasible.output.find("minimum feasible fraction") != std::string::npos,
           "infeasible budget error names the floor");

    // malformed schedule file -> parse error, exit 2
    {
        const fs::path broken = work / "broken.json";
        std::ofstream(broken) << "{\"config\": ";
        auto bad = run(cli + " simulate --schedule " + broken.string());
        expect(bad.exit_code == 2, "malformed schedule is a usage error");
        expect(bad.output.find("parse") != std::string::npos, "parse errors are labeled");
    }

    // usage errors
    expect(run(cli).exit_code == 2, "no subcommand is a usage error");
    expect(run(cli + " plan").exit_code == 2, "missing required options is a usage error");
    expect(run(cli + " simulate --schedule " + schedule_a.string() + " --format yaml").exit_code == 2,
           "unknown format is a usage error");

    // scale-mode end-to-end with sink override at calibrate time
    const fs::path scores_s2 = work / "scores_s2.json";
    auto recalibrate = run(cli + " calibrate --traces " + traces_a.string() + " --sinks 2 --out " +
                           scores_s2.string());
    expect(recalibrate.exit_code == 0, "calibrate with sink override exits 0: " + recalibrate.output);
    auto plan_s2 = run(cli + " plan --scores " + scores_s2.string() + " --budget 0.6 --mode scale --out " +
                       (work / "schedule_s2.json").string());
    expect(plan_s2.exit_code == 0, "scale-mode plan on overridden sinks exits 0: " + plan_s2.output);
    auto simulate_s2 = run(cli + " simulate --schedule " + (work / "schedule_s2.json").string());
    expect(simulate_s2.exit_code == 0, "scale-mode simulate exits 0");

    if (g_failures == 0) {
        std::cout << "cli_e2e: all checks passed\n";
        fs::remove_all(work);
        return 0;
    }
    std::cerr << "cli_e2e: " << g_failures << " check(s) failed; artifacts kept in " << work << "\n";
    return 1;
}
