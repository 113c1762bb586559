// SPDX-License-Identifier: Apache-2.0

#include "heatkv/heatkv.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "core/budget.hpp"
#include "core/error.hpp"
#include "core/serialize.hpp"
#include "core/simulator.hpp"
#include "core/trace_files.hpp"

struct heatkv_config {
    heatkv::Config value;
};

struct heatkv_scores {
    heatkv::ScoresFile value;
};

struct heatkv_schedule {
    heatkv::SchedulePlan value;
};

struct heatkv_report {
    heatkv::SimulationReport value;
    heatkv::SchedulePlan plan;  // serialization context
};

namespace {

thread_local std::string g_last_error;

heatkv_status status_from_code(heatkv::ErrorCode code) {
    switch (code) {
        case heatkv::ErrorCode::invalid_argument: return HEATKV_ERROR_INVALID_ARGUMENT;
        case heatkv::ErrorCode::validation: return HEATKV_ERROR_VALIDATION;
        case heatkv::ErrorCode::budget: return HEATKV_ERROR_BUDGET;
        case heatkv::ErrorCode::io: return HEATKV_ERROR_IO;
        case heatkv::ErrorCode::parse: return HEATKV_ERROR_PARSE;
        case heatkv::ErrorCode::data: return HEATKV_ERROR_DATA;
        case heatkv::ErrorCode::schedule: return HEATKV_ERROR_SCHEDULE;
        case heatkv::ErrorCode::unsupported: return HEATKV_ERROR_UNSUPPORTED;
        case heatkv::ErrorCode::internal: return HEATKV_ERROR_INTERNAL;
    }
    return HEATKV_ERROR_INTERNAL;
}

template <typename Fn>
heatkv_status guarded(Fn&& fn) noexcept {
    try {
        fn();
        g_last_error.clear();
        return HEATKV_OK;
    } catch (const heatkv::Error& e) {
        g_last_error = e.what();
        return status_from_code(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return HEATKV_ERROR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return HEATKV_ERROR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return HEATKV_ERROR_INTERNAL;
    }
}

heatkv_status fail_invalid(const char* message) noexcept {
    g_last_error = message;
    return HEATKV_ERROR_INVALID_ARGUMENT;
}

char* copy_string(const std::string& text) {
    char* out = static_cast<char*>(std::malloc(text.size() + 1));
    if (out == nullptr) {
        throw std::bad_alloc();
    }
    std::memcpy(out, text.data(), text.size() + 1);
    return out;
}

heatkv::PruneMode to_mode(heatkv_mode mode) {
    switch (mode) {
        case HEATKV_MODE_BINARY: return heatkv::PruneMode::binary;
        case HEATKV_MODE_SCALE: return heatkv::PruneMode::scale;
    }
    throw heatkv::ArgumentError("unknown heatkv_mode value");
}

heatkv::Accounting to_accounting(heatkv_accounting accounting) {
    switch (accounting) {
        case HEATKV_ACCOUNTING_PAPER: return heatkv::Accounting::paper;
        case HEATKV_ACCOUNTING_TIGHT: return heatkv::Accounting::tight;
    }
    throw heatkv::ArgumentError("unknown heatkv_accounting value");
}

}  // namespace

extern "C" {

const char* heatkv_version_string(void) {
    return "0.1.0";
}

const char* heatkv_status_name(heatkv_status status) {
    switch (status) {
        case HEATKV_OK: return "ok";
        case HEATKV_ERROR_INVALID_ARGUMENT: return "invalid_argument";
        case HEATKV_ERROR_VALIDATION: return "validation";
        case HEATKV_ERROR_BUDGET: return "budget";
        case HEATKV_ERROR_IO: return "io";
        case HEATKV_ERROR_PARSE: return "parse";
        case HEATKV_ERROR_DATA: return "data";
        case HEATKV_ERROR_SCHEDULE: return "schedule";
        case HEATKV_ERROR_UNSUPPORTED: return "unsupported";
        case HEATKV_ERROR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* heatkv_last_error(void) {
    return g_last_error.c_str();
}

void heatkv_string_free(char* text) {
    std::free(text);
}

heatkv_status heatkv_config_from_json(const char* json_text, heatkv_config** out_config) {
    if (json_text == nullptr || out_config == nullptr) {
        return fail_invalid("heatkv_config_from_json: null argument");
    }
    return guarded([&] {
        nlohmann::json j = nlohmann::json::parse(std::string(json_text), nullptr, false);
        if (j.is_discarded()) {
            throw heatkv::ParseError("config text is not valid JSON");
        }
        auto config = std::make_unique<heatkv_config>();
        config->value = heatkv::config_from_json(j);
        heatkv::validate(config->value);
        *out_config = config.release();
    });
}

heatkv_status heatkv_config_from_file(const char* path, heatkv_config** out_config) {
    if (path == nullptr || out_config == nullptr) {
        return fail_invalid("heatkv_config_from_file: null argument");
    }
    return guarded([&] {
        const std::string text = heatkv::read_text_file(path);
        nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded()) {
            throw heatkv::ParseError(heatkv::msg(path, " is not valid JSON"));
        }
        auto config = std::make_unique<heatkv_config>();
        config->value = heatkv::config_from_json(j);
        heatkv::validate(config->value);
        *out_config = config.release();
    });
}

heatkv_status heatkv_config_to_json(const heatkv_config* config, char** out_json) {
    if (config == nullptr || out_json == nullptr) {
        return fail_invalid("heatkv_config_to_json: null argument");
    }
    return guarded([&] { *out_json = copy_string(heatkv::config_to_json(config->value).dump(2) + "\n"); });
}

void heatkv_config_free(heatkv_config* config) {
    delete config;
}

int heatkv_config_num_scales(const heatkv_config* config) {
    return config == nullptr ? 0 : config->value.schedule.num_scales();
}

int heatkv_config_sink_count(const heatkv_config* config) {
    return config == nullptr ? 0 : config->value.schedule.sink_count;
}

int heatkv_config_layers(const heatkv_config* config) {
    return config == nullptr ? 0 : config->value.shape.layers;
}

int heatkv_config_heads(const heatkv_config* config) {
    return config == nullptr ? 0 : config->value.shape.heads_per_layer;
}

heatkv_status heatkv_config_token_count(const heatkv_config* config, int k, int64_t* out_tokens) {
    if (config == nullptr || out_tokens == nullptr) {
        return fail_invalid("heatkv_config_token_count: null argument");
    }
    return guarded([&] { *out_tokens = config->value.schedule.token_count(k); });
}

heatkv_status heatkv_config_cumulative_tokens(const heatkv_config* config, int k, int64_t* out_tokens) {
    if (config == nullptr || out_tokens == nullptr) {
        return fail_invalid("heatkv_config_cumulative_tokens: null argument");
    }
    return guarded([&] { *out_tokens = config->value.schedule.cumulative_tokens(k); });
}

heatkv_status heatkv_min_feasible_budget(const heatkv_config* config, double* out_fraction) {
    if (config == nullptr || out_fraction == nullptr) {
        return fail_invalid("heatkv_min_feasible_budget: null argument");
    }
    return guarded([&] { *out_fraction = heatkv::min_feasible_fraction(config->value.schedule); });
}

heatkv_status heatkv_synth_traces(const heatkv_config* config, const char* pattern, uint64_t seed, int num_samples,
                                  const char* level, const char* out_dir) {
    if (config == nullptr || pattern == nullptr || level == nullptr || out_dir == nullptr) {
        return fail_invalid("heatkv_synth_traces: null argument");
    }
    return guarded([&] {
        heatkv::synth_trace_dir(out_dir, config->value, heatkv::archetype_from_name(pattern), seed, num_samples,
                                level);
    });
}

heatkv_status heatkv_calibrate(const char* traces_dir, int sink_override, heatkv_scores** out_scores) {
    if (traces_dir == nullptr || out_scores == nullptr) {
        return fail_invalid("heatkv_calibrate: null argument");
    }
    return guarded([&] {
        auto scores = std::make_unique<heatkv_scores>();
        scores->value = heatkv::calibrate_traces(
            traces_dir, sink_override >= 0 ? std::optional<int>(sink_override) : std::nullopt);
        *out_scores = scores.release();
    });
}

heatkv_status heatkv_scores_read_file(const char* path, heatkv_scores** out_scores) {
    if (path == nullptr || out_scores == nullptr) {
        return fail_invalid("heatkv_scores_read_file: null argument");
    }
    return guarded([&] {
        auto scores = std::make_unique<heatkv_scores>();
        scores->value = heatkv::scores_from_json_text(heatkv::read_text_file(path));
        *out_scores = scores.release();
    });
}

heatkv_status heatkv_scores_write_file(const heatkv_scores* scores, const char* path) {
    if (scores == nullptr || path == nullptr) {
        return fail_invalid("heatkv_scores_write_file: null argument");
    }
    return guarded([&] { heatkv::write_text_file(path, heatkv::scores_to_json_text(scores->value)); });
}

heatkv_status heatkv_scores_to_json(const heatkv_scores* scores, char** out_json) {
    if (scores == nullptr || out_json == nullptr) {
        return fail_invalid("heatkv_scores_to_json: null argument");
    }
    return guarded([&] { *out_json = copy_string(heatkv::scores_to_json_text(scores->value)); });
}

heatkv_status heatkv_scores_get_config(const heatkv_scores* scores, heatkv_config** out_config) {
    if (scores == nullptr || out_config == nullptr) {
        return fail_invalid("heatkv_scores_get_config: null argument");
    }
    return guarded([&] {
        auto config = std::make_unique<heatkv_config>();
        config->value = scores->value.config;
        *out_config = config.release();
    });
}

heatkv_status heatkv_scores_cas(const heatkv_scores* scores, int layer, int head, double* out_cas) {
    if (scores == nullptr || out_cas == nullptr) {
        return fail_invalid("heatkv_scores_cas: null argument");
    }
    return guarded([&] { *out_cas = scores->value.table.cas_at(layer, head); });
}

heatkv_status heatkv_scores_s_cas(const heatkv_scores* scores, int layer, int head, int k, double* out_s_cas) {
    if (scores == nullptr || out_s_cas == nullptr) {
        return fail_invalid("heatkv_scores_s_cas: null argument");
    }
    return guarded([&] { *out_s_cas = scores->value.table.s_cas_at(layer, head, k); });
}

void heatkv_scores_free(heatkv_scores* scores) {
    delete scores;
}

heatkv_status heatkv_plan(const heatkv_scores* scores, double budget_fraction, heatkv_mode mode,
                          heatkv_accounting accounting, heatkv_schedule** out_schedule) {
    if (scores == nullptr || out_schedule == nullptr) {
        return fail_invalid("heatkv_plan: null argument");
    }
    return guarded([&] {
        const heatkv::Config& config = scores->value.config;
        const heatkv::BudgetPlan budget = heatkv::plan_budget(budget_fraction, config.shape, config.schedule);
        auto schedule = std::make_unique<heatkv_schedule>();
        schedule->value =
            heatkv::build_schedule(scores->value.table, budget, to_mode(mode), to_accounting(accounting), config);
        schedule->value.scores_digest = heatkv::fnv1a64_hex(heatkv::scores_to_json_text(scores->value));
        *out_schedule = schedule.release();
    });
}

heatkv_status heatkv_schedule_read_file(const char* path, heatkv_schedule** out_schedule) {
    if (path == nullptr || out_schedule == nullptr) {
        return fail_invalid("heatkv_schedule_read_file: null argument");
    }
    return guarded([&] {
        auto schedule = std::make_unique<heatkv_schedule>();
        schedule->value = heatkv::schedule_from_json_text(heatkv::read_text_file(path));
        *out_schedule = schedule.release();
    });
}

heatkv_status heatkv_schedule_write_file(const heatkv_schedule* schedule, const char* path) {
    if (schedule == nullptr || path == nullptr) {
        return fail_invalid("heatkv_schedule_write_file: null argument");
    }
    return guarded([&] { heatkv::write_text_file(path, heatkv::schedule_to_json_text(schedule->value)); });
}

heatkv_status heatkv_schedule_to_json(const heatkv_schedule* schedule, char** out_json) {
    if (schedule == nullptr || out_json == nullptr) {
        return fail_invalid("heatkv_schedule_to_json: null argument");
    }
    return guarded([&] { *out_json = copy_string(heatkv::schedule_to_json_text(schedule->value)); });
}

heatkv_status heatkv_schedule_get_config(const heatkv_schedule* schedule, heatkv_config** out_config) {
    if (schedule == nullptr || out_config == nullptr) {
        return fail_invalid("heatkv_schedule_get_config: null argument");
    }
    return guarded([&] {
        auto config = std::make_unique<heatkv_config>();
        config->value = schedule->value.config;
        *out_config = config.release();
    });
}

heatkv_status heatkv_schedule_token_cap(const heatkv_schedule* schedule, int64_t* out_cap) {
    if (schedule == nullptr || out_cap == nullptr) {
        return fail_invalid("heatkv_schedule_token_cap: null argument");
    }
    return guarded([&] { *out_cap = schedule->value.budget.token_cap; });
}

void heatkv_schedule_free(heatkv_schedule* schedule) {
    delete schedule;
}

heatkv_status heatkv_simulate(const heatkv_schedule* schedule, int64_t batch, heatkv_report** out_report) {
    if (schedule == nullptr || out_report == nullptr) {
        return fail_invalid("heatkv_simulate: null argument");
    }
    return guarded([&] {
        auto report = std::make_unique<heatkv_report>();
        report->value = heatkv::simulate(schedule->value, batch);
        report->plan = schedule->value;
        *out_report = report.release();
    });
}

int heatkv_report_num_violations(const heatkv_report* report) {
    return report == nullptr ? -1 : static_cast<int>(report->value.violations.size());
}

heatkv_status heatkv_report_peak_tokens(const heatkv_report* report, int64_t* out_tokens) {
    if (report == nullptr || out_tokens == nullptr) {
        return fail_invalid("heatkv_report_peak_tokens: null argument");
    }
    return guarded([&] { *out_tokens = report->value.peak_tokens; });
}

heatkv_status heatkv_report_peak_bytes(const heatkv_report* report, int64_t* out_bytes) {
    if (report == nullptr || out_bytes == nullptr) {
        return fail_invalid("heatkv_report_peak_bytes: null argument");
    }
    return guarded([&] { *out_bytes = report->value.peak_bytes; });
}

heatkv_status heatkv_report_to_json(const heatkv_report* report, char** out_json) {
    if (report == nullptr || out_json == nullptr) {
        return fail_invalid("heatkv_report_to_json: null argument");
    }
    return guarded([&] { *out_json = copy_string(heatkv::report_to_json_text(report->value, report->plan)); });
}

heatkv_status heatkv_report_to_csv(const heatkv_report* report, char** out_csv) {
    if (report == nullptr || out_csv == nullptr) {
        return fail_invalid("heatkv_report_to_csv: null argument");
    }
    return guarded([&] { *out_csv = copy_string(heatkv::report_to_csv_text(report->value, report->plan)); });
}

void heatkv_report_free(heatkv_report* report) {
    delete report;
}

heatkv_status heatkv_verify_schedule(const heatkv_schedule* schedule, int max_candidates, char** out_json_report,
                                     int* out_pass) {
    if (schedule == nullptr || out_json_report == nullptr || out_pass == nullptr) {
        return fail_invalid("heatkv_verify_schedule: null argument");
    }
    return guarded([&] {
        const heatkv::OptimalityReport report = heatkv::verify_optimality(schedule->value, max_candidates);
        *out_json_report = copy_string(heatkv::optimality_to_json_text(report, schedule->value));
        *out_pass = report.hard_fail ? 0 : 1;
    });
}

heatkv_status heatkv_heatmap_csv(const heatkv_schedule* schedule, int scale, char** out_csv) {
    if (schedule == nullptr || out_csv == nullptr) {
        return fail_invalid("heatkv_heatmap_csv: null argument");
    }
    return guarded([&] { *out_csv = copy_string(heatkv::heatmap_to_csv_text(schedule->value, scale)); });
}

}  // extern "C"
