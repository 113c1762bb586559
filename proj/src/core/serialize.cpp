// SPDX-License-Identifier: Apache-2.0

#include "core/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "core/error.hpp"

namespace heatkv {

namespace {

using nlohmann::json;

const json& require_field(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) {
        throw ParseError(msg("missing field \"", key, "\""));
    }
    return *it;
}

long long require_integer(const json& j, const char* key) {
    const json& v = require_field(j, key);
    if (!v.is_number_integer()) {
        throw ParseError(msg("field \"", key, "\" must be an integer"));
    }
    return v.get<long long>();
}

std::string require_string(const json& j, const char* key) {
    const json& v = require_field(j, key);
    if (!v.is_string()) {
        throw ParseError(msg("field \"", key, "\" must be a string"));
    }
    return v.get<std::string>();
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text);  // parse_error carries the byte location
    } catch (const json::parse_error& e) {
        throw ParseError(msg("invalid JSON: ", e.what()));
    }
}

json item_to_json(const PruneItem& item, PruneMode mode) {
    if (mode == PruneMode::binary) {
        return json::array({item.layer, item.head});
    }
    return json::array({item.source_scale, item.layer, item.head});
}

PruneItem item_from_json(const json& j, PruneMode mode) {
    if (!j.is_array()) {
        throw ParseError("prune items must be arrays");
    }
    PruneItem item;
    if (mode == PruneMode::binary) {
        if (j.size() != 2) {
            throw ParseError(msg("binary prune items are [layer, head], got ", j.size(), " entries"));
        }
        item.source_scale = 0;
        item.layer = j[0].get<int>();
        item.head = j[1].get<int>();
    } else {
        if (j.size() != 3) {
            throw ParseError(msg("scale prune items are [source_scale, layer, head], got ", j.size(), " entries"));
        }
        item.source_scale = j[0].get<int>();
        item.layer = j[1].get<int>();
        item.head = j[2].get<int>();
    }
    return item;
}

json head_to_json(const HeadRef& ref) { return json::array({ref.layer, ref.head}); }

HeadRef head_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) {
        throw ParseError("head references are [layer, head] pairs");
    }
    return {j[0].get<int>(), j[1].get<int>()};
}

json budget_to_json(const BudgetPlan& budget) {
    json j;
    j["fraction"] = budget.fraction;
    j["token_cap"] = budget.token_cap;
    j["prune_counts"] = budget.prune_counts;
    return j;
}

BudgetPlan budget_from_json(const json& j) {
    BudgetPlan budget;
    const json& fraction = require_field(j, "fraction");
    if (!fraction.is_number()) {
        throw ParseError("field \"fraction\" must be a number");
    }
    budget.fraction = fraction.get<double>();
    budget.token_cap = require_integer(j, "token_cap");
    const json& counts = require_field(j, "prune_counts");
    if (!counts.is_array()) {
        throw ParseError("field \"prune_counts\" must be an array");
    }
    for (const auto& v : counts) {
        budget.prune_counts.push_back(v.get<long long>());
    }
    return budget;
}

}  // namespace

json config_to_json(const Config& config) {
    json j;
    json resolutions = json::array();
    for (const auto& [h, w] : config.schedule.resolutions) {
        resolutions.push_back(json::array({h, w}));
    }
    j["resolutions"] = std::move(resolutions);
    j["sink_count"] = config.schedule.sink_count;
    j["prompt_tokens"] = config.schedule.prompt_tokens;
    j["layers"] = config.shape.layers;
    j["heads"] = config.shape.heads_per_layer;
    j["head_dim"] = config.shape.head_dim;
    j["bytes_per_element"] = config.shape.bytes_per_element;
    return j;
}

Config config_from_json(const json& j) {
    if (!j.is_object()) {
        throw ParseError("config block must be a JSON object");
    }
    Config config;
    const json& resolutions = require_field(j, "resolutions");
    if (!resolutions.is_array()) {
        throw ParseError("field \"resolutions\" must be an array of [height, width] pairs");
    }
    for (const auto& r : resolutions) {
        if (!r.is_array() || r.size() != 2) {
            throw ParseError("field \"resolutions\" must hold [height, width] pairs");
        }
        config.schedule.resolutions.emplace_back(r[0].get<int>(), r[1].get<int>());
    }
    config.schedule.sink_count = static_cast<int>(require_integer(j, "sink_count"));
    config.schedule.prompt_tokens = require_integer(j, "prompt_tokens");
    config.shape.layers = static_cast<int>(require_integer(j, "layers"));
    config.shape.heads_per_layer = static_cast<int>(require_integer(j, "heads"));
    config.shape.head_dim = static_cast<int>(require_integer(j, "head_dim"));
    config.shape.bytes_per_element = static_cast<int>(require_integer(j, "bytes_per_element"));
    return config;
}

std::string scores_to_json_text(const ScoresFile& scores) {
    const ImportanceTable& table = scores.table;
    json j;
    j["config"] = config_to_json(scores.config);
    j["sample_count"] = scores.sample_count;

    json cas = json::array();
    for (int l = 1; l <= table.layers; ++l) {
        json row = json::array();
        for (int h = 1; h <= table.heads; ++h) {
            row.push_back(table.cas_at(l, h));
        }
        cas.push_back(std::move(row));
    }
    j["cas"] = std::move(cas);

    json s_cas = json::array();
    for (int l = 1; l <= table.layers; ++l) {
        json per_layer = json::array();
        for (int h = 1; h <= table.heads; ++h) {
            json per_head = json::array();
            for (int k = 1; k <= table.num_scales; ++k) {
                if (k >= table.sink_count + 1 && k <= table.num_scales - 1) {
                    per_head.push_back(table.s_cas_at(l, h, k));
                } else {
                    per_head.push_back(nullptr);
                }
            }
            per_layer.push_back(std::move(per_head));
        }
        s_cas.push_back(std::move(per_layer));
    }
    j["s_cas"] = std::move(s_cas);

    json binary_order = json::array();
    for (const HeadRef& ref : table.binary_order) {
        binary_order.push_back(head_to_json(ref));
    }
    j["binary_order"] = std::move(binary_order);

    json scale_orders = json::array();
    for (const auto& [i, order] : table.scale_orders) {
        json entry = json::array();
        entry.push_back(i);
        json heads = json::array();
        for (const HeadRef& ref : order) {
            heads.push_back(head_to_json(ref));
        }
        entry.push_back(std::move(heads));
        scale_orders.push_back(std::move(entry));
    }
    j["scale_orders"] = std::move(scale_orders);

    return j.dump(2) + "\n";
}

ScoresFile scores_from_json_text(const std::string& text) {
    const json j = parse_json(text);
    ScoresFile scores;
    scores.config = config_from_json(require_field(j, "config"));
    validate(scores.config);
    scores.sample_count = require_integer(j, "sample_count");

    ImportanceTable& table = scores.table;
    table.layers = scores.config.shape.layers;
    table.heads = scores.config.shape.heads_per_layer;
    table.num_scales = scores.config.schedule.num_scales();
    table.sink_count = scores.config.schedule.sink_count;

    const json& cas = require_field(j, "cas");
    if (!cas.is_array() || static_cast<int>(cas.size()) != table.layers) {
        throw ParseError("field \"cas\" must be an L x H matrix");
    }
    table.cas.reserve(static_cast<size_t>(table.layers) * static_cast<size_t>(table.heads));
    for (const auto& row : cas) {
        if (!row.is_array() || static_cast<int>(row.size()) != table.heads) {
            throw ParseError("field \"cas\" must be an L x H matrix");
        }
        for (const auto& v : row) {
            table.cas.push_back(v.get<double>());
        }
    }

    const json& s_cas = require_field(j, "s_cas");
    if (!s_cas.is_array() || static_cast<int>(s_cas.size()) != table.layers) {
        throw ParseError("field \"s_cas\" must be an L x H x K tensor");
    }
    table.s_cas.reserve(table.cas.size() * static_cast<size_t>(table.num_scales));
    for (const auto& per_layer : s_cas) {
        if (!per_layer.is_array() || static_cast<int>(per_layer.size()) != table.heads) {
            throw ParseError("field \"s_cas\" must be an L x H x K tensor");
        }
        for (const auto& per_head : per_layer) {
            if (!per_head.is_array() || static_cast<int>(per_head.size()) != table.num_scales) {
                throw ParseError("field \"s_cas\" must be an L x H x K tensor");
            }
            for (const auto& v : per_head) {
                table.s_cas.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
            }
        }
    }

    const auto read_order = [&](const json& arr) {
        HeadOrder order;
        for (const auto& entry : arr) {
            order.push_back(head_from_json(entry));
        }
        if (static_cast<long long>(order.size()) != scores.config.shape.total_heads()) {
            throw ParseError(msg("an ordering lists ", order.size(), " heads, expected ",
                                 scores.config.shape.total_heads()));
        }
        std::set<HeadRef> unique(order.begin(), order.end());
        if (unique.size() != order.size()) {
            throw ParseError("an ordering repeats a head");
        }
        return order;
    };

    const json& binary_order = require_field(j, "binary_order");
    if (!binary_order.is_array()) {
        throw ParseError("field \"binary_order\" must be an array");
    }
    table.binary_order = read_order(binary_order);

    const json& scale_orders = require_field(j, "scale_orders");
    if (!scale_orders.is_array()) {
        throw ParseError("field \"scale_orders\" must be an array of [scale, order] entries");
    }
    for (const auto& entry : scale_orders) {
        if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer()) {
            throw ParseError("field \"scale_orders\" must hold [scale, order] entries");
        }
        table.scale_orders[entry[0].get<int>()] = read_order(entry[1]);
    }
    for (int i = table.sink_count + 1; i <= table.num_scales - 1; ++i) {
        if (!table.scale_orders.count(i)) {
            throw ParseError(msg("scale_orders is missing source scale ", i));
        }
    }
    return scores;
}

std::string schedule_to_json_text(const SchedulePlan& plan) {
    json j;
    j["version"] = std::string(kToolVersion);
    j["config"] = config_to_json(plan.config);
    j["mode"] = std::string(prune_mode_name(plan.mode));
    j["accounting"] = std::string(accounting_name(plan.accounting));
    j["budget"] = budget_to_json(plan.budget);
    j["scores_digest"] = plan.scores_digest;

    json scales = json::array();
    for (const ScaleActions& actions : plan.scales) {
        json entry;
        entry["k"] = actions.k;
        json absent = json::array();
        for (const PruneItem& item : actions.absent) {
            absent.push_back(item_to_json(item, plan.mode));
        }
        entry["absent"] = std::move(absent);
        json evict = json::object();
        for (const auto& [layer, items] : actions.evict_after_layer) {
            json list = json::array();
            for (const PruneItem& item : items) {
                list.push_back(item_to_json(item, plan.mode));
            }
            evict[std::to_string(layer)] = std::move(list);
        }
        entry["evict_after_layer"] = std::move(evict);
        scales.push_back(std::move(entry));
    }
    j["scales"] = std::move(scales);
    return j.dump(2) + "\n";
}

SchedulePlan schedule_from_json_text(const std::string& text) {
    const json j = parse_json(text);
    SchedulePlan plan;
    plan.config = config_from_json(require_field(j, "config"));
    validate(plan.config);
    plan.mode = prune_mode_from_name(require_string(j, "mode"));
    plan.accounting = accounting_from_name(require_string(j, "accounting"));
    plan.budget = budget_from_json(require_field(j, "budget"));
    plan.scores_digest = require_string(j, "scores_digest");

    const json& scales = require_field(j, "scales");
    if (!scales.is_array()) {
        throw ParseError("field \"scales\" must be an array");
    }

    // The file stores A_k and the per-layer eviction map; G_k and E_k are
    // reconstructed as A_k plus the evicted items resp. A_k minus G_{k-1}.
    PruneSet previous;
    for (const auto& entry : scales) {
        ScaleActions actions;
        actions.k = static_cast<int>(require_integer(entry, "k"));

        PruneSet absent;
        const json& absent_json = require_field(entry, "absent");
        if (!absent_json.is_array()) {
            throw ParseError(msg("field \"absent\" at scale ", actions.k, " must be an array"));
        }
        for (const auto& item : absent_json) {
            absent.insert(item_from_json(item, plan.mode));
        }

        PruneSet target = absent;
        const json& evict = require_field(entry, "evict_after_layer");
        if (!evict.is_object()) {
            throw ParseError(msg("field \"evict_after_layer\" at scale ", actions.k, " must be an object"));
        }
        for (const auto& [key, items] : evict.items()) {
            int layer = 0;
            try {
                layer = std::stoi(key);
            } catch (const std::exception&) {
                throw ParseError(msg("eviction map key \"", key, "\" is not a layer index"));
            }
            auto& list = actions.evict_after_layer[layer];
            for (const auto& item : items) {
                const PruneItem parsed = item_from_json(item, plan.mode);
                list.push_back(parsed);
                target.insert(parsed);
            }
        }

        actions.absent.assign(absent.begin(), absent.end());
        actions.target.assign(target.begin(), target.end());
        std::set_difference(absent.begin(), absent.end(), previous.begin(), previous.end(),
                            std::back_inserter(actions.early));
        previous = std::move(target);
        plan.scales.push_back(std::move(actions));
    }
    validate_plan(plan);  // ScheduleError on structural damage
    return plan;
}

std::string report_to_json_text(const SimulationReport& report, const SchedulePlan& plan) {
    json j;
    j["version"] = std::string(kToolVersion);
    j["config"] = config_to_json(plan.config);
    j["mode"] = std::string(prune_mode_name(plan.mode));
    j["accounting"] = std::string(accounting_name(plan.accounting));
    j["budget"] = budget_to_json(plan.budget);
    j["batch_size"] = report.batch_size;

    json checkpoints = json::array();
    for (const Checkpoint& cp : report.checkpoints) {
        json entry;
        entry["scale"] = cp.scale;
        entry["layer"] = cp.layer;
        entry["tokens"] = cp.tokens;
        entry["physical_tokens"] = cp.physical_tokens;
        entry["bytes"] = to_bytes(cp.tokens, plan.config.shape, report.batch_size);
        entry["cap"] = report.token_cap;
        entry["ok"] = cp.ok;
        checkpoints.push_back(std::move(entry));
    }
    j["checkpoints"] = std::move(checkpoints);

    json end_of_scale = json::array();
    for (const ScaleTotal& total : report.end_of_scale) {
        json entry;
        entry["scale"] = total.scale;
        entry["tokens"] = total.tokens;
        entry["expected"] = total.expected;
        end_of_scale.push_back(std::move(entry));
    }
    j["end_of_scale"] = std::move(end_of_scale);

    json flows = json::array();
    for (const ScaleFlow& flow : report.flows) {
        json entry;
        entry["scale"] = flow.scale;
        entry["appended"] = flow.appended;
        entry["evicted"] = flow.evicted;
        flows.push_back(std::move(entry));
    }
    j["flows"] = std::move(flows);

    json violations = json::array();
    for (const Violation& v : report.violations) {
        json entry;
        entry["scale"] = v.scale;
        entry["layer"] = v.layer;
        entry["tokens"] = v.tokens;
        entry["cap"] = v.cap;
        violations.push_back(std::move(entry));
    }
    j["violations"] = std::move(violations);

    j["peak_tokens"] = report.peak_tokens;
    j["peak_bytes"] = report.peak_bytes;
    return j.dump(2) + "\n";
}

std::string report_to_csv_text(const SimulationReport& report, const SchedulePlan& plan) {
    std::ostringstream out;
    out << "scale,layer,tokens,bytes,cap,ok\n";
    for (const Checkpoint& cp : report.checkpoints) {
        out << cp.scale << ',' << cp.layer << ',' << cp.tokens << ','
            << to_bytes(cp.tokens, plan.config.shape, report.batch_size) << ',' << report.token_cap << ','
            << (cp.ok ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string optimality_to_json_text(const OptimalityReport& report, const SchedulePlan& plan) {
    json j;
    j["mode"] = std::string(prune_mode_name(plan.mode));
    j["accounting"] = std::string(accounting_name(plan.accounting));
    j["token_cap"] = plan.budget.token_cap;
    json scales = json::array();
    for (const OptimalityScale& entry : report.scales) {
        json e;
        e["k"] = entry.k;
        e["early_size"] = entry.early_size;
        if (entry.skipped) {
            e["status"] = "skipped";
        } else {
            e["oracle_min"] = entry.oracle_min;
            e["status"] = entry.optimal ? "optimal" : "gap";
        }
        scales.push_back(std::move(e));
    }
    j["scales"] = std::move(scales);
    j["pass"] = !report.hard_fail;
    return j.dump(2) + "\n";
}

std::string heatmap_to_csv_text(const SchedulePlan& plan, int scale) {
    const int K = plan.config.schedule.num_scales();
    if (scale < 1 || scale > K - 1) {
        throw ArgumentError(msg("heatmap scale ", scale, " out of range [1, ", K - 1, "]"));
    }
    const ScaleActions& actions = plan.at_scale(scale);
    const PruneSet target(actions.target.begin(), actions.target.end());
    const PruneSet early(actions.early.begin(), actions.early.end());
    PruneSet prior;  // G_{k-1}
    if (scale > 1) {
        const ScaleActions& prev = plan.at_scale(scale - 1);
        prior.insert(prev.target.begin(), prev.target.end());
    }

    const auto head_in = [&](const PruneSet& set, int l, int h) {
        if (plan.mode == PruneMode::binary) {
            return set.count({0, l, h}) > 0;
        }
        for (int i = plan.config.schedule.sink_count + 1; i <= scale; ++i) {
            if (set.count({i, l, h})) {
                return true;
            }
        }
        return false;
    };

    std::ostringstream out;
    out << "layer";
    for (int h = 1; h <= plan.config.shape.heads_per_layer; ++h) {
        out << ',' << h;
    }
    out << '\n';
    for (int l = 1; l <= plan.config.shape.layers; ++l) {
        out << l;
        for (int h = 1; h <= plan.config.shape.heads_per_layer; ++h) {
            int cell = 0;
            if (head_in(prior, l, h)) {
                cell = 3;  // already absent when the scale began
            } else if (head_in(early, l, h)) {
                cell = 2;
            } else if (head_in(target, l, h)) {
                cell = 1;
            }
            out << ',' << cell;
        }
        out << '\n';
    }
    return out.str();
}

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t hash = 0xCBF29CE484222325ull;
    for (const char c : bytes) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001B3ull;
    }
    std::ostringstream out;
    out << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << hash;
    return out.str();
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(msg("cannot open ", path.string(), " for reading"));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) {
        throw IoError(msg("read failure on ", path.string()));
    }
    return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(msg("cannot open ", path.string(), " for writing"));
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError(msg("write failure on ", path.string()));
    }
}

}  // namespace heatkv
