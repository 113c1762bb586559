// SPDX-License-Identifier: Apache-2.0

#include "core/trace_files.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "core/error.hpp"

namespace heatkv {

namespace {

using nlohmann::json;

constexpr double kBetaFileRowTol = 1e-5;
constexpr double kBetaFileZeroTol = 1e-6;

std::uint64_t sample_seed(std::uint64_t seed, int index) {
    // Distinct stream per sample file; only the random archetype consumes it.
    return seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(index + 1);
}

struct SampleHeader {
    std::string kind;
    long long payload_floats = 0;
};

void write_sample_file(const std::filesystem::path& path, const std::string& kind, const Config& config,
                       const std::vector<const std::vector<float>*>& chunks) {
    long long payload_floats = 0;
    for (const auto* chunk : chunks) {
        payload_floats += static_cast<long long>(chunk->size());
    }
    json header;
    header["kind"] = kind;
    header["dtype"] = "f32";
    header["byte_order"] = "little";
    header["layers"] = config.shape.layers;
    header["heads"] = config.shape.heads_per_layer;
    header["scales"] = config.schedule.num_scales();
    header["payload_floats"] = payload_floats;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(msg("cannot open ", path.string(), " for writing"));
    }
    const std::string header_line = header.dump() + "\n";
    out.write(header_line.data(), static_cast<std::streamsize>(header_line.size()));
    for (const auto* chunk : chunks) {
        out.write(reinterpret_cast<const char*>(chunk->data()),
                  static_cast<std::streamsize>(chunk->size() * sizeof(float)));
    }
    if (!out) {
        throw IoError(msg("write failure on ", path.string()));
    }
}

std::vector<float> read_sample_file(const std::filesystem::path& path, const Config& config,
                                    const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(msg("cannot open ", path.string(), " for reading"));
    }
    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw ParseError(msg(path.string(), ": missing header line"));
    }
    json header = json::parse(header_line, nullptr, /*allow_exceptions=*/false);
    if (header.is_discarded() || !header.is_object()) {
        throw ParseError(msg(path.string(), ": header line is not a JSON object"));
    }

    const auto expect = [&](const char* key, const json& want) {
        const auto it = header.find(key);
        if (it == header.end()) {
            throw ParseError(msg(path.string(), ": header is missing \"", key, "\""));
        }
        if (*it != want) {
            throw ValidationError(msg(path.string(), ": header field \"", key, "\" is ", it->dump(), ", expected ",
                                      want.dump()));
        }
    };
    expect("kind", json(expected_kind));
    expect("dtype", json("f32"));
    expect("byte_order", json("little"));
    expect("layers", json(config.shape.layers));
    expect("heads", json(config.shape.heads_per_layer));
    expect("scales", json(config.schedule.num_scales()));

    const auto floats_it = header.find("payload_floats");
    if (floats_it == header.end() || !floats_it->is_number_integer()) {
        throw ParseError(msg(path.string(), ": header is missing an integral \"payload_floats\""));
    }
    const long long payload_floats = floats_it->get<long long>();

    std::vector<float> payload(static_cast<size_t>(payload_floats));
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float))) {
        throw ParseError(msg(path.string(), ": payload truncated (expected ", payload_floats, " f32 values)"));
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw ParseError(msg(path.string(), ": trailing bytes after the declared payload"));
    }
    return payload;
}

}  // namespace

TraceManifest read_manifest(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    const json j = [&] {
        const std::string text = read_text_file(manifest_path);
        json parsed = json::parse(text, nullptr, /*allow_exceptions=*/false);
        if (parsed.is_discarded()) {
            throw ParseError(msg(manifest_path.string(), ": invalid JSON"));
        }
        return parsed;
    }();

    TraceManifest manifest;
    const auto config_it = j.find("config");
    if (config_it == j.end()) {
        throw ParseError(msg(manifest_path.string(), ": missing field \"config\""));
    }
    manifest.config = config_from_json(*config_it);

    const auto level_it = j.find("level");
    if (level_it == j.end() || !level_it->is_string()) {
        throw ParseError(msg(manifest_path.string(), ": missing string field \"level\""));
    }
    manifest.level = level_it->get<std::string>();
    if (manifest.level != "raw" && manifest.level != "beta") {
        throw ValidationError(msg(manifest_path.string(), ": level must be \"raw\" or \"beta\", got \"",
                                  manifest.level, "\""));
    }

    const auto samples_it = j.find("samples");
    if (samples_it == j.end() || !samples_it->is_array()) {
        throw ParseError(msg(manifest_path.string(), ": missing array field \"samples\""));
    }
    for (const auto& entry : *samples_it) {
        if (!entry.is_string()) {
            throw ParseError(msg(manifest_path.string(), ": sample entries must be file names"));
        }
        manifest.samples.push_back(entry.get<std::string>());
    }
    return manifest;
}

void write_raw_sample(const std::filesystem::path& path, const AttentionSample& sample) {
    std::vector<const std::vector<float>*> chunks;
    chunks.reserve(sample.alpha.size());
    for (const auto& m : sample.alpha) {
        chunks.push_back(&m);
    }
    write_sample_file(path, "raw", sample.config, chunks);
}

AttentionSample read_raw_sample(const std::filesystem::path& path, const Config& config) {
    const std::vector<float> payload = read_sample_file(path, config, "raw");

    AttentionSample sample;
    sample.config = config;
    const int L = config.shape.layers;
    const int H = config.shape.heads_per_layer;
    const int K = config.schedule.num_scales();
    sample.alpha.resize(static_cast<size_t>(L) * static_cast<size_t>(H) * static_cast<size_t>(K));

    size_t offset = 0;
    for (int l = 1; l <= L; ++l) {
        for (int h = 1; h <= H; ++h) {
            for (int k = 1; k <= K; ++k) {
                const size_t count = static_cast<size_t>(config.schedule.token_count(k)) *
                                     static_cast<size_t>(config.schedule.cumulative_tokens(k));
                if (offset + count > payload.size()) {
                    throw ParseError(msg(path.string(), ": payload shorter than the configured matrix shapes"));
                }
                auto& m = sample.matrix(l, h, k);
                m.assign(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                         payload.begin() + static_cast<std::ptrdiff_t>(offset + count));
                offset += count;
            }
        }
    }
    if (offset != payload.size()) {
        throw ParseError(msg(path.string(), ": payload longer than the configured matrix shapes"));
    }
    return sample;
}

void write_beta_sample(const std::filesystem::path& path, const BetaTensor& beta, const Config& config) {
    if (beta.layers != config.shape.layers || beta.heads != config.shape.heads_per_layer ||
        beta.num_scales != config.schedule.num_scales()) {
        throw ValidationError("beta tensor does not match the configuration");
    }
    std::vector<float> payload(beta.values.size());
    for (size_t i = 0; i < beta.values.size(); ++i) {
        payload[i] = static_cast<float>(beta.values[i]);
    }
    write_sample_file(path, "beta", config, {&payload});
}

BetaTensor read_beta_sample(const std::filesystem::path& path, const Config& config) {
    const std::vector<float> payload = read_sample_file(path, config, "beta");
    const int L = config.shape.layers;
    const int H = config.shape.heads_per_layer;
    const int K = config.schedule.num_scales();
    const size_t expected = static_cast<size_t>(L) * static_cast<size_t>(H) * static_cast<size_t>(K) *
                            static_cast<size_t>(K);
    if (payload.size() != expected) {
        throw ParseError(msg(path.string(), ": payload holds ", payload.size(), " values, expected ", expected));
    }

    BetaTensor beta = BetaTensor::zeros(L, H, K);
    for (size_t i = 0; i < payload.size(); ++i) {
        beta.values[i] = static_cast<double>(payload[i]);
    }
    // Storage-precision cleanup: snap the upper triangle to zero and
    // renormalize rows, as with raw attention rows.
    for (int l = 1; l <= L; ++l) {
        for (int h = 1; h <= H; ++h) {
            for (int k1 = 1; k1 <= K; ++k1) {
                for (int k2 = k1 + 1; k2 <= K; ++k2) {
                    const double v = beta.at(l, h, k1, k2);
                    if (std::abs(v) > kBetaFileZeroTol) {
                        throw DataError(msg(path.string(), ": beta[", l, ",", h, ",", k1, ",", k2,
                                            "] above the diagonal is ", v));
                    }
                    beta.at(l, h, k1, k2) = 0.0;
                }
                double row_sum = 0.0;
                for (int k2 = 1; k2 <= k1; ++k2) {
                    row_sum += beta.at(l, h, k1, k2);
                }
                if (std::abs(row_sum - 1.0) > kBetaFileRowTol) {
                    throw DataError(msg(path.string(), ": beta row sum ", row_sum, " out of tolerance at layer=", l,
                                        " head=", h, " k1=", k1));
                }
                for (int k2 = 1; k2 <= k1; ++k2) {
                    beta.at(l, h, k1, k2) /= row_sum;
                }
            }
        }
    }
    check_beta(beta, 1e-6);
    return beta;
}

void synth_trace_dir(const std::filesystem::path& dir, const Config& config, Archetype pattern, std::uint64_t seed,
                     int num_samples, const std::string& level) {
    validate(config);
    if (num_samples < 1) {
        throw ArgumentError(msg("num_samples must be positive, got ", num_samples));
    }
    if (level != "raw" && level != "beta") {
        throw ArgumentError(msg("trace level must be \"raw\" or \"beta\", got \"", level, "\""));
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError(msg("cannot create directory ", dir.string(), ": ", ec.message()));
    }

    json manifest;
    manifest["config"] = config_to_json(config);
    manifest["level"] = level;
    json generator;
    generator["pattern"] = std::string(archetype_name(pattern));
    generator["seed"] = seed;
    manifest["generator"] = std::move(generator);

    json samples = json::array();
    for (int i = 0; i < num_samples; ++i) {
        std::ostringstream name;
        name << "sample_" << std::setw(4) << std::setfill('0') << i << ".bin";
        samples.push_back(name.str());
        const std::uint64_t s = sample_seed(seed, i);
        if (level == "raw") {
            write_raw_sample(dir / name.str(), synth_trace(config, pattern, s));
        } else {
            write_beta_sample(dir / name.str(), synth_beta(config, pattern, s), config);
        }
    }
    manifest["samples"] = std::move(samples);
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

ScoresFile calibrate_traces(const std::filesystem::path& dir, std::optional<int> sink_override) {
    TraceManifest manifest = read_manifest(dir);
    if (sink_override) {
        manifest.config.schedule.sink_count = *sink_override;
    }
    validate(manifest.config);
    if (manifest.samples.empty()) {
        throw ArgumentError(msg(dir.string(), ": manifest lists no samples"));
    }

    std::vector<BetaTensor> betas;
    betas.reserve(manifest.samples.size());
    for (const std::string& name : manifest.samples) {
        const auto path = dir / name;
        if (manifest.level == "raw") {
            betas.push_back(aggregate_beta(read_raw_sample(path, manifest.config)));
        } else {
            betas.push_back(read_beta_sample(path, manifest.config));
        }
    }

    ScoresFile scores;
    scores.config = manifest.config;
    scores.sample_count = static_cast<long long>(betas.size());
    scores.table = build_importance(mean_beta(betas), manifest.config);
    return scores;
}

}  // namespace heatkv
