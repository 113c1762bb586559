// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/serialize.hpp"
#include "core/trace.hpp"

namespace heatkv {

/// Trace directory layout: manifest.json holding the config block, the
/// ingestion level ("raw" or "beta") and the sample file list. Each sample
/// file is one newline-terminated JSON header line followed by a flat
/// little-endian f32 payload:
///   raw  - the alpha matrices, row-major, concatenated in (layer, head,
///          scale) order;
///   beta - L*H*K*K values, row-major.
struct TraceManifest {
    Config config;
    std::string level;  // "raw" | "beta"
    std::vector<std::string> samples;
};

TraceManifest read_manifest(const std::filesystem::path& dir);

void write_raw_sample(const std::filesystem::path& path, const AttentionSample& sample);
AttentionSample read_raw_sample(const std::filesystem::path& path, const Config& config);

void write_beta_sample(const std::filesystem::path& path, const BetaTensor& beta, const Config& config);
/// Rows are renormalized on ingest with the raw-input tolerance (1e-5),
/// mirroring the treatment of f32 attention rows; above-diagonal residue up
/// to 1e-6 is snapped to zero, anything larger is a DataError.
BetaTensor read_beta_sample(const std::filesystem::path& path, const Config& config);

/// Synthesizes `num_samples` traces of the archetype (sample index folded
/// into the seed) and writes manifest plus sample files. Deterministic and
/// byte-identical for identical arguments.
void synth_trace_dir(const std::filesystem::path& dir, const Config& config, Archetype pattern, std::uint64_t seed,
                     int num_samples, const std::string& level);

/// Ingests a trace directory into averaged scores: raw samples pass through
/// aggregate_beta, beta samples are averaged directly. sink_override, when
/// set, replaces the manifest's sink_count before scoring.
ScoresFile calibrate_traces(const std::filesystem::path& dir, std::optional<int> sink_override = std::nullopt);

}  // namespace heatkv
