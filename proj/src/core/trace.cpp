// SPDX-License-Identifier: Apache-2.0

#include "core/trace.hpp"

#include <cmath>
#include <cstdlib>

#include "core/error.hpp"

namespace heatkv {

namespace {

constexpr double kRawRowTol = 1e-5;   // f32 rows from real model hooks drift this much
constexpr double kBetaRowTol = 1e-6;  // our own aggregation is double-precision

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Counter-based stream: independent of evaluation order, stable across
/// platforms (no std::distribution involved).
class RowRng {
public:
    RowRng(std::uint64_t seed, int layer, int head, int k) {
        state_ = splitmix64(seed);
        state_ = splitmix64(state_ ^ static_cast<std::uint64_t>(layer));
        state_ = splitmix64(state_ ^ static_cast<std::uint64_t>(head) << 20);
        state_ = splitmix64(state_ ^ static_cast<std::uint64_t>(k) << 40);
    }

    double next_unit() {  // (0, 1]
        state_ = splitmix64(state_);
        return (static_cast<double>(state_ >> 11) + 1.0) * 0x1.0p-53;
    }

    double next_exponential() { return -std::log(next_unit()); }

private:
    std::uint64_t state_;
};

size_t alpha_index(const Config& config, int layer, int head, int k) {
    const int H = config.shape.heads_per_layer;
    const int K = config.schedule.num_scales();
    return (static_cast<size_t>(layer - 1) * static_cast<size_t>(H) + static_cast<size_t>(head - 1)) *
               static_cast<size_t>(K) +
           static_cast<size_t>(k - 1);
}

/// Per-scale block weights for one query row at scale k1. Weights are over
/// source scales 1..k1 and sum to 1; within a block the mass is spread
/// uniformly over its t_j columns.
std::vector<double> block_weights(Archetype pattern, int k1, const std::vector<long long>& t,
                                  const std::vector<long long>& c) {
    std::vector<double> w(static_cast<size_t>(k1), 0.0);
    const double ck = static_cast<double>(c[static_cast<size_t>(k1 - 1)]);
    switch (pattern) {
        case Archetype::uniform:
            for (int j = 1; j <= k1; ++j) {
                w[static_cast<size_t>(j - 1)] = static_cast<double>(t[static_cast<size_t>(j - 1)]) / ck;
            }
            break;
        case Archetype::strict_self:
            for (int j = 1; j <= k1; ++j) {
                w[static_cast<size_t>(j - 1)] = 0.01 * static_cast<double>(t[static_cast<size_t>(j - 1)]) / ck;
            }
            w[static_cast<size_t>(k1 - 1)] += 0.99;
            break;
        case Archetype::early_scale:
            for (int j = 1; j <= k1; ++j) {
                w[static_cast<size_t>(j - 1)] = 0.1 * static_cast<double>(t[static_cast<size_t>(j - 1)]) / ck;
            }
            w[0] += 0.9;
            break;
        case Archetype::local_recent: {
            double z = 0.0;
            for (int j = 1; j <= k1; ++j) {
                w[static_cast<size_t>(j - 1)] = std::ldexp(1.0, -(k1 - j));
                z += w[static_cast<size_t>(j - 1)];
            }
            for (auto& v : w) v /= z;
            break;
        }
        case Archetype::local_early: {
            double z = 0.0;
            for (int j = 1; j <= k1; ++j) {
                w[static_cast<size_t>(j - 1)] = std::ldexp(1.0, -(j - 1));
                z += w[static_cast<size_t>(j - 1)];
            }
            for (auto& v : w) v /= z;
            break;
        }
        case Archetype::skip_previous: {
            const int skipped = k1 - 1;  // no skip at k1 = 1
            double z = 0.0;
            for (int j = 1; j <= k1; ++j) {
                if (j != skipped) {
                    w[static_cast<size_t>(j - 1)] = static_cast<double>(t[static_cast<size_t>(j - 1)]);
                    z += w[static_cast<size_t>(j - 1)];
                }
            }
            for (auto& v : w) v /= z;
            break;
        }
        case Archetype::random:
            throw InternalError("block_weights: random archetype has no closed form");
    }
    return w;
}

}  // namespace

Archetype archetype_from_name(std::string_view name) {
    if (name == "early_scale") return Archetype::early_scale;
    if (name == "local_recent") return Archetype::local_recent;
    if (name == "local_early") return Archetype::local_early;
    if (name == "skip_previous") return Archetype::skip_previous;
    if (name == "strict_self") return Archetype::strict_self;
    if (name == "uniform") return Archetype::uniform;
    if (name == "random") return Archetype::random;
    throw ArgumentError(msg("unknown trace pattern \"", name,
                            "\" (expected one of early_scale, local_recent, local_early, "
                            "skip_previous, strict_self, uniform, random)"));
}

std::string_view archetype_name(Archetype pattern) {
    switch (pattern) {
        case Archetype::early_scale: return "early_scale";
        case Archetype::local_recent: return "local_recent";
        case Archetype::local_early: return "local_early";
        case Archetype::skip_previous: return "skip_previous";
        case Archetype::strict_self: return "strict_self";
        case Archetype::uniform: return "uniform";
        case Archetype::random: return "random";
    }
    throw InternalError("archetype_name: unhandled value");
}

const std::vector<std::string_view>& archetype_names() {
    static const std::vector<std::string_view> names = {
        "early_scale", "local_recent", "local_early", "skip_previous", "strict_self", "uniform", "random",
    };
    return names;
}

const std::vector<float>& AttentionSample::matrix(int layer, int head, int k) const {
    return alpha.at(alpha_index(config, layer, head, k));
}

std::vector<float>& AttentionSample::matrix(int layer, int head, int k) {
    return alpha.at(alpha_index(config, layer, head, k));
}

BetaTensor BetaTensor::zeros(int layers, int heads, int num_scales) {
    BetaTensor beta;
    beta.layers = layers;
    beta.heads = heads;
    beta.num_scales = num_scales;
    beta.values.assign(static_cast<size_t>(layers) * static_cast<size_t>(heads) * static_cast<size_t>(num_scales) *
                           static_cast<size_t>(num_scales),
                       0.0);
    return beta;
}

double BetaTensor::at(int layer, int head, int k1, int k2) const {
    return const_cast<BetaTensor*>(this)->at(layer, head, k1, k2);
}

double& BetaTensor::at(int layer, int head, int k1, int k2) {
    if (layer < 1 || layer > layers || head < 1 || head > heads || k1 < 1 || k1 > num_scales || k2 < 1 ||
        k2 > num_scales) {
        throw IndexError(msg("beta index (", layer, ",", head, ",", k1, ",", k2, ") out of range"));
    }
    const size_t idx = ((static_cast<size_t>(layer - 1) * static_cast<size_t>(heads) + static_cast<size_t>(head - 1)) *
                            static_cast<size_t>(num_scales) +
                        static_cast<size_t>(k1 - 1)) *
                           static_cast<size_t>(num_scales) +
                       static_cast<size_t>(k2 - 1);
    return values[idx];
}

bool BetaTensor::same_shape(const BetaTensor& other) const {
    return layers == other.layers && heads == other.heads && num_scales == other.num_scales;
}

BetaTensor aggregate_beta(const AttentionSample& sample) {
    const Config& config = sample.config;
    validate(config);
    const int L = config.shape.layers;
    const int H = config.shape.heads_per_layer;
    const int K = config.schedule.num_scales();
    const auto cum = config.schedule.cumulative_all();

    const size_t expected = static_cast<size_t>(L) * static_cast<size_t>(H) * static_cast<size_t>(K);
    if (sample.alpha.size() != expected) {
        throw ValidationError(msg("attention sample holds ", sample.alpha.size(), " matrices, expected ", expected));
    }

    BetaTensor beta = BetaTensor::zeros(L, H, K);
    std::vector<double> block_sum(static_cast<size_t>(K));
    for (int l = 1; l <= L; ++l) {
        for (int h = 1; h <= H; ++h) {
            for (int k1 = 1; k1 <= K; ++k1) {
                const long long rows = config.schedule.token_count(k1);
                const long long cols = cum[static_cast<size_t>(k1 - 1)];
                const auto& m = sample.matrix(l, h, k1);
                if (m.size() != static_cast<size_t>(rows * cols)) {
                    throw ValidationError(msg("attention matrix at layer=", l, " head=", h, " scale=", k1, " has ",
                                              m.size(), " entries, expected ", rows, "x", cols));
                }
                std::fill(block_sum.begin(), block_sum.end(), 0.0);
                for (long long n = 0; n < rows; ++n) {
                    const float* row = m.data() + n * cols;
                    double row_sum = 0.0;
                    long long col = 0;
                    for (int k2 = 1; k2 <= k1; ++k2) {
                        const long long width = config.schedule.token_count(k2);
                        double s = 0.0;
                        for (long long j = 0; j < width; ++j) {
                            s += static_cast<double>(row[col + j]);
                        }
                        block_sum[static_cast<size_t>(k2 - 1)] += s;
                        row_sum += s;
                        col += width;
                    }
                    if (std::abs(row_sum - 1.0) > kRawRowTol) {
                        throw DataError(msg("attention row sum ", row_sum, " out of tolerance at layer=", l,
                                            " head=", h, " scale=", k1, " row=", n + 1));
                    }
                }
                double mass = 0.0;
                for (int k2 = 1; k2 <= k1; ++k2) {
                    mass += block_sum[static_cast<size_t>(k2 - 1)];
                }
                // Dividing by the measured mass implements the 1/t_k row
                // normalizer while absorbing the f32 quantization residue.
                for (int k2 = 1; k2 <= k1; ++k2) {
                    beta.at(l, h, k1, k2) = block_sum[static_cast<size_t>(k2 - 1)] / mass;
                }
            }
        }
    }
    check_beta(beta, kBetaRowTol);
    return beta;
}

BetaTensor mean_beta(const std::vector<BetaTensor>& samples) {
    if (samples.empty()) {
        throw ArgumentError("mean_beta: need at least one sample");
    }
    for (const auto& b : samples) {
        if (!b.same_shape(samples.front())) {
            throw ArgumentError("mean_beta: samples disagree on tensor shape");
        }
    }
    BetaTensor out = samples.front();
    if (samples.size() == 1) {
        return out;
    }
    const double n = static_cast<double>(samples.size());
    for (size_t i = 0; i < out.values.size(); ++i) {
        const double first = samples.front().values[i];
        bool all_equal = true;
        double sum = first;
        for (size_t d = 1; d < samples.size(); ++d) {
            const double v = samples[d].values[i];
            all_equal = all_equal && (v == first);
            sum += v;
        }
        out.values[i] = all_equal ? first : sum / n;
    }
    check_beta(out, kBetaRowTol);
    return out;
}

void check_beta(const BetaTensor& beta, double row_sum_tol) {
    for (int l = 1; l <= beta.layers; ++l) {
        for (int h = 1; h <= beta.heads; ++h) {
            for (int k1 = 1; k1 <= beta.num_scales; ++k1) {
                double row_sum = 0.0;
                for (int k2 = 1; k2 <= beta.num_scales; ++k2) {
                    const double v = beta.at(l, h, k1, k2);
                    if (k2 > k1 && v != 0.0) {
                        throw DataError(msg("beta[", l, ",", h, ",", k1, ",", k2,
                                            "] above the diagonal must be zero, got ", v));
                    }
                    row_sum += v;
                }
                if (std::abs(row_sum - 1.0) > row_sum_tol) {
                    throw DataError(
                        msg("beta row sum ", row_sum, " out of tolerance at layer=", l, " head=", h, " k1=", k1));
                }
            }
        }
    }
}

AttentionSample synth_trace(const Config& config, Archetype pattern, std::uint64_t seed) {
    validate(config);
    const int L = config.shape.layers;
    const int H = config.shape.heads_per_layer;
    const int K = config.schedule.num_scales();
    const auto cum = config.schedule.cumulative_all();
    std::vector<long long> t(static_cast<size_t>(K));
    for (int k = 1; k <= K; ++k) {
        t[static_cast<size_t>(k - 1)] = config.schedule.token_count(k);
    }

    AttentionSample sample;
    sample.config = config;
    sample.alpha.resize(static_cast<size_t>(L) * static_cast<size_t>(H) * static_cast<size_t>(K));

    std::vector<double> row;
    for (int l = 1; l <= L; ++l) {
        for (int h = 1; h <= H; ++h) {
            for (int k1 = 1; k1 <= K; ++k1) {
                const long long rows = t[static_cast<size_t>(k1 - 1)];
                const long long cols = cum[static_cast<size_t>(k1 - 1)];
                auto& m = sample.matrix(l, h, k1);
                m.resize(static_cast<size_t>(rows * cols));
                row.assign(static_cast<size_t>(cols), 0.0);

                if (pattern == Archetype::random) {
                    RowRng rng(seed, l, h, k1);
                    for (long long n = 0; n < rows; ++n) {
                        double z = 0.0;
                        for (long long j = 0; j < cols; ++j) {
                            row[static_cast<size_t>(j)] = rng.next_exponential();
                            z += row[static_cast<size_t>(j)];
                        }
                        for (long long j = 0; j < cols; ++j) {
                            m[static_cast<size_t>(n * cols + j)] = static_cast<float>(row[static_cast<size_t>(j)] / z);
                        }
                    }
                    continue;
                }

                const auto w = block_weights(pattern, k1, t, cum);
                long long col = 0;
                for (int j = 1; j <= k1; ++j) {
                    const long long width = t[static_cast<size_t>(j - 1)];
                    const double per_col = w[static_cast<size_t>(j - 1)] / static_cast<double>(width);
                    for (long long i = 0; i < width; ++i) {
                        row[static_cast<size_t>(col + i)] = per_col;
                    }
                    col += width;
                }
                double z = 0.0;
                for (double v : row) z += v;
                for (long long n = 0; n < rows; ++n) {
                    for (long long j = 0; j < cols; ++j) {
                        m[static_cast<size_t>(n * cols + j)] = static_cast<float>(row[static_cast<size_t>(j)] / z);
                    }
                }
            }
        }
    }
    return sample;
}

BetaTensor synth_beta(const Config& config, Archetype pattern, std::uint64_t seed) {
    validate(config);
    const int L = config.shape.layers;
    const int H = config.shape.heads_per_layer;
    const int K = config.schedule.num_scales();
    const auto cum = config.schedule.cumulative_all();
    std::vector<long long> t(static_cast<size_t>(K));
    for (int k = 1; k <= K; ++k) {
        t[static_cast<size_t>(k - 1)] = config.schedule.token_count(k);
    }

    BetaTensor beta = BetaTensor::zeros(L, H, K);
    for (int l = 1; l <= L; ++l) {
        for (int h = 1; h <= H; ++h) {
            for (int k1 = 1; k1 <= K; ++k1) {
                if (pattern == Archetype::random) {
                    RowRng rng(seed, l, h, k1);
                    double z = 0.0;
                    std::vector<double> g(static_cast<size_t>(k1));
                    for (int j = 0; j < k1; ++j) {
                        g[static_cast<size_t>(j)] = rng.next_exponential();
                        z += g[static_cast<size_t>(j)];
                    }
                    for (int j = 1; j <= k1; ++j) {
                        beta.at(l, h, k1, j) = g[static_cast<size_t>(j - 1)] / z;
                    }
                } else {
                    const auto w = block_weights(pattern, k1, t, cum);
                    for (int j = 1; j <= k1; ++j) {
                        beta.at(l, h, k1, j) = w[static_cast<size_t>(j - 1)];
                    }
                }
            }
        }
    }
    check_beta(beta, kBetaRowTol);
    return beta;
}

}  // namespace heatkv
