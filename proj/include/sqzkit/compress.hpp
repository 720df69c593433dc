#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "sqzkit/arch.hpp"
#include "sqzkit/train.hpp"

// Deep-Compression-style size pipeline: magnitude pruning, codebook
// quantization, relative sparse-index encoding and entropy-coded size
// accounting. This sizes and round-trips models; it does not retrain them.

namespace sqzkit {

struct CompressionConfig {
    double density = 0.33;   // fraction of weights kept nonzero
    int codebook_bits = 8;
    int index_bits = 4;
    bool entropy_code = false;

    void check() const {
        if (!(density > 0.0 && density <= 1.0)) {
            throw ParamError("density must be in (0,1], got " + std::to_string(density));
        }
        if (codebook_bits < 1 || codebook_bits > 16) {
            throw ParamError("codebook_bits must be in 1..16, got " + std::to_string(codebook_bits));
        }
        if (index_bits < 1 || index_bits > 16) {
            throw ParamError("index_bits must be in 1..16, got " + std::to_string(index_bits));
        }
    }
};

/// Keep mask for the ceil(density*n) largest-magnitude weights. Ties are
/// broken toward the lower index.
inline std::vector<std::uint8_t> prune_magnitude(std::span<const float> weights, double density) {
    if (weights.empty()) throw ParamError("prune_magnitude needs at least one weight");
    if (!(density > 0.0 && density <= 1.0)) {
        throw ParamError("density must be in (0,1], got " + std::to_string(density));
    }
    const std::size_t n = weights.size();
    const std::size_t keep =
        std::min(n, static_cast<std::size_t>(std::ceil(density * static_cast<double>(n))));

    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    auto stronger = [&](std::uint32_t a, std::uint32_t b) {
        const float ma = std::abs(weights[a]);
        const float mb = std::abs(weights[b]);
        if (ma != mb) return ma > mb;
        return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep - 1), idx.end(),
                     stronger);

    std::vector<std::uint8_t> mask(n, 0);
    for (std::size_t i = 0; i < keep; ++i) mask[idx[i]] = 1;
    return mask;
}

namespace detail {

struct KmeansResult {
    std::vector<float> centroids;
    std::vector<std::uint32_t> assignments;   // original order, nearest centroid
    std::vector<double> mse_history;          // one entry per assignment pass
};

// Lloyd iterations on scalars. Centroids start evenly spaced over
// [min, max] and stay sorted, so each assignment pass reduces to interval
// boundaries over the sorted values: cluster j owns (b_{j-1}, b_j], which
// assigns midpoint ties to the lower centroid index. Runs to an assignment
// fixpoint or `max_iterations`.
inline KmeansResult kmeans_1d(std::span<const float> values, int k, int max_iterations = 100) {
    const std::size_t n = values.size();
    std::vector<std::uint32_t> by_value(n);
    std::iota(by_value.begin(), by_value.end(), 0u);
    std::sort(by_value.begin(), by_value.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return a < b;
    });
    std::vector<double> sv(n);
    for (std::size_t i = 0; i < n; ++i) sv[i] = values[by_value[i]];

    std::vector<double> ps(n + 1, 0.0), ps2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ps[i + 1] = ps[i] + sv[i];
        ps2[i + 1] = ps2[i] + sv[i] * sv[i];
    }

    const double lo = sv.front(), hi = sv.back();
    std::vector<double> centroids(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        centroids[static_cast<std::size_t>(j)] =
            k == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(j) / (k - 1);
    }

    KmeansResult result;
    std::vector<std::size_t> split(static_cast<std::size_t>(k));  // split[j] = end of cluster j
    std::vector<std::size_t> prev_split;
    for (int iter = 0; iter < max_iterations; ++iter) {
        // assignment pass
        std::size_t begin = 0;
        for (int j = 0; j + 1 < k; ++j) {
            const double boundary =
                0.5 * (centroids[static_cast<std::size_t>(j)] + centroids[static_cast<std::size_t>(j) + 1]);
            const auto it = std::upper_bound(sv.begin() + static_cast<std::ptrdiff_t>(begin), sv.end(), boundary);
            split[static_cast<std::size_t>(j)] = static_cast<std::size_t>(it - sv.begin());
            begin = split[static_cast<std::size_t>(j)];
        }
        split[static_cast<std::size_t>(k) - 1] = n;

        double sse = 0.0;
        std::size_t start = 0;
        for (int j = 0; j < k; ++j) {
            const std::size_t end = split[static_cast<std::size_t>(j)];
            const double c = centroids[static_cast<std::size_t>(j)];
            sse += (ps2[end] - ps2[start]) - 2.0 * c * (ps[end] - ps[start]) +
                   static_cast<double>(end - start) * c * c;
            start = end;
        }
        result.mse_history.push_back(sse / static_cast<double>(n));

        if (split == prev_split) break;
        prev_split = split;

        // update pass; empty clusters keep their centroid
        start = 0;
        for (int j = 0; j < k; ++j) {
            const std::size_t end = split[static_cast<std::size_t>(j)];
            if (end > start) {
                centroids[static_cast<std::size_t>(j)] =
                    (ps[end] - ps[start]) / static_cast<double>(end - start);
            }
            start = end;
        }
    }

    // final nearest-centroid assignment in original order, against the final
    // centroids (needed when the loop exhausted max_iterations)
    result.assignments.resize(n);
    std::size_t begin = 0;
    for (int j = 0; j < k; ++j) {
        std::size_t end = n;
        if (j + 1 < k) {
            const double boundary =
                0.5 * (centroids[static_cast<std::size_t>(j)] + centroids[static_cast<std::size_t>(j) + 1]);
            end = static_cast<std::size_t>(
                std::upper_bound(sv.begin() + static_cast<std::ptrdiff_t>(begin), sv.end(), boundary) -
                sv.begin());
        }
        for (std::size_t i = begin; i < end; ++i) {
            result.assignments[by_value[i]] = static_cast<std::uint32_t>(j);
        }
        begin = end;
    }

    result.centroids.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        result.centroids[static_cast<std::size_t>(j)] =
            static_cast<float>(centroids[static_cast<std::size_t>(j)]);
    }
    return result;
}

}  // namespace detail

struct Codebook {
    std::vector<float> values;                // 2^bits centroids
    std::vector<std::uint32_t> assignments;   // per input weight
    std::vector<double> mse_per_iteration;    // Lloyd trace, nonincreasing
};

/// K-means codebook over the surviving weights, k = 2^bits, centroids
/// initialized linearly over [min, max], Lloyd iterations to an assignment
/// fixpoint (or 100 iterations).
inline Codebook quantize_codebook(std::span<const float> nonzero_weights, int bits) {
    if (bits < 1 || bits > 16) throw ParamError("codebook bits must be in 1..16, got " + std::to_string(bits));
    if (nonzero_weights.empty()) throw ParamError("quantize_codebook needs at least one nonzero weight");
    auto r = detail::kmeans_1d(nonzero_weights, 1 << bits);
    return Codebook{std::move(r.centroids), std::move(r.assignments), std::move(r.mse_history)};
}

/// Relative (gap) encoding of nonzero positions. Each entry skips `gap`
/// zeros and then occupies one position itself. A required gap larger than
/// 2^index_bits - 1 is bridged by filler entries carrying the maximum gap
/// and a zero-valued assignment.
struct SparseIndexStream {
    std::vector<std::uint32_t> gaps;       // one per entry (real and filler)
    std::vector<std::uint8_t> is_filler;   // parallel to gaps
    std::int64_t filler_count = 0;
    int index_bits = 4;
};

inline SparseIndexStream encode_sparse_indices(std::span<const std::uint8_t> mask, int index_bits) {
    if (index_bits < 1 || index_bits > 16) {
        throw ParamError("index_bits must be in 1..16, got " + std::to_string(index_bits));
    }
    const std::int64_t max_gap = (std::int64_t{1} << index_bits) - 1;
    SparseIndexStream stream;
    stream.index_bits = index_bits;
    std::int64_t prev = -1;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        std::int64_t gap = static_cast<std::int64_t>(p) - prev - 1;
        while (gap > max_gap) {
            stream.gaps.push_back(static_cast<std::uint32_t>(max_gap));
            stream.is_filler.push_back(1);
            ++stream.filler_count;
            gap -= max_gap + 1;
        }
        stream.gaps.push_back(static_cast<std::uint32_t>(gap));
        stream.is_filler.push_back(0);
        prev = static_cast<std::int64_t>(p);
    }
    return stream;
}

/// Positions of the real nonzeros (fillers are skipped over).
inline std::vector<std::int64_t> decode_sparse_indices(const SparseIndexStream& stream) {
    std::vector<std::int64_t> positions;
    std::int64_t pos = -1;
    for (std::size_t i = 0; i < stream.gaps.size(); ++i) {
        pos += static_cast<std::int64_t>(stream.gaps[i]) + 1;
        if (!stream.is_filler[i]) positions.push_back(pos);
    }
    return positions;
}

struct HuffmanSize {
    std::int64_t payload_bits = 0;
    std::int64_t table_bits = 0;
    std::int64_t total_bits() const { return payload_bits + table_bits; }
};

/// Size of a canonical Huffman coding of the assignment stream: optimal
/// prefix-code payload plus a table overhead of 4 bytes + 2 bytes per
/// distinct symbol. A single-symbol alphabet costs 1 bit per symbol.
inline HuffmanSize entropy_code_size(std::span<const std::uint32_t> assignments) {
    if (assignments.empty()) throw ParamError("entropy_code_size needs a nonempty stream");

    std::uint32_t max_sym = 0;
    for (auto a : assignments) max_sym = std::max(max_sym, a);
    std::vector<std::int64_t> freq(static_cast<std::size_t>(max_sym) + 1, 0);
    for (auto a : assignments) ++freq[a];

    struct HNode {
        std::int64_t weight;
        std::uint32_t order;  // creation order, for deterministic ties
        int left = -1, right = -1;
    };
    std::vector<HNode> nodes;
    auto cmp = [&](std::uint32_t a, std::uint32_t b) {
        if (nodes[a].weight != nodes[b].weight) return nodes[a].weight > nodes[b].weight;
        return nodes[a].order > nodes[b].order;
    };
    std::priority_queue<std::uint32_t, std::vector<std::uint32_t>, decltype(cmp)> heap(cmp);

    std::int64_t distinct = 0;
    for (std::size_t s = 0; s < freq.size(); ++s) {
        if (freq[s] == 0) continue;
        ++distinct;
        nodes.push_back(HNode{freq[s], static_cast<std::uint32_t>(nodes.size())});
        heap.push(static_cast<std::uint32_t>(nodes.size() - 1));
    }

    HuffmanSize size;
    size.table_bits = 8 * (4 + 2 * distinct);
    if (distinct == 1) {
        size.payload_bits = static_cast<std::int64_t>(assignments.size());  // degenerate: 1 bit/symbol
        return size;
    }
    while (heap.size() > 1) {
        const auto a = heap.top();
        heap.pop();
        const auto b = heap.top();
        heap.pop();
        nodes.push_back(HNode{nodes[a].weight + nodes[b].weight,
                              static_cast<std::uint32_t>(nodes.size()), static_cast<int>(a),
                              static_cast<int>(b)});
        heap.push(static_cast<std::uint32_t>(nodes.size() - 1));
    }

    // payload = sum over leaves of freq * depth
    std::vector<std::pair<std::uint32_t, std::int64_t>> stack{{heap.top(), 0}};
    while (!stack.empty()) {
        const auto [id, depth] = stack.back();
        stack.pop_back();
        if (nodes[id].left < 0) {
            size.payload_bits += nodes[id].weight * depth;
        } else {
            stack.push_back({static_cast<std::uint32_t>(nodes[id].left), depth + 1});
            stack.push_back({static_cast<std::uint32_t>(nodes[id].right), depth + 1});
        }
    }
    return size;
}

/// One compressed parameter block (a conv layer's weights and bias,
/// flattened back to back). `codebook[0]` is reserved as exactly 0.0f so
/// that filler entries decode to zero with no side channel; real
/// assignments occupy indices 1 .. 2^codebook_bits - 1.
struct CompressedLayer {
    std::string name;
    int codebook_bits = 8;
    int index_bits = 4;
    std::vector<float> codebook;              // 2^codebook_bits values, [0] == 0.0f
    std::vector<std::uint32_t> gaps;          // per entry
    std::vector<std::uint32_t> assignments;   // per entry; 0 marks a filler
    std::int64_t dense_count = 0;
    std::int64_t nonzero_count = 0;
    std::int64_t filler_count = 0;

    std::int64_t entry_count() const { return static_cast<std::int64_t>(gaps.size()); }

    // Accounting per the container scheme: byte-padded fixed-width streams,
    // codebook floats, and a fixed 16-byte layer header.
    static constexpr std::int64_t kHeaderBytes = 16;
    std::int64_t fixed_assignment_bytes() const {
        return (entry_count() * codebook_bits + 7) / 8;
    }
    std::int64_t index_stream_bytes() const { return (entry_count() * index_bits + 7) / 8; }
    std::int64_t codebook_bytes() const { return static_cast<std::int64_t>(codebook.size()) * 4; }
    std::int64_t bytes(bool entropy, std::int64_t entropy_assignment_bits) const {
        const std::int64_t assignment_bytes =
            entropy ? (entropy_assignment_bits + 7) / 8 : fixed_assignment_bytes();
        return assignment_bytes + index_stream_bytes() + codebook_bytes() + kHeaderBytes;
    }
};

struct CompressionReport {
    std::vector<CompressedLayer> layers;
    std::vector<std::int64_t> layer_bytes;            // accounted size per layer
    std::vector<std::int64_t> layer_entropy_bits;     // huffman total per layer
    bool entropy_code = false;
    std::int64_t dense_bytes = 0;       // 32-bit dense storage
    std::int64_t compressed_bytes = 0;
    double baseline_bytes = 0.0;
    double ratio = 0.0;                 // baseline_bytes / compressed_bytes
};

/// Prune -> quantize -> index-encode (-> entropy-size) every conv layer.
/// The baseline is caller-supplied (for the classic comparison: a 240 MB
/// dense reference model).
inline CompressionReport compress_model(const ArchGraph& g, const ModelParams& params,
                                        const CompressionConfig& config, double baseline_bytes) {
    config.check();
    if (!(baseline_bytes > 0.0)) throw ParamError("baseline bytes must be positive");

    CompressionReport report;
    report.entropy_code = config.entropy_code;
    report.baseline_bytes = baseline_bytes;

    for (int id : g.topo_order()) {
        const Node& n = g.node(id);
        if (!n.has_weights()) continue;
        const auto& entry = params.find(n.name);
        if (entry.weights.shape != std::vector<int>{n.filters, n.in_channels, n.kh, n.kw} ||
            entry.bias.shape != std::vector<int>{n.filters}) {
            throw ConfigError(n.name + ": weights " + shape_str(entry.weights.shape) + "/" +
                              shape_str(entry.bias.shape) + " do not match graph shapes");
        }

        std::vector<float> flat;
        flat.reserve(entry.weights.size() + entry.bias.size());
        flat.insert(flat.end(), entry.weights.data.begin(), entry.weights.data.end());
        flat.insert(flat.end(), entry.bias.data.begin(), entry.bias.data.end());

        const auto mask = prune_magnitude(flat, config.density);
        std::vector<float> kept;
        for (std::size_t i = 0; i < flat.size(); ++i) {
            if (mask[i]) kept.push_back(flat[i]);
        }

        // index 0 is the reserved zero entry, so quantize with one fewer centroid
        const int k = std::max(1, (1 << config.codebook_bits) - 1);
        auto km = detail::kmeans_1d(kept, k);
        auto stream = encode_sparse_indices(mask, config.index_bits);

        CompressedLayer layer;
        layer.name = n.name;
        layer.codebook_bits = config.codebook_bits;
        layer.index_bits = config.index_bits;
        layer.codebook.assign(static_cast<std::size_t>(1) << config.codebook_bits, 0.0f);
        for (std::size_t j = 0; j < km.centroids.size(); ++j) layer.codebook[j + 1] = km.centroids[j];
        layer.dense_count = static_cast<std::int64_t>(flat.size());
        layer.nonzero_count = static_cast<std::int64_t>(kept.size());
        layer.filler_count = stream.filler_count;
        layer.gaps = std::move(stream.gaps);
        layer.assignments.reserve(layer.gaps.size());
        std::size_t next_real = 0;
        for (std::size_t i = 0; i < layer.gaps.size(); ++i) {
            if (stream.is_filler[i]) {
                layer.assignments.push_back(0);
            } else {
                layer.assignments.push_back(km.assignments[next_real++] + 1);
            }
        }

        const HuffmanSize huff = entropy_code_size(layer.assignments);
        report.layer_entropy_bits.push_back(huff.total_bits());
        report.layer_bytes.push_back(layer.bytes(config.entropy_code, huff.total_bits()));
        report.dense_bytes += layer.dense_count * 4;
        report.compressed_bytes += report.layer_bytes.back();
        report.layers.push_back(std::move(layer));
    }

    report.ratio = baseline_bytes / static_cast<double>(report.compressed_bytes);
    return report;
}

/// Expands a compressed layer back to its dense parameter vector: every
/// entry writes codebook[assignment] at its position, and since
/// codebook[0] == 0, fillers land as zeros.
inline std::vector<float> decompress_layer(const CompressedLayer& layer) {
    std::vector<float> dense(static_cast<std::size_t>(layer.dense_count), 0.0f);
    std::int64_t pos = -1;
    for (std::size_t i = 0; i < layer.gaps.size(); ++i) {
        pos += static_cast<std::int64_t>(layer.gaps[i]) + 1;
        if (pos >= layer.dense_count) throw FormatError(layer.name + ": index stream overruns layer");
        dense[static_cast<std::size_t>(pos)] = layer.codebook[layer.assignments[i]];
    }
    return dense;
}

inline ModelParams decompress_model(const ArchGraph& g, const std::vector<CompressedLayer>& layers) {
    ModelParams params;
    std::size_t li = 0;
    for (int id : g.topo_order()) {
        const Node& n = g.node(id);
        if (!n.has_weights()) continue;
        if (li >= layers.size() || layers[li].name != n.name) {
            throw FormatError("compressed container does not match graph at layer " + n.name);
        }
        const auto dense = decompress_layer(layers[li]);
        const auto wc = static_cast<std::size_t>(n.weight_count());
        if (dense.size() != wc + static_cast<std::size_t>(n.bias_count())) {
            throw FormatError(n.name + ": dense count " + std::to_string(dense.size()) +
                              " does not match graph shapes");
        }
        ModelParams::Entry e;
        e.name = n.name;
        e.weights = Tensor({n.filters, n.in_channels, n.kh, n.kw},
                           std::vector<float>(dense.begin(), dense.begin() + static_cast<std::ptrdiff_t>(wc)));
        e.bias = Tensor({n.filters}, std::vector<float>(dense.begin() + static_cast<std::ptrdiff_t>(wc), dense.end()));
        params.layers.push_back(std::move(e));
        ++li;
    }
    if (li != layers.size()) throw FormatError("compressed container has extra layers");
    return params;
}

}  // namespace sqzkit
