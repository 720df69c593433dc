#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sqzkit/arch.hpp"

// Parameter counting, model-size computation, activation-map profiling and
// the metaparameter sweeps over squeeze ratio and pct3x3.

namespace sqzkit {

struct SizeRow {
    std::string name;
    std::int64_t weight_count = 0;
    std::int64_t bias_count = 0;
    double bytes = 0.0;
};

/// Per-layer and total parameter counts. bytes = count * bytes_per_weight,
/// biases included in the count.
struct SizeReport {
    std::vector<SizeRow> rows;
    std::int64_t total_weights = 0;
    std::int64_t total_biases = 0;
    std::int64_t total_params = 0;
    double total_bytes = 0.0;
    double bytes_per_weight = 4.0;
};

/// Conv layers contribute in_ch*filters*kh*kw weights plus one bias per
/// filter; every other node contributes zero. Requires a validated graph.
inline SizeReport count_params(const ArchGraph& g, double bytes_per_weight = 4.0) {
    if (!g.validated) throw ConfigError("count_params requires a validated graph; run validate() first");
    if (!(bytes_per_weight > 0.0)) throw ParamError("bytes_per_weight must be positive");

    SizeReport report;
    report.bytes_per_weight = bytes_per_weight;
    for (const auto& n : g.nodes) {
        if (!n.has_weights()) continue;
        SizeRow row;
        row.name = n.name;
        row.weight_count = n.weight_count();
        row.bias_count = n.bias_count();
        row.bytes = static_cast<double>(row.weight_count + row.bias_count) * bytes_per_weight;
        report.total_weights += row.weight_count;
        report.total_biases += row.bias_count;
        report.rows.push_back(std::move(row));
    }
    report.total_params = report.total_weights + report.total_biases;
    report.total_bytes = static_cast<double>(report.total_params) * bytes_per_weight;
    return report;
}

/// Bytes required to store all parameters at the given precision.
inline double model_size(const ArchGraph& g, double bytes_per_weight) {
    return count_params(g, bytes_per_weight).total_bytes;
}

struct ActivationRow {
    std::string name;
    std::string kind;
    std::vector<int> shape;
    std::int64_t elements = 0;
    bool downsamples = false;
};

struct ActivationProfile {
    std::vector<ActivationRow> rows;           // topological order
    std::int64_t total_elements = 0;
    std::vector<std::string> downsampling_nodes;
};

/// Reports every node's activation element count and flags the nodes with
/// spatial stride > 1 (the downsampling points).
inline ActivationProfile activation_profile(const ArchGraph& graph,
                                            const std::vector<int>& input_shape) {
    ArchGraph g = graph;
    infer_shapes(g, input_shape);

    ActivationProfile profile;
    for (int id : g.topo_order()) {
        const Node& n = g.node(id);
        ActivationRow row;
        row.name = n.name;
        row.kind = node_kind_name(n.kind);
        row.shape = n.out_shape;
        row.elements = shape_product(n.out_shape);
        row.downsamples = (n.kind == NodeKind::kConv && n.stride > 1) ||
                          (n.kind == NodeKind::kMaxPool && n.pool_stride > 1);
        if (row.downsamples) profile.downsampling_nodes.push_back(n.name);
        profile.total_elements += row.elements;
        profile.rows.push_back(std::move(row));
    }
    return profile;
}

struct SweepRow {
    double value = 0.0;
    std::int64_t total_params = 0;
    double size_bytes = 0.0;
    std::optional<double> toy_accuracy;
};

struct SweepResult {
    std::string param_name;  // "sr" or "pct3x3"
    std::vector<SweepRow> rows;  // sorted by swept value, one per value
};

/// Optional per-row hook: given the row's metaparameters, train a toy-scale
/// model and return held-out accuracy. Results are labeled "toy" throughout;
/// they are never ImageNet numbers.
using ToyTrainHook = std::function<double(const Metaparams&)>;

namespace detail {

inline std::string fmt_value(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

inline SweepResult run_sweep(const Metaparams& base, std::string param_name,
                             std::vector<double> values,
                             const std::function<void(Metaparams&, double)>& apply,
                             const ToyTrainHook& hook) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    SweepResult result;
    result.param_name = std::move(param_name);
    for (double v : values) {
        Metaparams mp = base;
        apply(mp, v);
        ArchGraph g = build_squeezenet(mp, Variant::kVanilla);
        const auto violations = validate(g);
        if (!violations.empty()) {
            throw MetaparamError(result.param_name + "=" + fmt_value(v) + ": " + violations.front());
        }
        SweepRow row;
        row.value = v;
        const SizeReport sizes = count_params(g);
        row.total_params = sizes.total_params;
        row.size_bytes = sizes.total_bytes;
        if (hook) row.toy_accuracy = hook(mp);
        result.rows.push_back(std::move(row));
    }
    return result;
}

}  // namespace detail

/// One independently generated and validated model per squeeze ratio.
inline SweepResult sweep_sr(const Metaparams& base, const std::vector<double>& sr_values,
                            const ToyTrainHook& hook = {}) {
    for (double v : sr_values) {
        if (!(v > 0.0 && v <= 1.0)) {
            throw ParamError("sr value " + detail::fmt_value(v) + " outside (0,1]");
        }
    }
    return detail::run_sweep(base, "sr", sr_values,
                             [](Metaparams& mp, double v) { mp.sr = v; }, hook);
}

/// One model per pct3x3 value in [0.01, 0.99]. The intended base carries
/// base_e = incr_e = 128, freq = 2 and sr = 0.5, so that the pct3x3 = 0.5
/// row is byte-for-byte the sr = 0.5 row of the squeeze-ratio sweep.
inline SweepResult sweep_pct3x3(const Metaparams& base, const std::vector<double>& pct_values,
                                const ToyTrainHook& hook = {}) {
    for (double v : pct_values) {
        if (!(v >= 0.01 && v <= 0.99)) {
            throw ParamError("pct3x3 value " + detail::fmt_value(v) + " outside [0.01,0.99]");
        }
    }
    return detail::run_sweep(base, "pct3x3", pct_values,
                             [](Metaparams& mp, double v) { mp.pct3x3 = v; }, hook);
}

}  // namespace sqzkit
