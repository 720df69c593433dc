#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "sqzkit/error.hpp"
#include "sqzkit/tensor.hpp"

// Metaparameter expansion and computation-graph construction for
// SqueezeNet-family architectures in three macroarchitecture variants.

namespace sqzkit {

/// Per-module filter counts: squeeze 1x1 filters, expand 1x1 filters,
/// expand 3x3 filters. The squeeze layer must be narrower than the expand
/// layer (s1x1 < e1x1 + e3x3) so it limits the input channels seen by the
/// 3x3 filters.
struct FireSpec {
    int s1x1;
    int e1x1;
    int e3x3;

    int expand_total() const { return e1x1 + e3x3; }

    std::optional<std::string> violation() const {
        if (s1x1 < 1 || e1x1 < 1 || e3x3 < 1) {
            return "fire filter counts must all be >= 1, got (" + std::to_string(s1x1) + "," +
                   std::to_string(e1x1) + "," + std::to_string(e3x3) + ")";
        }
        if (s1x1 >= e1x1 + e3x3) {
            return "squeeze width " + std::to_string(s1x1) +
                   " must be less than expand width " + std::to_string(e1x1 + e3x3);
        }
        return std::nullopt;
    }
};

struct StemSpec {
    int filters = 96;
    int kernel = 7;
    int stride = 2;
    int pad = 3;  // kernel/2 keeps conv10's input at 13x13 for 224x224 input
};

struct HeadSpec {
    int filters = 1000;  // number of classes; kernel is fixed at 1x1
};

enum class Variant { kVanilla, kSimpleBypass, kComplexBypass };

/// Where complex-bypass 1x1 convs go: on the even fire modules only
/// (2, 4, 6, 8 — the ones a simple bypass cannot cover), or on all eight.
enum class BypassConvPlacement { kRemaining, kAll };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kVanilla: return "vanilla";
        case Variant::kSimpleBypass: return "simple_bypass";
        case Variant::kComplexBypass: return "complex_bypass";
    }
    return "?";
}

/// Generators for all per-module FireSpecs. Expand width grows by incr_e
/// every freq modules starting from base_e; pct3x3 splits each expand layer
/// between 1x1 and 3x3 filters; sr sizes the squeeze layer.
struct Metaparams {
    int base_e = 128;
    int incr_e = 128;
    int freq = 2;
    double pct3x3 = 0.5;
    double sr = 0.125;
    int n_fire_modules = 8;
    StemSpec stem;
    HeadSpec head;

    void check() const {
        if (base_e < 1) throw MetaparamError("base_e must be >= 1, got " + std::to_string(base_e));
        if (incr_e < 0) throw MetaparamError("incr_e must be >= 0, got " + std::to_string(incr_e));
        if (freq < 1) throw MetaparamError("freq must be >= 1, got " + std::to_string(freq));
        if (!(pct3x3 >= 0.0 && pct3x3 <= 1.0)) {
            throw MetaparamError("pct3x3 must be in [0,1], got " + std::to_string(pct3x3));
        }
        if (!(sr > 0.0 && sr <= 1.0)) {
            throw MetaparamError("sr must be in (0,1], got " + std::to_string(sr));
        }
        if (n_fire_modules < 1) {
            throw MetaparamError("n_fire_modules must be >= 1, got " + std::to_string(n_fire_modules));
        }
        if (stem.filters < 1 || stem.kernel < 1 || stem.stride < 1 || stem.pad < 0) {
            throw MetaparamError("stem filters/kernel/stride must be >= 1 and pad >= 0");
        }
        if (head.filters < 1) throw MetaparamError("head filters must be >= 1");
    }
};

inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

/// Expands metaparameters into one FireSpec per module. Module index i runs
/// from 0 (fire2). e_i = base_e + incr_e*floor(i/freq); e3x3 = round(e_i*pct3x3);
/// e1x1 = e_i - e3x3; s1x1 = max(1, round(sr*e_i)). Rounding is half-up.
inline std::vector<FireSpec> expand_metaparams(const Metaparams& mp) {
    mp.check();
    std::vector<FireSpec> specs;
    specs.reserve(static_cast<std::size_t>(mp.n_fire_modules));
    for (int i = 0; i < mp.n_fire_modules; ++i) {
        const int e = mp.base_e + mp.incr_e * (i / mp.freq);
        FireSpec spec;
        spec.e3x3 = round_half_up(e * mp.pct3x3);
        spec.e1x1 = e - spec.e3x3;
        spec.s1x1 = std::max(1, round_half_up(mp.sr * e));
        if (auto why = spec.violation()) {
            throw MetaparamError("fire module " + std::to_string(i + 2) + ": " + *why);
        }
        specs.push_back(spec);
    }
    return specs;
}

enum class NodeKind {
    kInput,
    kConv,
    kRelu,
    kMaxPool,
    kGlobalAvgPool,
    kDropout,
    kConcat,
    kAdd,
    kOutput,
};

inline std::string node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::kInput: return "input";
        case NodeKind::kConv: return "conv";
        case NodeKind::kRelu: return "relu";
        case NodeKind::kMaxPool: return "maxpool";
        case NodeKind::kGlobalAvgPool: return "global_avg_pool";
        case NodeKind::kDropout: return "dropout";
        case NodeKind::kConcat: return "concat";
        case NodeKind::kAdd: return "add";
        case NodeKind::kOutput: return "output";
    }
    return "?";
}

struct Node {
    int id = -1;
    std::string name;
    NodeKind kind = NodeKind::kInput;
    std::vector<int> inputs;

    // conv
    int filters = 0;
    int in_channels = 0;
    int kh = 0, kw = 0;
    int stride = 1;
    int pad = 0;

    // maxpool
    int pool_k = 0;
    int pool_stride = 0;

    float dropout_ratio = 0.0f;

    // set by infer_shapes
    std::vector<int> out_shape;

    bool has_weights() const { return kind == NodeKind::kConv; }
    std::int64_t weight_count() const {
        return kind == NodeKind::kConv
                   ? static_cast<std::int64_t>(filters) * in_channels * kh * kw
                   : 0;
    }
    std::int64_t bias_count() const { return kind == NodeKind::kConv ? filters : 0; }
};

struct FireInfo {
    std::string name;  // "fire2" .. "fire9"
    FireSpec spec;
    int concat_node = -1;  // module output before any bypass add
};

/// DAG of layer nodes. Immutable after build; `validated` flips when
/// validate() finds no violations, `shapes_inferred` after infer_shapes().
struct ArchGraph {
    std::vector<Node> nodes;
    int input_channels = 3;
    Variant variant = Variant::kVanilla;
    std::vector<FireInfo> fires;
    std::vector<int> default_input_shape{3, 224, 224};
    bool validated = false;
    bool shapes_inferred = false;

    int add_node(Node n) {
        n.id = static_cast<int>(nodes.size());
        nodes.push_back(std::move(n));
        return nodes.back().id;
    }

    const Node& node(int id) const { return nodes[static_cast<std::size_t>(id)]; }

    int input_node() const {
        for (const auto& n : nodes) {
            if (n.kind == NodeKind::kInput) return n.id;
        }
        throw ConfigError("graph has no input node");
    }

    int output_node() const {
        for (const auto& n : nodes) {
            if (n.kind == NodeKind::kOutput) return n.id;
        }
        throw ConfigError("graph has no output node");
    }

    /// Topological order via Kahn's algorithm; throws on cycles.
    std::vector<int> topo_order() const {
        std::vector<int> indegree(nodes.size(), 0);
        for (const auto& n : nodes) {
            indegree[static_cast<std::size_t>(n.id)] = static_cast<int>(n.inputs.size());
        }
        std::vector<std::vector<int>> consumers(nodes.size());
        for (const auto& n : nodes) {
            for (int in : n.inputs) consumers[static_cast<std::size_t>(in)].push_back(n.id);
        }
        std::queue<int> ready;
        for (const auto& n : nodes) {
            if (indegree[static_cast<std::size_t>(n.id)] == 0) ready.push(n.id);
        }
        std::vector<int> order;
        order.reserve(nodes.size());
        while (!ready.empty()) {
            const int id = ready.front();
            ready.pop();
            order.push_back(id);
            for (int c : consumers[static_cast<std::size_t>(id)]) {
                if (--indegree[static_cast<std::size_t>(c)] == 0) ready.push(c);
            }
        }
        if (order.size() != nodes.size()) throw ConfigError("graph contains a cycle");
        return order;
    }
};

namespace detail {

// squeeze 1x1 + ReLU, then parallel 1x1 / 3x3 (1-pixel zero pad) expands,
// each + ReLU, channel-concatenated. Returns the concat node id.
inline int append_fire(ArchGraph& g, const std::string& name, const FireSpec& spec,
                       int input_id, int in_channels) {
    Node squeeze;
    squeeze.name = name + "_squeeze1x1";
    squeeze.kind = NodeKind::kConv;
    squeeze.inputs = {input_id};
    squeeze.filters = spec.s1x1;
    squeeze.in_channels = in_channels;
    squeeze.kh = squeeze.kw = 1;
    const int squeeze_id = g.add_node(squeeze);

    Node squeeze_relu;
    squeeze_relu.name = name + "_relu_squeeze";
    squeeze_relu.kind = NodeKind::kRelu;
    squeeze_relu.inputs = {squeeze_id};
    const int squeeze_relu_id = g.add_node(squeeze_relu);

    Node e1;
    e1.name = name + "_expand1x1";
    e1.kind = NodeKind::kConv;
    e1.inputs = {squeeze_relu_id};
    e1.filters = spec.e1x1;
    e1.in_channels = spec.s1x1;
    e1.kh = e1.kw = 1;
    const int e1_id = g.add_node(e1);

    Node e1_relu;
    e1_relu.name = name + "_relu_expand1x1";
    e1_relu.kind = NodeKind::kRelu;
    e1_relu.inputs = {e1_id};
    const int e1_relu_id = g.add_node(e1_relu);

    Node e3;
    e3.name = name + "_expand3x3";
    e3.kind = NodeKind::kConv;
    e3.inputs = {squeeze_relu_id};
    e3.filters = spec.e3x3;
    e3.in_channels = spec.s1x1;
    e3.kh = e3.kw = 3;
    e3.pad = 1;
    const int e3_id = g.add_node(e3);

    Node e3_relu;
    e3_relu.name = name + "_relu_expand3x3";
    e3_relu.kind = NodeKind::kRelu;
    e3_relu.inputs = {e3_id};
    const int e3_relu_id = g.add_node(e3_relu);

    Node concat;
    concat.name = name + "_concat";
    concat.kind = NodeKind::kConcat;
    concat.inputs = {e1_relu_id, e3_relu_id};
    return g.add_node(concat);
}

}  // namespace detail

/// Standalone fire module wrapped with input/output nodes, mainly for
/// inspection and tests. Output channels are e1x1 + e3x3.
inline ArchGraph build_fire(const FireSpec& spec, int in_channels) {
    if (auto why = spec.violation()) throw MetaparamError(*why);
    if (in_channels < 1) throw MetaparamError("in_channels must be >= 1");
    ArchGraph g;
    g.input_channels = in_channels;
    g.default_input_shape = {in_channels, 8, 8};

    Node input;
    input.name = "input";
    input.kind = NodeKind::kInput;
    const int input_id = g.add_node(input);

    const int concat_id = detail::append_fire(g, "fire", spec, input_id, in_channels);
    g.fires.push_back(FireInfo{"fire", spec, concat_id});

    Node output;
    output.name = "output";
    output.kind = NodeKind::kOutput;
    output.inputs = {concat_id};
    g.add_node(output);
    return g;
}

/// Builds the full architecture: conv1+ReLU, maxpool, fire2..fire(n+1) with
/// maxpools after fire4 and fire8, dropout(0.5) after the last fire, 1x1
/// conv10+ReLU, global average pool.
///
/// simple_bypass adds elementwise-add shortcuts around the odd fire modules
/// (3, 5, 7, 9): the input of each bypassed module is added to its output.
/// Both endpoints must carry equal channel counts. complex_bypass keeps
/// those and adds 1x1-conv shortcuts around the even modules (or all of
/// them, per `placement`), with filter count equal to the module's output
/// channels and no activation after the conv.
inline ArchGraph build_squeezenet(const Metaparams& mp, Variant variant,
                                  std::vector<int> input_shape = {3, 224, 224},
                                  BypassConvPlacement placement = BypassConvPlacement::kRemaining) {
    const std::vector<FireSpec> specs = expand_metaparams(mp);
    if (input_shape.size() != 3) {
        throw MetaparamError("input shape must be [C,H,W], got " + shape_str(input_shape));
    }

    ArchGraph g;
    g.variant = variant;
    g.input_channels = input_shape[0];
    g.default_input_shape = input_shape;

    Node input;
    input.name = "input";
    input.kind = NodeKind::kInput;
    int cursor = g.add_node(input);
    int channels = g.input_channels;

    Node conv1;
    conv1.name = "conv1";
    conv1.kind = NodeKind::kConv;
    conv1.inputs = {cursor};
    conv1.filters = mp.stem.filters;
    conv1.in_channels = channels;
    conv1.kh = conv1.kw = mp.stem.kernel;
    conv1.stride = mp.stem.stride;
    conv1.pad = mp.stem.pad;
    cursor = g.add_node(conv1);
    channels = mp.stem.filters;

    Node conv1_relu;
    conv1_relu.name = "relu_conv1";
    conv1_relu.kind = NodeKind::kRelu;
    conv1_relu.inputs = {cursor};
    cursor = g.add_node(conv1_relu);

    auto append_pool = [&g](const std::string& name, int input_id) {
        Node pool;
        pool.name = name;
        pool.kind = NodeKind::kMaxPool;
        pool.inputs = {input_id};
        pool.pool_k = 3;
        pool.pool_stride = 2;
        return g.add_node(pool);
    };
    cursor = append_pool("pool1", cursor);

    const int n = mp.n_fire_modules;
    for (int i = 0; i < n; ++i) {
        const std::string name = "fire" + std::to_string(i + 2);
        const int module_input = cursor;
        const int module_input_channels = channels;
        const int out_channels = specs[static_cast<std::size_t>(i)].expand_total();

        const int concat_id =
            detail::append_fire(g, name, specs[static_cast<std::size_t>(i)], cursor, channels);
        g.fires.push_back(FireInfo{name, specs[static_cast<std::size_t>(i)], concat_id});
        cursor = concat_id;
        channels = out_channels;

        // Paper convention: fire2 is module index 0, so simple bypasses sit
        // on odd indices (fire3, 5, 7, 9) and conv bypasses on the rest.
        const bool odd_module = (i % 2) == 1;
        const bool wants_simple = variant != Variant::kVanilla && odd_module &&
                                  !(variant == Variant::kComplexBypass &&
                                    placement == BypassConvPlacement::kAll);
        const bool wants_conv =
            variant == Variant::kComplexBypass &&
            (placement == BypassConvPlacement::kAll || !odd_module);

        if (wants_simple) {
            if (module_input_channels != out_channels) {
                throw BypassError("simple bypass around " + name +
                                  " needs equal channel counts, got " +
                                  std::to_string(module_input_channels) + " in vs " +
                                  std::to_string(out_channels) + " out");
            }
            Node add;
            add.name = "bypass_" + name + "_add";
            add.kind = NodeKind::kAdd;
            add.inputs = {module_input, cursor};
            cursor = g.add_node(add);
        } else if (wants_conv) {
            Node bconv;
            bconv.name = "bypass_" + name + "_conv1x1";
            bconv.kind = NodeKind::kConv;
            bconv.inputs = {module_input};
            bconv.filters = out_channels;
            bconv.in_channels = module_input_channels;
            bconv.kh = bconv.kw = 1;
            const int bconv_id = g.add_node(bconv);

            Node add;
            add.name = "bypass_" + name + "_add";
            add.kind = NodeKind::kAdd;
            add.inputs = {bconv_id, cursor};
            cursor = g.add_node(add);
        }

        // maxpool after fire4 and fire8 (and same positions for other n)
        if (i + 2 == 4 && n > 2) cursor = append_pool("pool4", cursor);
        if (i + 2 == 8 && n > 6) cursor = append_pool("pool8", cursor);
    }

    Node drop;
    drop.name = "drop" + std::to_string(n + 1);
    drop.kind = NodeKind::kDropout;
    drop.inputs = {cursor};
    drop.dropout_ratio = 0.5f;
    cursor = g.add_node(drop);

    Node conv10;
    conv10.name = "conv10";
    conv10.kind = NodeKind::kConv;
    conv10.inputs = {cursor};
    conv10.filters = mp.head.filters;
    conv10.in_channels = channels;
    conv10.kh = conv10.kw = 1;
    cursor = g.add_node(conv10);

    Node conv10_relu;
    conv10_relu.name = "relu_conv10";
    conv10_relu.kind = NodeKind::kRelu;
    conv10_relu.inputs = {cursor};
    cursor = g.add_node(conv10_relu);

    Node gap;
    gap.name = "pool10";
    gap.kind = NodeKind::kGlobalAvgPool;
    gap.inputs = {cursor};
    cursor = g.add_node(gap);

    Node output;
    output.name = "output";
    output.kind = NodeKind::kOutput;
    output.inputs = {cursor};
    g.add_node(output);
    return g;
}

/// Annotates every node with its output shape. Reports the first
/// inconsistency with the node name and both shapes. Idempotent.
inline void infer_shapes(ArchGraph& g, const std::vector<int>& input_shape) {
    if (input_shape.size() != 3) {
        throw ShapeError("input shape must be [C,H,W], got " + shape_str(input_shape));
    }
    if (input_shape[0] != g.input_channels) {
        throw ShapeError("input has " + std::to_string(input_shape[0]) +
                         " channels, graph was built for " + std::to_string(g.input_channels));
    }

    for (int id : g.topo_order()) {
        Node& n = g.nodes[static_cast<std::size_t>(id)];
        auto in_shape = [&](int slot) -> const std::vector<int>& {
            return g.node(n.inputs[static_cast<std::size_t>(slot)]).out_shape;
        };
        switch (n.kind) {
            case NodeKind::kInput:
                n.out_shape = input_shape;
                break;
            case NodeKind::kConv: {
                const auto& s = in_shape(0);
                if (s[0] != n.in_channels) {
                    throw ShapeError(n.name + ": expects " + std::to_string(n.in_channels) +
                                     " channels, producer " +
                                     g.node(n.inputs[0]).name + " emits " + shape_str(s));
                }
                if (s[1] + 2 * n.pad < n.kh || s[2] + 2 * n.pad < n.kw) {
                    throw ShapeError(n.name + ": kernel " + std::to_string(n.kh) + "x" +
                                     std::to_string(n.kw) + " exceeds padded input " +
                                     shape_str(s));
                }
                n.out_shape = {n.filters, (s[1] + 2 * n.pad - n.kh) / n.stride + 1,
                               (s[2] + 2 * n.pad - n.kw) / n.stride + 1};
                break;
            }
            case NodeKind::kRelu:
            case NodeKind::kDropout:
                n.out_shape = in_shape(0);
                break;
            case NodeKind::kMaxPool: {
                const auto& s = in_shape(0);
                if (s[1] < n.pool_k || s[2] < n.pool_k) {
                    throw ShapeError(n.name + ": pool window " + std::to_string(n.pool_k) +
                                     " exceeds input " + shape_str(s));
                }
                n.out_shape = {s[0], (s[1] - n.pool_k) / n.pool_stride + 1,
                               (s[2] - n.pool_k) / n.pool_stride + 1};
                break;
            }
            case NodeKind::kGlobalAvgPool:
                n.out_shape = {in_shape(0)[0]};
                break;
            case NodeKind::kConcat: {
                const auto& a = in_shape(0);
                const auto& b = in_shape(1);
                if (a[1] != b[1] || a[2] != b[2]) {
                    throw ShapeError(n.name + ": spatial mismatch between " +
                                     g.node(n.inputs[0]).name + " " + shape_str(a) + " and " +
                                     g.node(n.inputs[1]).name + " " + shape_str(b));
                }
                n.out_shape = {a[0] + b[0], a[1], a[2]};
                break;
            }
            case NodeKind::kAdd: {
                const auto& a = in_shape(0);
                const auto& b = in_shape(1);
                if (a != b) {
                    throw ShapeError(n.name + ": mismatched add endpoints " +
                                     g.node(n.inputs[0]).name + " " + shape_str(a) + " vs " +
                                     g.node(n.inputs[1]).name + " " + shape_str(b));
                }
                n.out_shape = a;
                break;
            }
            case NodeKind::kOutput:
                n.out_shape = in_shape(0);
                break;
        }
    }
    g.shapes_inferred = true;
}

/// Structural checks: acyclicity, single input/output, channel consistency
/// along every edge, FireSpec invariants, bypass channel equality. Returns
/// the violations found (empty means ok) and never throws on bad content.
inline std::vector<std::string> validate(ArchGraph& g) {
    std::vector<std::string> violations;

    std::vector<int> order;
    try {
        order = g.topo_order();
    } catch (const Error& e) {
        violations.emplace_back(e.what());
        return violations;
    }

    int inputs = 0, outputs = 0;
    for (const auto& n : g.nodes) {
        inputs += n.kind == NodeKind::kInput;
        outputs += n.kind == NodeKind::kOutput;
    }
    if (inputs != 1) violations.push_back("graph must have exactly one input node, found " + std::to_string(inputs));
    if (outputs != 1) violations.push_back("graph must have exactly one output node, found " + std::to_string(outputs));

    for (const auto& fi : g.fires) {
        if (auto why = fi.spec.violation()) violations.push_back(fi.name + ": " + *why);
    }

    // channel propagation is independent of spatial extents
    std::vector<int> channels(g.nodes.size(), -1);
    for (int id : order) {
        const Node& n = g.node(id);
        auto ch = [&](int slot) { return channels[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(slot)])]; };
        int out = -1;
        switch (n.kind) {
            case NodeKind::kInput: out = g.input_channels; break;
            case NodeKind::kConv:
                if (ch(0) >= 0 && ch(0) != n.in_channels) {
                    violations.push_back(n.name + ": expects " + std::to_string(n.in_channels) +
                                         " input channels but receives " + std::to_string(ch(0)));
                }
                out = n.filters;
                break;
            case NodeKind::kConcat:
                if (ch(0) >= 0 && ch(1) >= 0) out = ch(0) + ch(1);
                break;
            case NodeKind::kAdd:
                if (ch(0) >= 0 && ch(1) >= 0 && ch(0) != ch(1)) {
                    violations.push_back(n.name + ": add endpoints carry " + std::to_string(ch(0)) +
                                         " vs " + std::to_string(ch(1)) + " channels");
                }
                out = ch(0);
                break;
            default:
                out = ch(0);
                break;
        }
        channels[static_cast<std::size_t>(id)] = out;
    }

    if (g.shapes_inferred) {
        for (const auto& n : g.nodes) {
            if (n.kind == NodeKind::kAdd && g.node(n.inputs[0]).out_shape != g.node(n.inputs[1]).out_shape) {
                violations.push_back(n.name + ": inferred add shapes differ");
            }
        }
    }

    g.validated = violations.empty();
    return violations;
}

}  // namespace sqzkit
