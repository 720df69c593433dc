// Command-line front end: generate architectures from metaparameters,
// describe them, run desk-scale training, sweep the design space, and run
// the compression size pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "sqzkit/analysis.hpp"
#include "sqzkit/arch.hpp"
#include "sqzkit/compress.hpp"
#include "sqzkit/dataset.hpp"
#include "sqzkit/io.hpp"
#include "sqzkit/train.hpp"

namespace {

using namespace sqzkit;

std::uint32_t resolve_seed(const std::optional<std::uint32_t>& flag_seed) {
    if (flag_seed) return *flag_seed;
    if (const char* env = std::getenv("SQZKIT_SEED")) {
        return static_cast<std::uint32_t>(std::strtoul(env, nullptr, 10));
    }
    return 42;
}

struct VariantChoice {
    Variant variant = Variant::kVanilla;
    BypassConvPlacement placement = BypassConvPlacement::kRemaining;
};

VariantChoice parse_variant(const std::string& name) {
    if (name == "vanilla") return {Variant::kVanilla, BypassConvPlacement::kRemaining};
    if (name == "simple-bypass") return {Variant::kSimpleBypass, BypassConvPlacement::kRemaining};
    if (name == "complex-bypass") return {Variant::kComplexBypass, BypassConvPlacement::kRemaining};
    if (name == "complex-bypass-all") return {Variant::kComplexBypass, BypassConvPlacement::kAll};
    throw ParamError("unknown variant '" + name +
                     "' (expected vanilla, simple-bypass, complex-bypass or complex-bypass-all)");
}

std::vector<int> parse_input_shape(const std::string& text) {
    std::vector<int> shape;
    std::string cur;
    for (char c : text) {
        if (c == 'x' || c == 'X') {
            shape.push_back(std::atoi(cur.c_str()));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) shape.push_back(std::atoi(cur.c_str()));
    if (shape.size() != 3 || shape[0] < 1 || shape[1] < 1 || shape[2] < 1) {
        throw ParamError("input shape must be CxHxW, got '" + text + "'");
    }
    return shape;
}

ArchGraph build_validated(const ArchConfig& cfg, const std::vector<int>& input_shape) {
    ArchGraph g = build_squeezenet(cfg.mp, cfg.variant, input_shape, cfg.placement);
    const auto violations = validate(g);
    if (!violations.empty()) {
        throw ConfigError("architecture failed validation: " + violations.front());
    }
    return g;
}

std::string mb(double bytes) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f MB", bytes / 1e6);
    return buf;
}

// --- subcommand bodies ---

int run_generate(const Metaparams& mp, const std::string& variant_name_arg, const std::string& out) {
    const VariantChoice choice = parse_variant(variant_name_arg);
    const ArchConfig cfg{mp, choice.variant, choice.placement};
    ArchGraph g = build_validated(cfg, {3, 224, 224});
    const SizeReport sizes = count_params(g);
    std::printf("validation: ok\n");
    std::printf("fire modules: %zu, conv layers: %zu\n", g.fires.size(), sizes.rows.size());
    std::printf("total params: %lld (%s at 32-bit)\n", static_cast<long long>(sizes.total_params),
                mb(sizes.total_bytes).c_str());
    if (!out.empty()) {
        save_arch(out, cfg);
        std::printf("wrote %s\n", out.c_str());
    }
    return 0;
}

int run_describe(const std::string& arch_path, const std::string& input_shape_text) {
    const ArchConfig cfg = load_arch(arch_path);
    const std::vector<int> input_shape = parse_input_shape(input_shape_text);
    ArchGraph g = build_validated(cfg, input_shape);
    infer_shapes(g, input_shape);
    const SizeReport sizes = count_params(g);

    // one row per structural layer; fire modules are folded into single rows
    struct Row {
        std::string name, type, shape;
        std::int64_t params = 0;
        bool down = false;
    };
    std::vector<Row> rows;
    std::string open_fire;
    for (int id : g.topo_order()) {
        const Node& n = g.node(id);
        if (n.kind == NodeKind::kInput || n.kind == NodeKind::kOutput ||
            n.kind == NodeKind::kRelu) {
            continue;
        }
        const bool fire_member = n.name.rfind("fire", 0) == 0;
        const bool bypass_member = n.name.rfind("bypass_", 0) == 0;
        if (fire_member || bypass_member) {
            const std::string module =
                fire_member ? n.name.substr(0, n.name.find('_'))
                            : n.name.substr(0, n.name.find('_', 7));  // bypass_fireN
            if (bypass_member && n.kind == NodeKind::kConv) {
                rows.push_back({n.name, "conv 1x1", shape_str(n.out_shape),
                                n.weight_count() + n.bias_count(), false});
                continue;
            }
            if (open_fire != module && fire_member) {
                rows.push_back({module, "fire", "", 0, false});
                open_fire = module;
            }
            if (!rows.empty() && (fire_member || n.kind == NodeKind::kAdd)) {
                // accumulate params and track the module's final output shape
                for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
                    if (it->type == "fire" && (fire_member ? it->name == open_fire : true)) {
                        it->params += n.weight_count() + n.bias_count();
                        it->shape = shape_str(n.out_shape);
                        break;
                    }
                }
            }
            continue;
        }
        Row row;
        row.name = n.name;
        row.shape = shape_str(n.out_shape);
        row.params = n.weight_count() + n.bias_count();
        switch (n.kind) {
            case NodeKind::kConv:
                row.type = "conv " + std::to_string(n.kh) + "x" + std::to_string(n.kw) +
                           (n.stride > 1 ? "/" + std::to_string(n.stride) : "");
                row.down = n.stride > 1;
                break;
            case NodeKind::kMaxPool:
                row.type = "maxpool " + std::to_string(n.pool_k) + "x" + std::to_string(n.pool_k) +
                           "/" + std::to_string(n.pool_stride);
                row.down = n.pool_stride > 1;
                break;
            case NodeKind::kGlobalAvgPool: row.type = "global avgpool"; break;
            case NodeKind::kDropout: row.type = "dropout 0.5"; break;
            default: row.type = node_kind_name(n.kind); break;
        }
        rows.push_back(row);
    }

    std::printf("%-22s %-16s %-16s %12s  %s\n", "layer", "type", "output", "params", "down");
    for (const auto& row : rows) {
        std::printf("%-22s %-16s %-16s %12lld  %s\n", row.name.c_str(), row.type.c_str(),
                    row.shape.c_str(), static_cast<long long>(row.params), row.down ? "v" : "");
    }
    std::printf("total params: %lld (%s at 32-bit)\n", static_cast<long long>(sizes.total_params),
                mb(sizes.total_bytes).c_str());
    return 0;
}

ToyDataset load_idx_dataset(const std::string& prefix, int expected_classes);

int run_train(const std::string& arch_path, const std::string& dataset, int steps, int batch,
              double lr, const std::optional<std::uint32_t>& seed_flag,
              const std::string& weights_out) {
    const ArchConfig cfg = load_arch(arch_path);
    const std::uint32_t seed = resolve_seed(seed_flag);

    ToyDataset ds;
    if (dataset == "synthetic") {
        const int k = cfg.mp.head.filters;
        if (k != 2 && k != 4) {
            throw ConfigError("synthetic dataset supports 2 or 4 classes; arch head has " +
                              std::to_string(k));
        }
        ds = gen_toy_dataset(seed, 640, k);
    } else {
        ds = load_idx_dataset(dataset, cfg.mp.head.filters);
    }

    const int side = ds.images.front().dim(1);
    ArchGraph g = build_validated(cfg, {3, side, side});

    TrainConfig tc;
    tc.steps = steps;
    tc.batch = batch;
    tc.initial_lr = lr;
    tc.seed = seed;
    const TrainResult result = train_toy(g, ds, tc);

    if (!result.losses.empty()) {
        for (std::size_t i = 0; i < result.losses.size(); i += 20) {
            std::printf("step %4zu  loss %.4f\n", i, result.losses[i]);
        }
        std::printf("step %4zu  loss %.4f\n", result.losses.size() - 1, result.losses.back());
    }
    std::printf("held-out accuracy (toy): %.4f\n", result.final_accuracy);
    if (!weights_out.empty()) {
        save_weights(weights_out, result.params);
        std::printf("wrote %s\n", weights_out.c_str());
    }
    return 0;
}

int run_sweep(const std::string& param, const std::string& values_text, const std::string& out,
              bool train_toy_hook, const std::optional<std::uint32_t>& seed_flag) {
    if (param != "sr" && param != "pct3x3") {
        throw ParamError("--param must be sr or pct3x3, got '" + param + "'");
    }
    std::vector<double> values;
    std::string cur;
    auto push = [&] {
        if (cur.empty()) return;
        values.push_back(std::atof(cur.c_str()));
        cur.clear();
    };
    for (char c : values_text) {
        if (c == ',') push();
        else cur += c;
    }
    push();
    if (values.empty()) throw ParamError("--values must list at least one value");

    std::vector<double> deduped = values;
    std::sort(deduped.begin(), deduped.end());
    deduped.erase(std::unique(deduped.begin(), deduped.end()), deduped.end());
    if (deduped.size() != values.size()) {
        std::fprintf(stderr, "warning: duplicate sweep values removed\n");
    }

    std::string bad;
    for (double v : deduped) {
        const bool ok = param == "sr" ? (v > 0.0 && v <= 1.0) : (v >= 0.01 && v <= 0.99);
        if (!ok) bad += (bad.empty() ? "" : ", ") + detail::render_double(v);
    }
    if (!bad.empty()) {
        throw ParamError("values out of range for " + param + ": " + bad);
    }

    const std::uint32_t seed = resolve_seed(seed_flag);
    ToyTrainHook hook;
    if (train_toy_hook) {
        hook = [seed](const Metaparams& row_mp) {
            Metaparams toy = row_mp;
            toy.stem = StemSpec{16, 3, 1, 1};
            toy.head = HeadSpec{4};
            ArchGraph g = build_squeezenet(toy, Variant::kVanilla, {3, 32, 32});
            if (!validate(g).empty()) return 0.0;
            TrainConfig tc;
            tc.steps = 50;
            tc.batch = 4;
            tc.seed = seed;
            tc.initial_lr = 0.015;
            return train_toy(g, gen_toy_dataset(seed, 320, 4), tc).final_accuracy;
        };
    }

    Metaparams base;
    if (param == "pct3x3") base.sr = 0.5;  // the microarchitecture baseline for this sweep
    const SweepResult result =
        param == "sr" ? sweep_sr(base, deduped, hook) : sweep_pct3x3(base, deduped, hook);
    for (const auto& row : result.rows) {
        std::string line = param + "=" + detail::render_double(row.value) +
                           "  params=" + std::to_string(row.total_params) + "  size=" +
                           mb(row.size_bytes);
        if (row.toy_accuracy) line += "  toy-acc=" + detail::render_double(*row.toy_accuracy);
        std::printf("%s\n", line.c_str());
    }
    if (!out.empty()) {
        emit_csv(result, out);
        std::printf("wrote %s\n", out.c_str());
    }
    return 0;
}

int run_compress(const std::string& arch_path, const std::string& weights_path, double density,
                 int bits, int index_bits, bool huffman, double baseline_mb,
                 const std::string& out) {
    const ArchConfig cfg = load_arch(arch_path);
    ArchGraph g = build_validated(cfg, {3, 224, 224});
    const ModelParams params = load_weights(weights_path, g);

    CompressionConfig cc;
    cc.density = density;
    cc.codebook_bits = bits;
    cc.index_bits = index_bits;
    cc.entropy_code = huffman;
    const CompressionReport report = compress_model(g, params, cc, baseline_mb * 1e6);

    std::printf("%-22s %12s %10s %8s %12s\n", "layer", "dense", "nonzeros", "fillers", "bytes");
    for (std::size_t i = 0; i < report.layers.size(); ++i) {
        const auto& layer = report.layers[i];
        std::printf("%-22s %12lld %10lld %8lld %12lld\n", layer.name.c_str(),
                    static_cast<long long>(layer.dense_count),
                    static_cast<long long>(layer.nonzero_count),
                    static_cast<long long>(layer.filler_count),
                    static_cast<long long>(report.layer_bytes[i]));
    }
    std::printf("dense size: %s\n", mb(static_cast<double>(report.dense_bytes)).c_str());
    std::printf("compressed size: %s (huffman %s)\n",
                mb(static_cast<double>(report.compressed_bytes)).c_str(), huffman ? "on" : "off");
    std::printf("ratio vs %.0f MB baseline: %.0fx\n", baseline_mb, report.ratio);
    if (!out.empty()) {
        save_compressed(out, report.layers);
        std::printf("wrote %s\n", out.c_str());
    }
    return 0;
}

// Minimal IDX (ubyte) reader: expects <prefix>-images.idx3-ubyte and
// <prefix>-labels.idx1-ubyte. Grayscale images are replicated to 3 channels
// and scaled to [0,1].
ToyDataset load_idx_dataset(const std::string& prefix, int expected_classes) {
    auto read_all = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path + " for reading");
        return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
    };
    auto be32 = [](const std::vector<unsigned char>& b, std::size_t at) {
        return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
               (static_cast<std::uint32_t>(b[at + 2]) << 8) | b[at + 3];
    };

    const auto images = read_all(prefix + "-images.idx3-ubyte");
    const auto labels = read_all(prefix + "-labels.idx1-ubyte");
    if (images.size() < 16 || be32(images, 0) != 0x803) {
        throw FormatError(prefix + "-images.idx3-ubyte: not an idx3 ubyte file");
    }
    if (labels.size() < 8 || be32(labels, 0) != 0x801) {
        throw FormatError(prefix + "-labels.idx1-ubyte: not an idx1 ubyte file");
    }
    const std::uint32_t n = be32(images, 4);
    const std::uint32_t h = be32(images, 8);
    const std::uint32_t w = be32(images, 12);
    if (be32(labels, 4) != n) throw FormatError(prefix + ": image/label counts differ");
    if (images.size() != 16 + static_cast<std::size_t>(n) * h * w) {
        throw FormatError(prefix + "-images.idx3-ubyte: truncated payload");
    }

    ToyDataset ds;
    ds.num_classes = expected_classes;
    for (std::uint32_t i = 0; i < n; ++i) {
        const int label = labels[8 + i];
        if (label >= expected_classes) {
            throw ConfigError("dataset label " + std::to_string(label) + " exceeds head width " +
                              std::to_string(expected_classes));
        }
        ds.labels.push_back(label);
        Tensor img = Tensor::zeros({3, static_cast<int>(h), static_cast<int>(w)});
        for (std::uint32_t p = 0; p < h * w; ++p) {
            const float v = static_cast<float>(images[16 + static_cast<std::size_t>(i) * h * w + p]) / 255.0f;
            img.data[p] = v;
            img.data[h * w + p] = v;
            img.data[2 * h * w + p] = v;
        }
        ds.images.push_back(std::move(img));
    }
    ds.train_count = (static_cast<int>(n) * 4) / 5;
    return ds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Construction kit, analyzer and desk-scale trainer for SqueezeNet-family CNNs"};
    app.require_subcommand(1);

    // generate
    auto* generate = app.add_subcommand("generate", "expand metaparameters into an architecture");
    Metaparams gen_mp;
    std::string gen_variant = "vanilla";
    std::string gen_out;
    generate->add_option("--base-e", gen_mp.base_e, "expand filters in the first fire module");
    generate->add_option("--incr-e", gen_mp.incr_e, "expand filter increment");
    generate->add_option("--freq", gen_mp.freq, "modules between increments");
    generate->add_option("--pct3x3", gen_mp.pct3x3, "fraction of expand filters that are 3x3");
    generate->add_option("--sr", gen_mp.sr, "squeeze ratio");
    generate->add_option("--variant", gen_variant,
                         "vanilla | simple-bypass | complex-bypass | complex-bypass-all");
    generate->add_option("--classes", gen_mp.head.filters, "conv10 filter count");
    generate->add_option("--out", gen_out, "architecture config output path");

    // describe
    auto* describe = app.add_subcommand("describe", "per-layer table for an architecture");
    std::string desc_arch, desc_shape = "3x224x224";
    describe->add_option("--arch", desc_arch, "architecture config path")->required();
    describe->add_option("--input-shape", desc_shape, "input as CxHxW");

    // train
    auto* train = app.add_subcommand("train", "desk-scale training on the toy dataset");
    std::string train_arch, train_dataset = "synthetic", train_weights_out;
    int train_steps = 200, train_batch = 8;
    double train_lr = 0.04;
    std::optional<std::uint32_t> train_seed;
    train->add_option("--arch", train_arch, "architecture config path")->required();
    train->add_option("--dataset", train_dataset, "synthetic, or an idx file prefix");
    train->add_option("--steps", train_steps, "SGD steps");
    train->add_option("--batch", train_batch, "batch size");
    train->add_option("--lr", train_lr, "initial learning rate (decays linearly to 0)");
    train->add_option("--seed", train_seed, "rng seed (default: SQZKIT_SEED or 42)");
    train->add_option("--weights-out", train_weights_out, "weight file output path");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "size sweep over sr or pct3x3");
    std::string sweep_param, sweep_values, sweep_out;
    bool sweep_train_toy = false;
    std::optional<std::uint32_t> sweep_seed;
    sweep->add_option("--param", sweep_param, "sr | pct3x3")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep->add_option("--out", sweep_out, "CSV output path");
    sweep->add_flag("--train-toy", sweep_train_toy, "attach toy-scale accuracy to each row");
    sweep->add_option("--seed", sweep_seed, "rng seed for --train-toy");

    // compress
    auto* compress = app.add_subcommand("compress", "prune + quantize + size a weight file");
    std::string comp_arch, comp_weights, comp_out;
    double comp_density = 0.33, comp_baseline_mb = 240.0;
    int comp_bits = 8, comp_index_bits = 4;
    bool comp_huffman = false;
    compress->add_option("--arch", comp_arch, "architecture config path")->required();
    compress->add_option("--weights", comp_weights, "weight file path")->required();
    compress->add_option("--density", comp_density, "fraction of weights kept nonzero");
    compress->add_option("--bits", comp_bits, "codebook bits");
    compress->add_option("--index-bits", comp_index_bits, "relative index bits");
    compress->add_flag("--huffman", comp_huffman, "entropy-coded size accounting");
    compress->add_option("--baseline-mb", comp_baseline_mb, "baseline size for the ratio");
    compress->add_option("--out", comp_out, "compressed container output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return run_generate(gen_mp, gen_variant, gen_out);
        if (describe->parsed()) return run_describe(desc_arch, desc_shape);
        if (train->parsed()) {
            return run_train(train_arch, train_dataset, train_steps, train_batch, train_lr,
                             train_seed, train_weights_out);
        }
        if (sweep->parsed()) {
            return run_sweep(sweep_param, sweep_values, sweep_out, sweep_train_toy, sweep_seed);
        }
        if (compress->parsed()) {
            return run_compress(comp_arch, comp_weights, comp_density, comp_bits, comp_index_bits,
                                comp_huffman, comp_baseline_mb, comp_out);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
