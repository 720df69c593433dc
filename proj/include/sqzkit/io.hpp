#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sqzkit/analysis.hpp"
#include "sqzkit/arch.hpp"
#include "sqzkit/compress.hpp"
#include "sqzkit/train.hpp"

// Persistence: key=value architecture configs, "SQZW" weight files, the
// "SQZC" compressed container and CSV emission. All binary formats are
// little-endian with bit streams packed LSB-first and padded to byte
// boundaries per layer.

namespace sqzkit {

struct ArchConfig {
    Metaparams mp;
    Variant variant = Variant::kVanilla;
    BypassConvPlacement placement = BypassConvPlacement::kRemaining;
};

namespace detail {

inline std::string render_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// --- little-endian byte buffer helpers ---

struct ByteWriter {
    std::vector<std::uint8_t> bytes;

    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
};

struct ByteReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    std::string origin;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw FormatError("truncated file " + origin);
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return s;
    }
};

// LSB-first bit packing.
struct BitWriter {
    std::vector<std::uint8_t> bytes;
    int bit = 0;

    void write(std::uint32_t value, int width) {
        for (int i = 0; i < width; ++i) {
            if (bit == 0) bytes.push_back(0);
            if ((value >> i) & 1u) bytes.back() |= static_cast<std::uint8_t>(1u << bit);
            bit = (bit + 1) % 8;
        }
    }
};

struct BitReader {
    const std::uint8_t* data;
    std::size_t nbytes;
    std::size_t bitpos = 0;

    std::uint32_t read(int width) {
        std::uint32_t v = 0;
        for (int i = 0; i < width; ++i) {
            const std::size_t byte = bitpos / 8;
            if (byte >= nbytes) throw FormatError("bit stream underrun");
            if ((data[byte] >> (bitpos % 8)) & 1u) v |= 1u << i;
            ++bitpos;
        }
        return v;
    }
};

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace detail

// --- architecture config text format ---

inline std::string render_arch(const ArchConfig& cfg) {
    std::ostringstream os;
    os << "[meta]\n";
    os << "base_e=" << cfg.mp.base_e << "\n";
    os << "incr_e=" << cfg.mp.incr_e << "\n";
    os << "freq=" << cfg.mp.freq << "\n";
    os << "pct3x3=" << detail::render_double(cfg.mp.pct3x3) << "\n";
    os << "sr=" << detail::render_double(cfg.mp.sr) << "\n";
    os << "n_fire_modules=" << cfg.mp.n_fire_modules << "\n";
    os << "\n[stem]\n";
    os << "filters=" << cfg.mp.stem.filters << "\n";
    os << "kernel=" << cfg.mp.stem.kernel << "\n";
    os << "stride=" << cfg.mp.stem.stride << "\n";
    os << "pad=" << cfg.mp.stem.pad << "\n";
    os << "\n[head]\n";
    os << "filters=" << cfg.mp.head.filters << "\n";
    os << "\n[variant]\n";
    os << "variant=" << variant_name(cfg.variant) << "\n";
    os << "complex_bypass_convs="
       << (cfg.placement == BypassConvPlacement::kAll ? "all" : "remaining") << "\n";
    return os.str();
}

inline ArchConfig parse_arch(const std::string& text) {
    ArchConfig cfg;
    std::string section;
    std::vector<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;

    auto fail = [&](const std::string& what) {
        throw ParseError("line " + std::to_string(line_no) + ": " + what);
    };
    auto parse_int = [&](const std::string& v) {
        int out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) fail("expected integer, got '" + v + "'");
        return out;
    };
    auto parse_real = [&](const std::string& v) {
        double out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) fail("expected number, got '" + v + "'");
        return out;
    };

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        if (line.front() == '[') {
            if (line.back() != ']') fail("malformed section header '" + line + "'");
            section = line.substr(1, line.size() - 2);
            if (section != "meta" && section != "stem" && section != "head" && section != "variant") {
                fail("unknown section [" + section + "]");
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key=value, got '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (section.empty()) fail("key '" + key + "' before any section");

        const std::string qualified = section + "." + key;
        for (const auto& s : seen) {
            if (s == qualified) fail("duplicated key '" + key + "' in [" + section + "]");
        }
        seen.push_back(qualified);

        if (qualified == "meta.base_e") cfg.mp.base_e = parse_int(value);
        else if (qualified == "meta.incr_e") cfg.mp.incr_e = parse_int(value);
        else if (qualified == "meta.freq") cfg.mp.freq = parse_int(value);
        else if (qualified == "meta.pct3x3") cfg.mp.pct3x3 = parse_real(value);
        else if (qualified == "meta.sr") cfg.mp.sr = parse_real(value);
        else if (qualified == "meta.n_fire_modules") cfg.mp.n_fire_modules = parse_int(value);
        else if (qualified == "stem.filters") cfg.mp.stem.filters = parse_int(value);
        else if (qualified == "stem.kernel") cfg.mp.stem.kernel = parse_int(value);
        else if (qualified == "stem.stride") cfg.mp.stem.stride = parse_int(value);
        else if (qualified == "stem.pad") cfg.mp.stem.pad = parse_int(value);
        else if (qualified == "head.filters") cfg.mp.head.filters = parse_int(value);
        else if (qualified == "variant.variant") {
            if (value == "vanilla") cfg.variant = Variant::kVanilla;
            else if (value == "simple_bypass") cfg.variant = Variant::kSimpleBypass;
            else if (value == "complex_bypass") cfg.variant = Variant::kComplexBypass;
            else fail("unknown variant '" + value + "'");
        } else if (qualified == "variant.complex_bypass_convs") {
            if (value == "remaining") cfg.placement = BypassConvPlacement::kRemaining;
            else if (value == "all") cfg.placement = BypassConvPlacement::kAll;
            else fail("unknown complex_bypass_convs '" + value + "'");
        } else {
            fail("unknown key '" + key + "' in [" + section + "]");
        }
    }

    cfg.mp.check();  // range violations carry the metaparameter invariant text
    return cfg;
}

inline void save_arch(const std::string& path, const ArchConfig& cfg) {
    cfg.mp.check();
    detail::write_text(path, render_arch(cfg));
}

inline ArchConfig load_arch(const std::string& path) {
    const auto bytes = detail::read_file(path);
    return parse_arch(std::string(bytes.begin(), bytes.end()));
}

// --- weight file ("SQZW") ---

struct WeightEntry {
    std::string name;
    Tensor tensor;
};

inline void save_weight_entries(const std::string& path, const std::vector<WeightEntry>& entries) {
    detail::ByteWriter w;
    w.bytes = {'S', 'Q', 'Z', 'W'};
    w.u8(1);  // version
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        w.str(e.name);
        w.u32(static_cast<std::uint32_t>(e.tensor.shape.size()));
        for (int extent : e.tensor.shape) w.u32(static_cast<std::uint32_t>(extent));
        for (float v : e.tensor.data) w.f32(v);
    }
    detail::write_file(path, w.bytes);
}

inline std::vector<WeightEntry> load_weight_entries(const std::string& path) {
    const auto bytes = detail::read_file(path);
    detail::ByteReader r{bytes, 0, path};
    r.need(4);
    if (!(bytes[0] == 'S' && bytes[1] == 'Q' && bytes[2] == 'Z' && bytes[3] == 'W')) {
        throw FormatError(path + ": bad magic, expected SQZW");
    }
    r.pos = 4;
    const auto version = r.u8();
    if (version != 1) throw FormatError(path + ": unsupported version " + std::to_string(version));
    const auto count = r.u32();
    std::vector<WeightEntry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        WeightEntry e;
        e.name = r.str();
        const auto rank = r.u32();
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
        const auto n = shape_product(shape);
        std::vector<float> data(static_cast<std::size_t>(n));
        for (auto& v : data) v = r.f32();
        e.tensor = Tensor(std::move(shape), std::move(data));
        entries.push_back(std::move(e));
    }
    if (r.pos != bytes.size()) throw FormatError(path + ": trailing bytes after last layer");
    return entries;
}

inline void save_weights(const std::string& path, const ModelParams& params) {
    std::vector<WeightEntry> entries;
    entries.reserve(params.layers.size() * 2);
    for (const auto& layer : params.layers) {
        entries.push_back({layer.name + ".weight", layer.weights});
        entries.push_back({layer.name + ".bias", layer.bias});
    }
    save_weight_entries(path, entries);
}

/// Loads weights and checks every entry against the graph's parameter
/// shapes; mismatches report the layer name and both shapes.
inline ModelParams load_weights(const std::string& path, const ArchGraph& g) {
    const auto entries = load_weight_entries(path);
    std::size_t cursor = 0;
    auto take = [&](const std::string& name, const std::vector<int>& expect) -> Tensor {
        if (cursor >= entries.size()) throw FormatError(path + ": missing entry " + name);
        const auto& e = entries[cursor];
        if (e.name != name) throw FormatError(path + ": expected entry " + name + ", found " + e.name);
        if (e.tensor.shape != expect) {
            throw FormatError(path + ": " + name + " has shape " + shape_str(e.tensor.shape) +
                              ", graph expects " + shape_str(expect));
        }
        ++cursor;
        return entries[cursor - 1].tensor;
    };

    ModelParams params;
    for (int id : g.topo_order()) {
        const Node& n = g.node(id);
        if (!n.has_weights()) continue;
        ModelParams::Entry e;
        e.name = n.name;
        e.weights = take(n.name + ".weight", {n.filters, n.in_channels, n.kh, n.kw});
        e.bias = take(n.name + ".bias", {n.filters});
        params.layers.push_back(std::move(e));
    }
    if (cursor != entries.size()) {
        throw FormatError(path + ": unexpected extra entry " + entries[cursor].name);
    }
    return params;
}

// --- compressed container ("SQZC") ---
//
// magic "SQZC", version u8, layer count u32, then per layer:
//   name length u32, name bytes,
//   16-byte header: codebook_bits u8, index_bits u8, reserved u16,
//                   nonzero count u32, entry count u32, dense count u32,
//   codebook: 2^codebook_bits f32 values (index 0 is the reserved zero),
//   packed gap stream   (entry count * index_bits bits, byte padded),
//   packed assignment stream (entry count * codebook_bits bits, byte padded).

inline void save_compressed(const std::string& path, const std::vector<CompressedLayer>& layers) {
    detail::ByteWriter w;
    w.bytes = {'S', 'Q', 'Z', 'C'};
    w.u8(1);
    w.u32(static_cast<std::uint32_t>(layers.size()));
    for (const auto& layer : layers) {
        w.str(layer.name);
        w.u8(static_cast<std::uint8_t>(layer.codebook_bits));
        w.u8(static_cast<std::uint8_t>(layer.index_bits));
        w.u16(0);
        w.u32(static_cast<std::uint32_t>(layer.nonzero_count));
        w.u32(static_cast<std::uint32_t>(layer.entry_count()));
        w.u32(static_cast<std::uint32_t>(layer.dense_count));
        for (float v : layer.codebook) w.f32(v);

        detail::BitWriter gaps;
        for (auto g : layer.gaps) gaps.write(g, layer.index_bits);
        w.bytes.insert(w.bytes.end(), gaps.bytes.begin(), gaps.bytes.end());

        detail::BitWriter assignments;
        for (auto a : layer.assignments) assignments.write(a, layer.codebook_bits);
        w.bytes.insert(w.bytes.end(), assignments.bytes.begin(), assignments.bytes.end());
    }
    detail::write_file(path, w.bytes);
}

inline std::vector<CompressedLayer> load_compressed(const std::string& path) {
    const auto bytes = detail::read_file(path);
    detail::ByteReader r{bytes, 0, path};
    r.need(4);
    if (!(bytes[0] == 'S' && bytes[1] == 'Q' && bytes[2] == 'Z' && bytes[3] == 'C')) {
        throw FormatError(path + ": bad magic, expected SQZC");
    }
    r.pos = 4;
    const auto version = r.u8();
    if (version != 1) throw FormatError(path + ": unsupported version " + std::to_string(version));
    const auto count = r.u32();
    std::vector<CompressedLayer> layers;
    layers.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CompressedLayer layer;
        layer.name = r.str();
        layer.codebook_bits = r.u8();
        layer.index_bits = r.u8();
        r.u16();  // reserved
        layer.nonzero_count = r.u32();
        const auto entries = r.u32();
        layer.dense_count = r.u32();
        if (layer.codebook_bits < 1 || layer.codebook_bits > 16 || layer.index_bits < 1 ||
            layer.index_bits > 16) {
            throw FormatError(path + ": " + layer.name + " has invalid bit widths");
        }
        layer.codebook.resize(static_cast<std::size_t>(1) << layer.codebook_bits);
        for (auto& v : layer.codebook) v = r.f32();

        const std::size_t gap_bytes = (static_cast<std::size_t>(entries) * layer.index_bits + 7) / 8;
        r.need(gap_bytes);
        detail::BitReader gap_bits{bytes.data() + r.pos, gap_bytes};
        for (std::uint32_t e = 0; e < entries; ++e) layer.gaps.push_back(gap_bits.read(layer.index_bits));
        r.pos += gap_bytes;

        const std::size_t assign_bytes = (static_cast<std::size_t>(entries) * layer.codebook_bits + 7) / 8;
        r.need(assign_bytes);
        detail::BitReader assign_bits{bytes.data() + r.pos, assign_bytes};
        for (std::uint32_t e = 0; e < entries; ++e) {
            layer.assignments.push_back(assign_bits.read(layer.codebook_bits));
        }
        r.pos += assign_bytes;

        layer.filler_count = static_cast<std::int64_t>(entries) - layer.nonzero_count;
        layers.push_back(std::move(layer));
    }
    if (r.pos != bytes.size()) throw FormatError(path + ": trailing bytes after last layer");
    return layers;
}

// --- CSV emission ---

namespace detail {

inline std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline void csv_row(std::ostringstream& os, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ',';
        os << csv_quote(fields[i]);
    }
    os << "\r\n";
}

}  // namespace detail

inline void emit_csv(const SweepResult& sweep, const std::string& path) {
    std::ostringstream os;
    detail::csv_row(os, {sweep.param_name, "total_params", "model_size_bytes", "toy_accuracy"});
    for (const auto& row : sweep.rows) {
        detail::csv_row(os, {detail::render_double(row.value), std::to_string(row.total_params),
                             detail::render_double(row.size_bytes),
                             row.toy_accuracy ? detail::render_double(*row.toy_accuracy) : ""});
    }
    detail::write_text(path, os.str());
}

inline void emit_csv(const SizeReport& report, const std::string& path) {
    std::ostringstream os;
    detail::csv_row(os, {"layer", "weight_count", "bias_count", "bytes"});
    for (const auto& row : report.rows) {
        detail::csv_row(os, {row.name, std::to_string(row.weight_count),
                             std::to_string(row.bias_count), detail::render_double(row.bytes)});
    }
    detail::csv_row(os, {"total", std::to_string(report.total_weights),
                         std::to_string(report.total_biases), detail::render_double(report.total_bytes)});
    detail::write_text(path, os.str());
}

inline void emit_csv(const CompressionReport& report, const std::string& path) {
    std::ostringstream os;
    detail::csv_row(os, {"layer", "dense_params", "nonzeros", "fillers", "codebook_bits",
                         "index_bits", "bytes"});
    for (std::size_t i = 0; i < report.layers.size(); ++i) {
        const auto& layer = report.layers[i];
        detail::csv_row(os, {layer.name, std::to_string(layer.dense_count),
                             std::to_string(layer.nonzero_count), std::to_string(layer.filler_count),
                             std::to_string(layer.codebook_bits), std::to_string(layer.index_bits),
                             std::to_string(report.layer_bytes[i])});
    }
    detail::csv_row(os, {"total", std::to_string(report.dense_bytes / 4), "", "", "", "",
                         std::to_string(report.compressed_bytes)});
    detail::write_text(path, os.str());
}

}  // namespace sqzkit
