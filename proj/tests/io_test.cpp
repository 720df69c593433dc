#include <gtest/gtest.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>

#include "sqzkit/dataset.hpp"
#include "sqzkit/io.hpp"

using namespace sqzkit;

namespace {

std::string tmp_path(const std::string& name) { return testing::TempDir() + "sqzkit_" + name; }

Metaparams toy_metaparams() {
    Metaparams mp;
    mp.base_e = 16;
    mp.incr_e = 16;
    mp.sr = 0.125;
    mp.stem = StemSpec{16, 3, 1, 1};
    mp.head = HeadSpec{4};
    return mp;
}

ModelParams random_params(const ArchGraph& g, std::uint32_t seed) { return init_params(g, seed); }

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::vector<std::string> split_csv_unquoted(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

TEST(ArchText, RoundTripsPaperDefaults) {
    const ArchConfig cfg{Metaparams{}, Variant::kVanilla, BypassConvPlacement::kRemaining};
    const ArchConfig back = parse_arch(render_arch(cfg));
    EXPECT_EQ(back.mp.base_e, cfg.mp.base_e);
    EXPECT_EQ(back.mp.incr_e, cfg.mp.incr_e);
    EXPECT_EQ(back.mp.freq, cfg.mp.freq);
    EXPECT_EQ(back.mp.pct3x3, cfg.mp.pct3x3);
    EXPECT_EQ(back.mp.sr, cfg.mp.sr);
    EXPECT_EQ(back.mp.n_fire_modules, cfg.mp.n_fire_modules);
    EXPECT_EQ(back.mp.stem.filters, cfg.mp.stem.filters);
    EXPECT_EQ(back.mp.stem.pad, cfg.mp.stem.pad);
    EXPECT_EQ(back.mp.head.filters, cfg.mp.head.filters);
    EXPECT_EQ(back.variant, cfg.variant);
    EXPECT_EQ(back.placement, cfg.placement);
}

TEST(ArchText, RoundTripsAwkwardReals) {
    ArchConfig cfg;
    cfg.mp.pct3x3 = 1.0 / 3.0;
    cfg.mp.sr = 0.1;
    cfg.variant = Variant::kComplexBypass;
    cfg.placement = BypassConvPlacement::kAll;
    const ArchConfig back = parse_arch(render_arch(cfg));
    EXPECT_EQ(back.mp.pct3x3, cfg.mp.pct3x3);  // bitwise, via shortest round-trip formatting
    EXPECT_EQ(back.mp.sr, cfg.mp.sr);
    EXPECT_EQ(back.variant, Variant::kComplexBypass);
    EXPECT_EQ(back.placement, BypassConvPlacement::kAll);
}

TEST(ArchText, FileRoundTrip) {
    const std::string path = tmp_path("arch.cfg");
    ArchConfig cfg;
    cfg.variant = Variant::kSimpleBypass;
    save_arch(path, cfg);
    const ArchConfig back = load_arch(path);
    EXPECT_EQ(back.variant, Variant::kSimpleBypass);
    EXPECT_EQ(back.mp.sr, cfg.mp.sr);
    std::remove(path.c_str());
}

TEST(ArchText, OutOfRangeSrIsARangeError) {
    const std::string text = "[meta]\nsr=1.5\n";
    try {
        parse_arch(text);
        FAIL() << "expected MetaparamError";
    } catch (const MetaparamError& e) {
        EXPECT_NE(std::string(e.what()).find("sr must be in (0,1]"), std::string::npos);
    }
}

TEST(ArchText, DuplicateKeyNamesLine) {
    const std::string text = "[meta]\nbase_e=128\nbase_e=64\n";
    try {
        parse_arch(text);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 3"), std::string::npos);
        EXPECT_NE(msg.find("base_e"), std::string::npos);
    }
}

TEST(ArchText, UnknownKeyNamesLine) {
    const std::string text = "[meta]\nbase_e=128\nwidth=3\n";
    try {
        parse_arch(text);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 3"), std::string::npos);
        EXPECT_NE(msg.find("width"), std::string::npos);
    }
}

TEST(ArchText, CommentsAndBlankLinesIgnored) {
    const std::string text = "# header comment\n\n[meta]\nsr=0.25  # inline\n";
    const ArchConfig cfg = parse_arch(text);
    EXPECT_DOUBLE_EQ(cfg.mp.sr, 0.25);
}

TEST(WeightFile, BitwiseRoundTrip) {
    const std::string path = tmp_path("weights.sqzw");
    ArchGraph g = build_squeezenet(toy_metaparams(), Variant::kComplexBypass, {3, 32, 32});
    ASSERT_TRUE(validate(g).empty());
    const ModelParams params = random_params(g, 3);
    save_weights(path, params);
    const ModelParams back = load_weights(path, g);
    ASSERT_EQ(back.layers.size(), params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        EXPECT_EQ(back.layers[i].name, params.layers[i].name);
        EXPECT_EQ(back.layers[i].weights.data, params.layers[i].weights.data);
        EXPECT_EQ(back.layers[i].bias.data, params.layers[i].bias.data);
    }
    std::remove(path.c_str());
}

TEST(WeightFile, EmptyEntryListIsValid) {
    const std::string path = tmp_path("empty.sqzw");
    save_weight_entries(path, {});
    EXPECT_TRUE(load_weight_entries(path).empty());
    std::remove(path.c_str());
}

TEST(WeightFile, CorruptedMagicRejected) {
    const std::string path = tmp_path("bad.sqzw");
    save_weight_entries(path, {});
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
    }
    EXPECT_THROW(load_weight_entries(path), FormatError);
    std::remove(path.c_str());
}

TEST(WeightFile, TruncationRejected) {
    const std::string path = tmp_path("trunc.sqzw");
    ArchGraph g = build_fire(FireSpec{2, 3, 3}, 4);
    ASSERT_TRUE(validate(g).empty());
    save_weights(path, random_params(g, 4));
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
    out.close();
    EXPECT_THROW(load_weight_entries(path), FormatError);
    std::remove(path.c_str());
}

TEST(WeightFile, AnyMismatchedShapeFailsToLoad) {
    const std::string path = tmp_path("mismatch.sqzw");
    const Metaparams mp = toy_metaparams();
    ArchGraph g = build_squeezenet(mp, Variant::kVanilla, {3, 32, 32});
    ASSERT_TRUE(validate(g).empty());
    save_weights(path, random_params(g, 5));

    // every single-field mutation of the metaparameters must be rejected
    std::vector<Metaparams> mutations;
    for (int i = 0; i < 5; ++i) mutations.push_back(mp);
    mutations[0].stem.filters += 1;
    mutations[1].head.filters += 1;
    mutations[2].base_e += 16;
    mutations[3].sr = 0.25;
    mutations[4].stem.kernel = 5;
    for (std::size_t i = 0; i < mutations.size(); ++i) {
        ArchGraph other = build_squeezenet(mutations[i], Variant::kVanilla, {3, 32, 32});
        ASSERT_TRUE(validate(other).empty());
        EXPECT_THROW(load_weights(path, other), FormatError) << "mutation " << i;
    }

    // the error message names the layer and both shapes
    ArchGraph other = build_squeezenet(mutations[0], Variant::kVanilla, {3, 32, 32});
    ASSERT_TRUE(validate(other).empty());
    try {
        load_weights(path, other);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("conv1"), std::string::npos);
        EXPECT_NE(msg.find("[16,3,3,3]"), std::string::npos);
        EXPECT_NE(msg.find("[17,3,3,3]"), std::string::npos);
    }
    std::remove(path.c_str());
}

TEST(Container, RoundTripsThroughDisk) {
    const std::string path = tmp_path("model.sqzc");
    ArchGraph g = build_squeezenet(toy_metaparams(), Variant::kVanilla, {3, 32, 32});
    ASSERT_TRUE(validate(g).empty());
    const ModelParams params = random_params(g, 6);
    CompressionConfig cfg;
    cfg.density = 0.33;
    const CompressionReport report = compress_model(g, params, cfg, 240e6);

    save_compressed(path, report.layers);
    const auto loaded = load_compressed(path);
    ASSERT_EQ(loaded.size(), report.layers.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        EXPECT_EQ(loaded[i].name, report.layers[i].name);
        EXPECT_EQ(loaded[i].codebook, report.layers[i].codebook);
        EXPECT_EQ(loaded[i].gaps, report.layers[i].gaps);
        EXPECT_EQ(loaded[i].assignments, report.layers[i].assignments);
        EXPECT_EQ(loaded[i].nonzero_count, report.layers[i].nonzero_count);
        EXPECT_EQ(loaded[i].filler_count, report.layers[i].filler_count);
        EXPECT_EQ(loaded[i].dense_count, report.layers[i].dense_count);
    }

    // decoding the loaded container equals decoding the in-memory report
    const ModelParams a = decompress_model(g, report.layers);
    const ModelParams b = decompress_model(g, loaded);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        EXPECT_EQ(a.layers[i].weights.data, b.layers[i].weights.data);
        EXPECT_EQ(a.layers[i].bias.data, b.layers[i].bias.data);
    }
    std::remove(path.c_str());
}

TEST(Container, CorruptedMagicRejected) {
    const std::string path = tmp_path("bad.sqzc");
    detail::write_file(path, {'N', 'O', 'P', 'E', 1, 0, 0, 0, 0});
    EXPECT_THROW(load_compressed(path), FormatError);
    std::remove(path.c_str());
}

TEST(Csv, OneRowSweepIsTwoLines) {
    const std::string path = tmp_path("sweep.csv");
    SweepResult sweep;
    sweep.param_name = "sr";
    sweep.rows.push_back(SweepRow{0.125, 1248424, 4993696.0, std::nullopt});
    emit_csv(sweep, path);
    const auto lines = read_lines(path);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0], "sr,total_params,model_size_bytes,toy_accuracy");
    std::remove(path.c_str());
}

TEST(Csv, CommasAndQuotesAreQuoted) {
    const std::string path = tmp_path("quoted.csv");
    SizeReport report;
    report.rows.push_back(SizeRow{"conv \"a\", special", 10, 1, 44.0});
    report.total_weights = 10;
    report.total_biases = 1;
    report.total_params = 11;
    report.total_bytes = 44.0;
    emit_csv(report, path);
    const auto lines = read_lines(path);
    ASSERT_GE(lines.size(), 2u);
    EXPECT_EQ(lines[1].substr(0, 23), "\"conv \"\"a\"\", special\",1");
    std::remove(path.c_str());
}

TEST(Csv, NumbersReparseExactly) {
    const std::string path = tmp_path("exact.csv");
    SweepResult sweep;
    sweep.param_name = "pct3x3";
    sweep.rows.push_back(SweepRow{1.0 / 3.0, 1248424, 13617568.0, 0.1 + 0.2});
    sweep.rows.push_back(SweepRow{0.1, 42, 4993696.25, std::nullopt});
    emit_csv(sweep, path);
    const auto lines = read_lines(path);
    ASSERT_EQ(lines.size(), 3u);
    const auto row = split_csv_unquoted(lines[1]);
    ASSERT_EQ(row.size(), 4u);
    double value = 0, size = 0, acc = 0;
    std::from_chars(row[0].data(), row[0].data() + row[0].size(), value);
    std::from_chars(row[2].data(), row[2].data() + row[2].size(), size);
    std::from_chars(row[3].data(), row[3].data() + row[3].size(), acc);
    EXPECT_EQ(value, 1.0 / 3.0);
    EXPECT_EQ(size, 13617568.0);
    EXPECT_EQ(acc, 0.1 + 0.2);
    EXPECT_EQ(split_csv_unquoted(lines[2])[3], "");  // absent accuracy stays empty
    std::remove(path.c_str());
}

TEST(ToyDataset, DeterministicAndBalanced) {
    const ToyDataset a = gen_toy_dataset(11, 100, 4);
    const ToyDataset b = gen_toy_dataset(11, 100, 4);
    ASSERT_EQ(a.size(), 100);
    EXPECT_EQ(a.labels, b.labels);
    for (int i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.images[static_cast<std::size_t>(i)].data, b.images[static_cast<std::size_t>(i)].data);
    }

    auto check_balance = [&](int lo, int hi) {
        std::vector<int> counts(4, 0);
        for (int i = lo; i < hi; ++i) ++counts[static_cast<std::size_t>(a.labels[static_cast<std::size_t>(i)])];
        const int mn = *std::min_element(counts.begin(), counts.end());
        const int mx = *std::max_element(counts.begin(), counts.end());
        EXPECT_LE(mx - mn, 1);
    };
    check_balance(0, a.size());
    check_balance(0, a.train_count);
    check_balance(a.train_count, a.size());

    const ToyDataset c = gen_toy_dataset(12, 100, 4);
    bool any_differs = false;
    for (int i = 0; i < c.size() && !any_differs; ++i) {
        any_differs = c.images[static_cast<std::size_t>(i)].data != a.images[static_cast<std::size_t>(i)].data;
    }
    EXPECT_TRUE(any_differs);
}

TEST(ToyDataset, NearestMeanBaselineBeatsChance) {
    const ToyDataset ds = gen_toy_dataset(5, 200, 4);
    std::vector<Tensor> means(4, Tensor::zeros({3, 32, 32}));
    std::vector<int> counts(4, 0);
    for (int i = 0; i < ds.train_count; ++i) {
        const int label = ds.labels[static_cast<std::size_t>(i)];
        ++counts[static_cast<std::size_t>(label)];
        for (std::size_t j = 0; j < means[0].size(); ++j) {
            means[static_cast<std::size_t>(label)].data[j] += ds.images[static_cast<std::size_t>(i)].data[j];
        }
    }
    for (int c = 0; c < 4; ++c) {
        for (auto& v : means[static_cast<std::size_t>(c)].data) {
            v /= static_cast<float>(counts[static_cast<std::size_t>(c)]);
        }
    }
    int correct = 0;
    for (int i = ds.train_count; i < ds.size(); ++i) {
        double best = 1e30;
        int best_c = -1;
        for (int c = 0; c < 4; ++c) {
            double dist = 0;
            for (std::size_t j = 0; j < means[0].size(); ++j) {
                const double d = ds.images[static_cast<std::size_t>(i)].data[j] -
                                 means[static_cast<std::size_t>(c)].data[j];
                dist += d * d;
            }
            if (dist < best) {
                best = dist;
                best_c = c;
            }
        }
        correct += best_c == ds.labels[static_cast<std::size_t>(i)];
    }
    const double accuracy = static_cast<double>(correct) / ds.heldout_count();
    EXPECT_GE(accuracy, 0.6);
}

TEST(ToyDataset, TwoClassVariantAndErrors) {
    const ToyDataset ds = gen_toy_dataset(9, 20, 2);
    for (int label : ds.labels) EXPECT_LT(label, 2);
    EXPECT_THROW(gen_toy_dataset(1, 10, 3), ParamError);
    EXPECT_THROW(gen_toy_dataset(1, 1, 2), ParamError);
}
