// Builds the default architecture in all three variants and prints how the
// parameter budget is spent, layer by layer.

#include <cstdio>

#include "sqzkit/analysis.hpp"
#include "sqzkit/arch.hpp"

int main() {
    using namespace sqzkit;

    const Metaparams mp;  // paper defaults
    for (Variant v : {Variant::kVanilla, Variant::kSimpleBypass, Variant::kComplexBypass}) {
        ArchGraph g = build_squeezenet(mp, v);
        if (!validate(g).empty()) {
            std::fprintf(stderr, "default graph failed validation\n");
            return 1;
        }
        const SizeReport report = count_params(g);
        std::printf("== %s ==\n", variant_name(v).c_str());
        for (const auto& row : report.rows) {
            std::printf("  %-24s %9lld weights %6lld biases\n", row.name.c_str(),
                        static_cast<long long>(row.weight_count),
                        static_cast<long long>(row.bias_count));
        }
        std::printf("  total %lld params, %.2f MB at 32-bit\n\n",
                    static_cast<long long>(report.total_params), report.total_bytes / 1e6);
    }
    return 0;
}
