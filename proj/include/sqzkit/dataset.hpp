#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "sqzkit/tensor.hpp"

namespace sqzkit {

/// Synthetic 3x32x32 image classification task: the label is the quadrant
/// (or half, for k=2) containing the brightest Gaussian blob. Classes are
/// balanced within one sample; the first `train_count` examples form the
/// training split, the rest are held out. Fully determined by the seed.
struct ToyDataset {
    int num_classes = 4;
    std::vector<Tensor> images;  // each [3,32,32]
    std::vector<int> labels;
    int train_count = 0;

    int size() const { return static_cast<int>(images.size()); }
    int heldout_count() const { return size() - train_count; }
};

inline ToyDataset gen_toy_dataset(std::uint32_t seed, int n, int k) {
    if (k != 2 && k != 4) throw ParamError("toy dataset supports k in {2,4}, got " + std::to_string(k));
    if (n < k) throw ParamError("need at least one sample per class, got n=" + std::to_string(n));

    std::mt19937 rng(seed);
    constexpr int kSide = 32;
    constexpr float kNoise = 0.25f;
    constexpr float kAmplitude = 3.0f;

    // balanced labels in both splits: round-robin within each region, then a
    // shuffle that stays inside the region
    const int train_count = std::max(1, (n * 4) / 5);  // 80/20 split
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = (i < train_count ? i : i - train_count) % k;
    }
    auto shuffle_region = [&](int lo, int hi) {
        for (int i = hi - 1; i > lo; --i) {
            const int j = lo + static_cast<int>(rng() % static_cast<std::uint32_t>(i - lo + 1));
            std::swap(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]);
        }
    };
    shuffle_region(0, train_count);
    shuffle_region(train_count, n);

    ToyDataset ds;
    ds.num_classes = k;
    ds.labels = labels;
    ds.train_count = train_count;
    ds.images.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        // quadrant layout: 0=top-left, 1=top-right, 2=bottom-left, 3=bottom-right;
        // k=2 uses left/right halves
        const int qx = (k == 2) ? label : (label % 2);
        const int qy = (k == 2) ? 0 : (label / 2);
        const float cx = 8.0f + 16.0f * static_cast<float>(qx) + uniform_sym(rng, 4.0f);
        const float cy = (k == 2) ? 16.0f + uniform_sym(rng, 8.0f)
                                  : 8.0f + 16.0f * static_cast<float>(qy) + uniform_sym(rng, 4.0f);
        const float sigma = 3.0f + uniform_unit(rng);

        Tensor img = Tensor::zeros({3, kSide, kSide});
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < kSide; ++y) {
                for (int x = 0; x < kSide; ++x) {
                    const float dx = static_cast<float>(x) - cx;
                    const float dy = static_cast<float>(y) - cy;
                    const float blob = kAmplitude * std::exp(-(dx * dx + dy * dy) / (2.0f * sigma * sigma));
                    img.data[img.at3(c, y, x, kSide, kSide)] = blob + uniform_sym(rng, kNoise);
                }
            }
        }
        ds.images.push_back(std::move(img));
    }
    return ds;
}

}  // namespace sqzkit
