#pragma once

// Independent reference implementations ("oracles") the tests pin the
// library against. These deliberately take the dumbest possible route —
// plain nested loops, full sorts, high-precision math — and never share
// code with the implementations they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "sqzkit/arch.hpp"
#include "sqzkit/tensor.hpp"

namespace oracle {

// Direct 6-nested-loop convolution.
inline sqzkit::Tensor conv2d_reference(const sqzkit::Tensor& in, const sqzkit::Tensor& w,
                                       const sqzkit::Tensor& b, int stride, int pad) {
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const int F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    sqzkit::Tensor out = sqzkit::Tensor::zeros({F, Ho, Wo});
    for (int f = 0; f < F; ++f) {
        for (int y = 0; y < Ho; ++y) {
            for (int x = 0; x < Wo; ++x) {
                double acc = b.data[static_cast<std::size_t>(f)];
                for (int c = 0; c < C; ++c) {
                    for (int i = 0; i < kh; ++i) {
                        for (int j = 0; j < kw; ++j) {
                            const int yy = y * stride + i - pad;
                            const int xx = x * stride + j - pad;
                            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                            const double iv = in.data[static_cast<std::size_t>((c * H + yy) * W + xx)];
                            const double wv = w.data[static_cast<std::size_t>(((f * C + c) * kh + i) * kw + j)];
                            acc += iv * wv;
                        }
                    }
                }
                out.data[static_cast<std::size_t>((f * Ho + y) * Wo + x)] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

// Window-scan max pooling.
inline sqzkit::Tensor maxpool_reference(const sqzkit::Tensor& in, int k, int stride) {
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const int Ho = (H - k) / stride + 1;
    const int Wo = (W - k) / stride + 1;
    sqzkit::Tensor out = sqzkit::Tensor::zeros({C, Ho, Wo});
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < Ho; ++y) {
            for (int x = 0; x < Wo; ++x) {
                float best = -std::numeric_limits<float>::infinity();
                for (int i = 0; i < k; ++i) {
                    for (int j = 0; j < k; ++j) {
                        best = std::max(best, in.data[static_cast<std::size_t>(
                                                  (c * H + y * stride + i) * W + x * stride + j)]);
                    }
                }
                out.data[static_cast<std::size_t>((c * Ho + y) * Wo + x)] = best;
            }
        }
    }
    return out;
}

// Counts parameters by literally enumerating every scalar of every filter.
inline std::int64_t enumerate_params(const sqzkit::ArchGraph& g) {
    std::int64_t total = 0;
    for (const auto& n : g.nodes) {
        if (n.kind != sqzkit::NodeKind::kConv) continue;
        for (int f = 0; f < n.filters; ++f) {
            for (int c = 0; c < n.in_channels; ++c) {
                for (int i = 0; i < n.kh; ++i) {
                    for (int j = 0; j < n.kw; ++j) {
                        (void)f; (void)c; (void)i; (void)j;
                        ++total;
                    }
                }
            }
            ++total;  // the filter's bias
        }
    }
    return total;
}

// Kept set via a full stable sort on (|w| desc, index asc).
inline std::vector<std::uint8_t> prune_reference(const std::vector<float>& w, double density) {
    std::vector<std::size_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(w[a]) > std::abs(w[b]);
    });
    const auto keep = static_cast<std::size_t>(std::ceil(density * static_cast<double>(w.size())));
    std::vector<std::uint8_t> mask(w.size(), 0);
    for (std::size_t i = 0; i < keep && i < w.size(); ++i) mask[idx[i]] = 1;
    return mask;
}

// Textbook k-means with random centroid init; used only to bound the
// library's linear-init variant.
inline double kmeans_random_init_mse(const std::vector<float>& values, int k, std::uint32_t seed,
                                     int iterations = 100) {
    std::mt19937 rng(seed);
    std::vector<double> centroids(static_cast<std::size_t>(k));
    for (auto& c : centroids) {
        c = values[rng() % values.size()];
    }
    std::vector<int> assign(values.size(), 0);
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            double best = std::abs(values[i] - centroids[0]);
            int best_j = 0;
            for (int j = 1; j < k; ++j) {
                const double d = std::abs(values[i] - centroids[static_cast<std::size_t>(j)]);
                if (d < best) {
                    best = d;
                    best_j = j;
                }
            }
            assign[i] = best_j;
        }
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        std::vector<int> cnt(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < values.size(); ++i) {
            sum[static_cast<std::size_t>(assign[i])] += values[i];
            ++cnt[static_cast<std::size_t>(assign[i])];
        }
        for (int j = 0; j < k; ++j) {
            if (cnt[static_cast<std::size_t>(j)]) {
                centroids[static_cast<std::size_t>(j)] =
                    sum[static_cast<std::size_t>(j)] / cnt[static_cast<std::size_t>(j)];
            }
        }
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - centroids[static_cast<std::size_t>(assign[i])];
        sse += d * d;
    }
    return sse / static_cast<double>(values.size());
}

// Softmax cross entropy in long double.
inline long double softmax_loss_reference(const std::vector<float>& logits, int label) {
    long double mx = logits[0];
    for (float v : logits) mx = std::max(mx, static_cast<long double>(v));
    long double sum = 0.0L;
    for (float v : logits) sum += std::exp(static_cast<long double>(v) - mx);
    return std::log(sum) + mx - static_cast<long double>(logits[static_cast<std::size_t>(label)]);
}

}  // namespace oracle
