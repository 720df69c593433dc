#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "sqzkit/tensor.hpp"

// Forward and backward kernels for the layer set SqueezeNet needs.
// Values are stored as float32; accumulation runs in float64 so that
// finite-difference gradient checks hold at tight tolerances.

namespace sqzkit::ops {

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

/// 2D convolution. input [C,H,W], weights [F,C,kh,kw], bias [F].
/// out[f,y,x] = bias[f] + sum_{c,i,j} in[c, y*s+i-p, x*s+j-p] * w[f,c,i,j],
/// out-of-bounds reads contribute zero.
inline Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     int stride, int pad) {
    if (input.rank() != 3) throw ShapeError("conv2d input must be [C,H,W], got " + shape_str(input.shape));
    if (weights.rank() != 4) throw ShapeError("conv2d weights must be [F,C,kh,kw], got " + shape_str(weights.shape));
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int F = weights.dim(0), WC = weights.dim(1), kh = weights.dim(2), kw = weights.dim(3);
    if (WC != C) {
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(C) +
                         " channels, weights expect " + std::to_string(WC));
    }
    if (bias.rank() != 1 || bias.dim(0) != F) {
        throw ShapeError("conv2d bias must be [" + std::to_string(F) + "], got " + shape_str(bias.shape));
    }
    if (stride < 1) throw ParamError("conv2d stride must be >= 1");
    if (pad < 0) throw ParamError("conv2d pad must be >= 0");
    if (H + 2 * pad < kh || W + 2 * pad < kw) {
        throw ShapeError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " exceeds padded input " + std::to_string(H + 2 * pad) + "x" +
                         std::to_string(W + 2 * pad));
    }

    const int Ho = conv_out_extent(H, kh, stride, pad);
    const int Wo = conv_out_extent(W, kw, stride, pad);
    Tensor out = Tensor::zeros({F, Ho, Wo});

    const float* in = input.data.data();
    const float* w = weights.data.data();
    for (int f = 0; f < F; ++f) {
        const double b = bias.data[static_cast<std::size_t>(f)];
        for (int y = 0; y < Ho; ++y) {
            for (int x = 0; x < Wo; ++x) {
                double acc = b;
                for (int c = 0; c < C; ++c) {
                    const std::size_t in_c = static_cast<std::size_t>(c) * H * W;
                    const std::size_t w_c = (static_cast<std::size_t>(f) * C + c) * kh * kw;
                    for (int i = 0; i < kh; ++i) {
                        const int yy = y * stride + i - pad;
                        if (yy < 0 || yy >= H) continue;
                        for (int j = 0; j < kw; ++j) {
                            const int xx = x * stride + j - pad;
                            if (xx < 0 || xx >= W) continue;
                            acc += static_cast<double>(in[in_c + static_cast<std::size_t>(yy) * W + xx]) *
                                   static_cast<double>(w[w_c + static_cast<std::size_t>(i) * kw + j]);
                        }
                    }
                }
                out.data[(static_cast<std::size_t>(f) * Ho + y) * Wo + x] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

struct Conv2dGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

inline Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& input,
                                   const Tensor& weights, int stride, int pad) {
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int F = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const int Ho = conv_out_extent(H, kh, stride, pad);
    const int Wo = conv_out_extent(W, kw, stride, pad);
    if (grad_out.shape != std::vector<int>{F, Ho, Wo}) {
        throw ShapeError("conv2d_backward grad shape " + shape_str(grad_out.shape) +
                         " does not match forward output [" + std::to_string(F) + "," +
                         std::to_string(Ho) + "," + std::to_string(Wo) + "]");
    }

    std::vector<double> gin(input.size(), 0.0);
    std::vector<double> gw(weights.size(), 0.0);
    std::vector<double> gb(static_cast<std::size_t>(F), 0.0);

    const float* in = input.data.data();
    const float* w = weights.data.data();
    for (int f = 0; f < F; ++f) {
        for (int y = 0; y < Ho; ++y) {
            for (int x = 0; x < Wo; ++x) {
                const double g = grad_out.data[(static_cast<std::size_t>(f) * Ho + y) * Wo + x];
                if (g == 0.0) continue;
                gb[static_cast<std::size_t>(f)] += g;
                for (int c = 0; c < C; ++c) {
                    const std::size_t in_c = static_cast<std::size_t>(c) * H * W;
                    const std::size_t w_c = (static_cast<std::size_t>(f) * C + c) * kh * kw;
                    for (int i = 0; i < kh; ++i) {
                        const int yy = y * stride + i - pad;
                        if (yy < 0 || yy >= H) continue;
                        for (int j = 0; j < kw; ++j) {
                            const int xx = x * stride + j - pad;
                            if (xx < 0 || xx >= W) continue;
                            const std::size_t ii = in_c + static_cast<std::size_t>(yy) * W + xx;
                            const std::size_t wi = w_c + static_cast<std::size_t>(i) * kw + j;
                            gin[ii] += static_cast<double>(w[wi]) * g;
                            gw[wi] += static_cast<double>(in[ii]) * g;
                        }
                    }
                }
            }
        }
    }

    Conv2dGrads grads{Tensor::zeros(input.shape), Tensor::zeros(weights.shape),
                      Tensor::zeros({F})};
    for (std::size_t i = 0; i < gin.size(); ++i) grads.input.data[i] = static_cast<float>(gin[i]);
    for (std::size_t i = 0; i < gw.size(); ++i) grads.weights.data[i] = static_cast<float>(gw[i]);
    for (std::size_t i = 0; i < gb.size(); ++i) grads.bias.data[i] = static_cast<float>(gb[i]);
    return grads;
}

/// Max pooling over k x k windows. Ties go to the first maximum in
/// row-major scan order; `argmax` (when non-null) receives the flat input
/// index backing each output cell, which is what backward routes to.
inline Tensor maxpool2d(const Tensor& input, int k, int stride,
                        std::vector<std::int32_t>* argmax = nullptr) {
    if (input.rank() != 3) throw ShapeError("maxpool2d input must be [C,H,W], got " + shape_str(input.shape));
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    if (k < 1 || stride < 1) throw ParamError("maxpool2d kernel and stride must be >= 1");
    if (k > H || k > W) {
        throw ShapeError("maxpool2d window " + std::to_string(k) + " exceeds input " +
                         std::to_string(H) + "x" + std::to_string(W));
    }
    const int Ho = (H - k) / stride + 1;
    const int Wo = (W - k) / stride + 1;
    Tensor out = Tensor::zeros({C, Ho, Wo});
    if (argmax) argmax->assign(out.size(), 0);

    for (int c = 0; c < C; ++c) {
        const std::size_t in_c = static_cast<std::size_t>(c) * H * W;
        for (int y = 0; y < Ho; ++y) {
            for (int x = 0; x < Wo; ++x) {
                float best = input.data[in_c + static_cast<std::size_t>(y * stride) * W + x * stride];
                std::size_t best_idx = in_c + static_cast<std::size_t>(y * stride) * W + x * stride;
                for (int i = 0; i < k; ++i) {
                    for (int j = 0; j < k; ++j) {
                        const std::size_t idx =
                            in_c + static_cast<std::size_t>(y * stride + i) * W + (x * stride + j);
                        if (input.data[idx] > best) {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(c) * Ho + y) * Wo + x;
                out.data[o] = best;
                if (argmax) (*argmax)[o] = static_cast<std::int32_t>(best_idx);
            }
        }
    }
    return out;
}

inline Tensor maxpool2d_backward(const Tensor& grad_out, const std::vector<int>& input_shape,
                                 const std::vector<std::int32_t>& argmax) {
    if (grad_out.size() != argmax.size()) {
        throw ShapeError("maxpool2d_backward grad size " + std::to_string(grad_out.size()) +
                         " does not match argmax size " + std::to_string(argmax.size()));
    }
    Tensor gin = Tensor::zeros(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) {
        gin.data[static_cast<std::size_t>(argmax[o])] += grad_out.data[o];
    }
    return gin;
}

inline Tensor global_avg_pool(const Tensor& input) {
    if (input.rank() != 3) throw ShapeError("global_avg_pool input must be [C,H,W], got " + shape_str(input.shape));
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    Tensor out = Tensor::zeros({C});
    const double inv = 1.0 / (static_cast<double>(H) * W);
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        const std::size_t base = static_cast<std::size_t>(c) * H * W;
        for (int i = 0; i < H * W; ++i) acc += input.data[base + static_cast<std::size_t>(i)];
        out.data[static_cast<std::size_t>(c)] = static_cast<float>(acc * inv);
    }
    return out;
}

inline Tensor global_avg_pool_backward(const Tensor& grad_out, int h, int w) {
    const int C = grad_out.dim(0);
    Tensor gin = Tensor::zeros({C, h, w});
    const float inv = 1.0f / (static_cast<float>(h) * static_cast<float>(w));
    for (int c = 0; c < C; ++c) {
        const float g = grad_out.data[static_cast<std::size_t>(c)] * inv;
        const std::size_t base = static_cast<std::size_t>(c) * h * w;
        for (int i = 0; i < h * w; ++i) gin.data[base + static_cast<std::size_t>(i)] = g;
    }
    return gin;
}

inline Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

// Gradient is 0 at exactly 0.
inline Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
    if (!grad_out.same_shape(input)) {
        throw ShapeError("relu_backward shape mismatch " + shape_str(grad_out.shape) + " vs " +
                         shape_str(input.shape));
    }
    Tensor gin = grad_out;
    for (std::size_t i = 0; i < gin.size(); ++i) {
        if (input.data[i] <= 0.0f) gin.data[i] = 0.0f;
    }
    return gin;
}

enum class DropoutMode { kTrain, kEval };

/// Inverted dropout: eval mode is the identity; in train mode each element
/// is zeroed with probability `ratio` and survivors are scaled by 1/(1-ratio).
inline Tensor dropout(const Tensor& input, float ratio, DropoutMode mode, std::mt19937& rng,
                      std::vector<std::uint8_t>* mask_out = nullptr) {
    if (!(ratio >= 0.0f && ratio < 1.0f)) {
        throw ParamError("dropout ratio must be in [0,1), got " + std::to_string(ratio));
    }
    if (mode == DropoutMode::kEval || ratio == 0.0f) {
        if (mask_out) mask_out->assign(input.size(), 1);
        return input;
    }
    Tensor out = input;
    if (mask_out) mask_out->assign(input.size(), 0);
    const float scale = 1.0f / (1.0f - ratio);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (uniform_unit(rng) < ratio) {
            out.data[i] = 0.0f;
        } else {
            out.data[i] *= scale;
            if (mask_out) (*mask_out)[i] = 1;
        }
    }
    return out;
}

inline Tensor dropout_backward(const Tensor& grad_out, const std::vector<std::uint8_t>& mask,
                               float ratio) {
    Tensor gin = grad_out;
    const float scale = 1.0f / (1.0f - ratio);
    for (std::size_t i = 0; i < gin.size(); ++i) {
        gin.data[i] = mask[i] ? gin.data[i] * scale : 0.0f;
    }
    return gin;
}

/// Channel concatenation: channels of `a` precede channels of `b`.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw ShapeError("concat_channels spatial mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    Tensor out = Tensor::zeros({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

inline std::pair<Tensor, Tensor> concat_channels_backward(const Tensor& grad_out, int ca, int cb) {
    const int H = grad_out.dim(1), W = grad_out.dim(2);
    if (grad_out.dim(0) != ca + cb) {
        throw ShapeError("concat_channels_backward channel split " + std::to_string(ca) + "+" +
                         std::to_string(cb) + " does not match " + std::to_string(grad_out.dim(0)));
    }
    Tensor ga = Tensor::zeros({ca, H, W});
    Tensor gb = Tensor::zeros({cb, H, W});
    std::copy(grad_out.data.begin(), grad_out.data.begin() + static_cast<std::ptrdiff_t>(ga.size()),
              ga.data.begin());
    std::copy(grad_out.data.begin() + static_cast<std::ptrdiff_t>(ga.size()), grad_out.data.end(),
              gb.data.begin());
    return {std::move(ga), std::move(gb)};
}

inline Tensor add_elementwise(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add_elementwise shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

struct SoftmaxLoss {
    double loss;
    Tensor grad_logits;
};

/// Cross-entropy of softmax(logits) against a class index, stabilized by
/// max subtraction. grad = softmax(logits) - onehot(label).
inline SoftmaxLoss softmax_cross_entropy(const Tensor& logits, int label) {
    if (logits.rank() != 1) throw ShapeError("softmax_cross_entropy expects [K] logits, got " + shape_str(logits.shape));
    const int K = logits.dim(0);
    if (label < 0 || label >= K) {
        throw ParamError("label " + std::to_string(label) + " out of range [0," + std::to_string(K) + ")");
    }
    double mx = logits.data[0];
    for (float v : logits.data) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (float v : logits.data) sum += std::exp(static_cast<double>(v) - mx);
    const double log_sum = std::log(sum) + mx;

    SoftmaxLoss result{log_sum - static_cast<double>(logits.data[static_cast<std::size_t>(label)]),
                       Tensor::zeros({K})};
    for (int i = 0; i < K; ++i) {
        const double p = std::exp(static_cast<double>(logits.data[static_cast<std::size_t>(i)]) - log_sum);
        result.grad_logits.data[static_cast<std::size_t>(i)] =
            static_cast<float>(p - (i == label ? 1.0 : 0.0));
    }
    return result;
}

}  // namespace sqzkit::ops
