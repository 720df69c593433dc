#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sqzkit/autograd.hpp"
#include "sqzkit/grad_check.hpp"

using namespace sqzkit;

namespace {

// Values spaced at least 0.01 apart, so an epsilon of 1e-3 can never flip a
// pool argmax or cross a ReLU kink.
Tensor well_separated(std::vector<int> shape, std::mt19937& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::vector<std::size_t> order(t.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[rng() % (i + 1)]);
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
        t.data[order[i]] = -0.7f + 0.01f * static_cast<float>(i);
    }
    return t;
}

GradCheckProblem conv_problem(std::mt19937& rng, int c, int f, int h, int k, int stride, int pad) {
    GradCheckProblem p;
    p.inputs = {random_tensor({c, h, h}, rng, 0.6f), random_tensor({f, c, k, k}, rng, 0.6f),
                random_tensor({f}, rng, 0.6f)};
    p.forward = [stride, pad](const std::vector<Tensor>& in) {
        return ops::conv2d(in[0], in[1], in[2], stride, pad);
    };
    p.backward = [stride, pad](const std::vector<Tensor>& in, const Tensor& g) {
        auto grads = ops::conv2d_backward(g, in[0], in[1], stride, pad);
        return std::vector<Tensor>{grads.input, grads.weights, grads.bias};
    };
    return p;
}

}  // namespace

TEST(LrSchedule, LinearDecayEndpoints) {
    const LrSchedule s(0.04, 100);
    EXPECT_DOUBLE_EQ(s.lr(0), 0.04);
    EXPECT_DOUBLE_EQ(s.lr(50), 0.02);
    EXPECT_DOUBLE_EQ(s.lr(100), 0.0);
    EXPECT_THROW(s.lr(101), ParamError);
    EXPECT_THROW(LrSchedule(0.0, 10), ParamError);
    EXPECT_THROW(LrSchedule(0.1, 0), ParamError);
}

TEST(SgdStep, AppliesScaledUpdate) {
    Tensor p({3}, {1.0f, 2.0f, 3.0f});
    const Tensor g({3}, {1.0f, -1.0f, 0.5f});
    const LrSchedule s(0.1, 10);
    sgd_step(p, g, s, 5);  // lr = 0.05
    EXPECT_FLOAT_EQ(p.data[0], 1.0f - 0.05f);
    EXPECT_FLOAT_EQ(p.data[1], 2.0f + 0.05f);
    EXPECT_FLOAT_EQ(p.data[2], 3.0f - 0.025f);
    EXPECT_THROW(sgd_step(p, Tensor::zeros({4}), s, 0), ShapeError);
}

TEST(GradTape, BackwardVisitsOpsOnceInReverseOrder) {
    std::mt19937 rng(1);
    GradTape tape;
    auto x = tape.push_value(random_tensor({2, 6, 6}, rng));
    auto a = t_relu(tape, x);
    auto b = t_maxpool2d(tape, a, 2, 2);
    auto c = t_global_avg_pool(tape, b);
    tape.backward(c, Tensor::full({2}, 1.0f));
    ASSERT_EQ(tape.backward_trace().size(), 3u);
    EXPECT_EQ(tape.backward_trace()[0], "global_avg_pool");
    EXPECT_EQ(tape.backward_trace()[1], "maxpool2d");
    EXPECT_EQ(tape.backward_trace()[2], "relu");
}

TEST(GradTape, FanOutAccumulatesGradients) {
    // y = x + x: dy/dx must be 2 everywhere
    GradTape tape;
    auto x = tape.push_value(Tensor::full({2, 2, 2}, 1.5f));
    auto y = t_add_elementwise(tape, x, x);
    tape.backward(y, Tensor::full({2, 2, 2}, 1.0f));
    for (float g : tape.grad(x).data) EXPECT_FLOAT_EQ(g, 2.0f);
}

TEST(GradCheck, Conv2d) {
    std::mt19937 rng(2024);
    for (int seed = 0; seed < 10; ++seed) {
        auto p = conv_problem(rng, 2, 3, 5, 3, 1, 1);
        const double err = grad_check(p, rng);
        EXPECT_LT(err, 1e-4) << "seed " << seed;
    }
}

TEST(GradCheck, Conv2dStrided) {
    std::mt19937 rng(31);
    auto p = conv_problem(rng, 3, 2, 7, 3, 2, 0);
    EXPECT_LT(grad_check(p, rng), 1e-4);
}

TEST(GradCheck, AddIsExactlyLinear) {
    std::mt19937 rng(5);
    GradCheckProblem p;
    p.inputs = {random_tensor({2, 4, 4}, rng), random_tensor({2, 4, 4}, rng)};
    p.forward = [](const std::vector<Tensor>& in) { return ops::add_elementwise(in[0], in[1]); };
    p.backward = [](const std::vector<Tensor>&, const Tensor& g) {
        return std::vector<Tensor>{g, g};
    };
    EXPECT_LT(grad_check(p, rng), 1e-4);

    // the analytic gradient of add is the cotangent itself, bitwise
    GradTape tape;
    auto a = tape.push_value(p.inputs[0]);
    auto b = tape.push_value(p.inputs[1]);
    auto out = t_add_elementwise(tape, a, b);
    Tensor seed = random_tensor({2, 4, 4}, rng);
    tape.backward(out, seed);
    EXPECT_EQ(tape.grad(a).data, seed.data);
    EXPECT_EQ(tape.grad(b).data, seed.data);
}

TEST(GradCheck, ReluAwayFromZero) {
    std::mt19937 rng(6);
    for (int seed = 0; seed < 10; ++seed) {
        GradCheckProblem p;
        p.inputs = {random_tensor({3, 5, 5}, rng)};
        p.forward = [](const std::vector<Tensor>& in) { return ops::relu(in[0]); };
        p.backward = [](const std::vector<Tensor>& in, const Tensor& g) {
            return std::vector<Tensor>{ops::relu_backward(g, in[0])};
        };
        const Tensor& x = p.inputs[0];
        p.coord_ok = [&x](int, std::size_t coord) { return std::abs(x.data[coord]) > 1e-2f; };
        EXPECT_LT(grad_check(p, rng), 1e-6) << "seed " << seed;
    }
}

TEST(GradCheck, MaxPool) {
    std::mt19937 rng(7);
    for (int seed = 0; seed < 10; ++seed) {
        GradCheckProblem p;
        p.inputs = {well_separated({2, 7, 7}, rng)};
        p.forward = [](const std::vector<Tensor>& in) { return ops::maxpool2d(in[0], 3, 2); };
        p.backward = [](const std::vector<Tensor>& in, const Tensor& g) {
            std::vector<std::int32_t> argmax;
            ops::maxpool2d(in[0], 3, 2, &argmax);
            return std::vector<Tensor>{ops::maxpool2d_backward(g, in[0].shape, argmax)};
        };
        EXPECT_LT(grad_check(p, rng), 1e-6) << "seed " << seed;
    }
}

TEST(GradCheck, GlobalAvgPool) {
    std::mt19937 rng(8);
    GradCheckProblem p;
    p.inputs = {random_tensor({3, 6, 6}, rng)};
    p.forward = [](const std::vector<Tensor>& in) { return ops::global_avg_pool(in[0]); };
    p.backward = [](const std::vector<Tensor>& in, const Tensor& g) {
        return std::vector<Tensor>{ops::global_avg_pool_backward(g, in[0].dim(1), in[0].dim(2))};
    };
    EXPECT_LT(grad_check(p, rng), 1e-4);
}

TEST(GradCheck, ConcatChannels) {
    std::mt19937 rng(9);
    GradCheckProblem p;
    p.inputs = {random_tensor({2, 4, 4}, rng), random_tensor({3, 4, 4}, rng)};
    p.forward = [](const std::vector<Tensor>& in) { return ops::concat_channels(in[0], in[1]); };
    p.backward = [](const std::vector<Tensor>& in, const Tensor& g) {
        auto [ga, gb] = ops::concat_channels_backward(g, in[0].dim(0), in[1].dim(0));
        return std::vector<Tensor>{ga, gb};
    };
    EXPECT_LT(grad_check(p, rng), 1e-6);
}

TEST(GradCheck, DropoutWithFixedMask) {
    std::mt19937 rng(10);
    // fix the mask by re-seeding the rng identically on every evaluation
    GradCheckProblem p;
    p.inputs = {random_tensor({4, 4, 4}, rng)};
    p.forward = [](const std::vector<Tensor>& in) {
        std::mt19937 mask_rng(99);
        return ops::dropout(in[0], 0.5f, ops::DropoutMode::kTrain, mask_rng);
    };
    p.backward = [](const std::vector<Tensor>& in, const Tensor& g) {
        std::mt19937 mask_rng(99);
        std::vector<std::uint8_t> mask;
        ops::dropout(in[0], 0.5f, ops::DropoutMode::kTrain, mask_rng, &mask);
        return std::vector<Tensor>{ops::dropout_backward(g, mask, 0.5f)};
    };
    EXPECT_LT(grad_check(p, rng), 1e-4);
}

TEST(GradCheck, SoftmaxCrossEntropy) {
    // The loss is a double, so differentiate it directly instead of going
    // through the float-tensor harness.
    std::mt19937 rng(11);
    for (int seed = 0; seed < 10; ++seed) {
        const int label = static_cast<int>(rng() % 6);
        Tensor logits = random_tensor({6}, rng, 2.0f);
        const Tensor analytic = ops::softmax_cross_entropy(logits, label).grad_logits;
        for (int i = 0; i < 6; ++i) {
            const double x0 = logits.data[static_cast<std::size_t>(i)];
            const float xp = static_cast<float>(x0 + 1e-3);
            const float xm = static_cast<float>(x0 - 1e-3);
            logits.data[static_cast<std::size_t>(i)] = xp;
            const double lp = ops::softmax_cross_entropy(logits, label).loss;
            logits.data[static_cast<std::size_t>(i)] = xm;
            const double lm = ops::softmax_cross_entropy(logits, label).loss;
            logits.data[static_cast<std::size_t>(i)] = static_cast<float>(x0);
            const double numeric = (lp - lm) / (static_cast<double>(xp) - static_cast<double>(xm));
            const double a = analytic.data[static_cast<std::size_t>(i)];
            EXPECT_NEAR(a, numeric, 1e-5 * std::max(1.0, std::abs(a))) << "seed " << seed;
        }
    }
}

TEST(GradCheck, TapedFireBlockEndToEnd) {
    // squeeze -> relu -> {1x1, 3x3} expands -> relu -> concat, checked as one
    // composite function of the input
    std::mt19937 rng(12);
    GradCheckProblem p;
    p.inputs = {random_tensor({3, 5, 5}, rng, 0.6f)};
    const Tensor sw = random_tensor({2, 3, 1, 1}, rng, 0.6f);
    const Tensor sb = random_tensor({2}, rng, 0.3f);
    const Tensor e1w = random_tensor({3, 2, 1, 1}, rng, 0.6f);
    const Tensor e1b = random_tensor({3}, rng, 0.3f);
    const Tensor e3w = random_tensor({3, 2, 3, 3}, rng, 0.6f);
    const Tensor e3b = random_tensor({3}, rng, 0.3f);

    auto build = [&](GradTape& tape, const Tensor& x) {
        auto xi = tape.push_value(x);
        auto s = t_relu(tape, t_conv2d(tape, xi, tape.push_value(sw), tape.push_value(sb), 1, 0));
        auto a = t_relu(tape, t_conv2d(tape, s, tape.push_value(e1w), tape.push_value(e1b), 1, 0));
        auto b = t_relu(tape, t_conv2d(tape, s, tape.push_value(e3w), tape.push_value(e3b), 1, 1));
        return std::pair{xi, t_concat_channels(tape, a, b)};
    };
    p.forward = [&](const std::vector<Tensor>& in) {
        GradTape tape;
        auto [xi, out] = build(tape, in[0]);
        return tape.value(out);
    };
    p.backward = [&](const std::vector<Tensor>& in, const Tensor& g) {
        GradTape tape;
        auto [xi, out] = build(tape, in[0]);
        tape.backward(out, g);
        return std::vector<Tensor>{tape.grad(xi)};
    };
    // ReLU kinks: only check coordinates whose downstream pre-activations are
    // far from zero; cheap proxy is to veto inputs near zero and rely on the
    // random weights keeping pre-activations generic.
    const double err = grad_check(p, rng, 4, 8);
    EXPECT_LT(err, 1e-3);
}
