#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sqzkit/ops.hpp"
#include "sqzkit/tensor.hpp"

namespace sqzkit {

/// Linearly decaying learning rate: lr(step) = initial_lr * (1 - step/total_steps).
struct LrSchedule {
    double initial_lr;
    int total_steps;

    LrSchedule(double initial, int steps) : initial_lr(initial), total_steps(steps) {
        if (!(initial > 0.0)) throw ParamError("initial_lr must be positive");
        if (steps < 1) throw ParamError("total_steps must be positive");
    }

    double lr(int step) const {
        if (step < 0 || step > total_steps) {
            throw ParamError("step " + std::to_string(step) + " outside schedule of " +
                             std::to_string(total_steps) + " steps");
        }
        return initial_lr * (1.0 - static_cast<double>(step) / total_steps);
    }
};

inline void sgd_step(Tensor& param, const Tensor& grad, const LrSchedule& schedule, int step) {
    if (!param.same_shape(grad)) {
        throw ShapeError("sgd_step param " + shape_str(param.shape) + " vs grad " +
                         shape_str(grad.shape));
    }
    const float lr = static_cast<float>(schedule.lr(step));
    for (std::size_t i = 0; i < param.size(); ++i) param.data[i] -= lr * grad.data[i];
}

/// Wengert-list reverse-mode tape. Ops record a backward closure as they
/// execute; backward() replays the closures exactly once each, in reverse
/// execution order. Single use per forward pass.
class GradTape {
public:
    using ValueId = int;

    ValueId push_value(Tensor v) {
        slots_.push_back(Slot{std::move(v), Tensor{}});
        return static_cast<ValueId>(slots_.size() - 1);
    }

    const Tensor& value(ValueId id) const { return slots_[static_cast<std::size_t>(id)].value; }

    Tensor& grad(ValueId id) {
        Slot& s = slots_[static_cast<std::size_t>(id)];
        if (s.grad.data.empty()) s.grad = Tensor::zeros(s.value.shape);
        return s.grad;
    }

    void accumulate_grad(ValueId id, const Tensor& g) {
        Tensor& dst = grad(id);
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
    }

    void record(std::string name, std::function<void(GradTape&)> backward) {
        ops_.push_back(Op{std::move(name), std::move(backward)});
    }

    std::size_t op_count() const { return ops_.size(); }

    /// Seeds grad(output) and replays the tape backwards. The visited op
    /// names are kept in execution (reverse) order for inspection.
    void backward(ValueId output, Tensor seed) {
        accumulate_grad(output, seed);
        backward_trace_.clear();
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
            backward_trace_.push_back(it->name);
            it->backward(*this);
        }
    }

    const std::vector<std::string>& backward_trace() const { return backward_trace_; }

private:
    struct Slot {
        Tensor value;
        Tensor grad;  // lazily allocated, zero-filled
    };
    struct Op {
        std::string name;
        std::function<void(GradTape&)> backward;
    };
    std::vector<Slot> slots_;
    std::vector<Op> ops_;
    std::vector<std::string> backward_trace_;
};

// Taped layer ops. Each runs the forward kernel immediately and records
// how to push gradients back to its inputs.

inline GradTape::ValueId t_conv2d(GradTape& tape, GradTape::ValueId x, GradTape::ValueId w,
                                  GradTape::ValueId b, int stride, int pad) {
    auto out = tape.push_value(ops::conv2d(tape.value(x), tape.value(w), tape.value(b), stride, pad));
    tape.record("conv2d", [x, w, b, out, stride, pad](GradTape& t) {
        auto grads = ops::conv2d_backward(t.grad(out), t.value(x), t.value(w), stride, pad);
        t.accumulate_grad(x, grads.input);
        t.accumulate_grad(w, grads.weights);
        t.accumulate_grad(b, grads.bias);
    });
    return out;
}

inline GradTape::ValueId t_maxpool2d(GradTape& tape, GradTape::ValueId x, int k, int stride) {
    auto argmax = std::make_shared<std::vector<std::int32_t>>();
    auto out = tape.push_value(ops::maxpool2d(tape.value(x), k, stride, argmax.get()));
    auto in_shape = tape.value(x).shape;
    tape.record("maxpool2d", [x, out, argmax, in_shape](GradTape& t) {
        t.accumulate_grad(x, ops::maxpool2d_backward(t.grad(out), in_shape, *argmax));
    });
    return out;
}

inline GradTape::ValueId t_global_avg_pool(GradTape& tape, GradTape::ValueId x) {
    const int h = tape.value(x).dim(1), w = tape.value(x).dim(2);
    auto out = tape.push_value(ops::global_avg_pool(tape.value(x)));
    tape.record("global_avg_pool", [x, out, h, w](GradTape& t) {
        t.accumulate_grad(x, ops::global_avg_pool_backward(t.grad(out), h, w));
    });
    return out;
}

inline GradTape::ValueId t_relu(GradTape& tape, GradTape::ValueId x) {
    auto out = tape.push_value(ops::relu(tape.value(x)));
    tape.record("relu", [x, out](GradTape& t) {
        t.accumulate_grad(x, ops::relu_backward(t.grad(out), t.value(x)));
    });
    return out;
}

inline GradTape::ValueId t_dropout(GradTape& tape, GradTape::ValueId x, float ratio,
                                   ops::DropoutMode mode, std::mt19937& rng) {
    auto mask = std::make_shared<std::vector<std::uint8_t>>();
    auto out = tape.push_value(ops::dropout(tape.value(x), ratio, mode, rng, mask.get()));
    tape.record("dropout", [x, out, mask, ratio](GradTape& t) {
        t.accumulate_grad(x, ops::dropout_backward(t.grad(out), *mask, ratio));
    });
    return out;
}

inline GradTape::ValueId t_concat_channels(GradTape& tape, GradTape::ValueId a, GradTape::ValueId b) {
    const int ca = tape.value(a).dim(0), cb = tape.value(b).dim(0);
    auto out = tape.push_value(ops::concat_channels(tape.value(a), tape.value(b)));
    tape.record("concat_channels", [a, b, out, ca, cb](GradTape& t) {
        auto [ga, gb] = ops::concat_channels_backward(t.grad(out), ca, cb);
        t.accumulate_grad(a, ga);
        t.accumulate_grad(b, gb);
    });
    return out;
}

inline GradTape::ValueId t_add_elementwise(GradTape& tape, GradTape::ValueId a, GradTape::ValueId b) {
    auto out = tape.push_value(ops::add_elementwise(tape.value(a), tape.value(b)));
    tape.record("add_elementwise", [a, b, out](GradTape& t) {
        t.accumulate_grad(a, t.grad(out));
        t.accumulate_grad(b, t.grad(out));
    });
    return out;
}

/// Fan-in-scaled uniform init for conv filters: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
inline Tensor init_conv_weights(int filters, int in_channels, int kh, int kw, std::mt19937& rng) {
    const float limit = std::sqrt(6.0f / (static_cast<float>(in_channels) * kh * kw));
    return random_tensor({filters, in_channels, kh, kw}, rng, limit);
}

}  // namespace sqzkit
