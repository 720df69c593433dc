#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sqzkit/arch.hpp"
#include "sqzkit/autograd.hpp"
#include "sqzkit/dataset.hpp"

// Executes an ArchGraph forward (and, via the tape, backward) and runs the
// desk-scale training loop: plain SGD with a linearly decaying learning rate.

namespace sqzkit {

/// Parameters for every conv node, in topological order.
struct ModelParams {
    struct Entry {
        std::string name;
        Tensor weights;
        Tensor bias;
    };
    std::vector<Entry> layers;

    Entry& find(const std::string& name) {
        for (auto& e : layers) {
            if (e.name == name) return e;
        }
        throw ConfigError("no parameters for layer " + name);
    }
    const Entry& find(const std::string& name) const {
        return const_cast<ModelParams*>(this)->find(name);
    }
};

// Weights are fan-in-scaled uniform; biases start slightly positive so the
// narrow squeeze layers and the post-conv10 ReLU keep a live gradient path
// at the start of training.
inline ModelParams init_params(const ArchGraph& g, std::uint32_t seed, float bias_init = 0.05f) {
    std::mt19937 rng(seed);
    ModelParams params;
    for (int id : g.topo_order()) {
        const Node& n = g.node(id);
        if (!n.has_weights()) continue;
        ModelParams::Entry e;
        e.name = n.name;
        e.weights = init_conv_weights(n.filters, n.in_channels, n.kh, n.kw, rng);
        e.bias = Tensor::full({n.filters}, bias_init);
        params.layers.push_back(std::move(e));
    }
    return params;
}

namespace detail {

// Walks the graph on a tape; returns the value id feeding the output node.
inline GradTape::ValueId run_graph(GradTape& tape, const ArchGraph& g, const ModelParams& params,
                                   const Tensor& image, ops::DropoutMode mode, std::mt19937& rng,
                                   std::map<std::string, std::pair<GradTape::ValueId, GradTape::ValueId>>* param_ids) {
    std::vector<GradTape::ValueId> value_of(g.nodes.size(), -1);
    GradTape::ValueId out = -1;
    for (int id : g.topo_order()) {
        const Node& n = g.node(id);
        auto in = [&](int slot) { return value_of[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(slot)])]; };
        GradTape::ValueId v = -1;
        switch (n.kind) {
            case NodeKind::kInput:
                v = tape.push_value(image);
                break;
            case NodeKind::kConv: {
                const auto& e = params.find(n.name);
                const auto w_id = tape.push_value(e.weights);
                const auto b_id = tape.push_value(e.bias);
                if (param_ids) (*param_ids)[n.name] = {w_id, b_id};
                v = t_conv2d(tape, in(0), w_id, b_id, n.stride, n.pad);
                break;
            }
            case NodeKind::kRelu:
                v = t_relu(tape, in(0));
                break;
            case NodeKind::kMaxPool:
                v = t_maxpool2d(tape, in(0), n.pool_k, n.pool_stride);
                break;
            case NodeKind::kGlobalAvgPool:
                v = t_global_avg_pool(tape, in(0));
                break;
            case NodeKind::kDropout:
                v = t_dropout(tape, in(0), n.dropout_ratio, mode, rng);
                break;
            case NodeKind::kConcat:
                v = t_concat_channels(tape, in(0), in(1));
                break;
            case NodeKind::kAdd:
                v = t_add_elementwise(tape, in(0), in(1));
                break;
            case NodeKind::kOutput:
                v = in(0);
                out = v;
                break;
        }
        value_of[static_cast<std::size_t>(id)] = v;
    }
    return out;
}

}  // namespace detail

/// Eval-mode logits for one image.
inline Tensor forward_eval(const ArchGraph& g, const ModelParams& params, const Tensor& image) {
    GradTape tape;
    std::mt19937 unused(0);
    const auto out = detail::run_graph(tape, g, params, image, ops::DropoutMode::kEval, unused, nullptr);
    return tape.value(out);
}

inline int predict(const ArchGraph& g, const ModelParams& params, const Tensor& image) {
    const Tensor logits = forward_eval(g, params, image);
    int best = 0;
    for (int i = 1; i < logits.dim(0); ++i) {
        if (logits.data[static_cast<std::size_t>(i)] > logits.data[static_cast<std::size_t>(best)]) best = i;
    }
    return best;
}

inline double heldout_accuracy(const ArchGraph& g, const ModelParams& params, const ToyDataset& ds) {
    if (ds.heldout_count() == 0) throw ConfigError("dataset has no held-out split");
    int correct = 0;
    for (int i = ds.train_count; i < ds.size(); ++i) {
        correct += predict(g, params, ds.images[static_cast<std::size_t>(i)]) ==
                   ds.labels[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(correct) / ds.heldout_count();
}

struct TrainConfig {
    int steps = 200;
    int batch = 8;
    double initial_lr = 0.04;
    std::uint32_t seed = 42;
    // Global L2 gradient-norm ceiling. The net has no normalization layers,
    // so one oversized step can push every pre-ReLU activation negative and
    // freeze training; clipping removes that failure mode. 0 disables.
    double clip_norm = 1.0;
    // Heavy-ball momentum on the clipped gradient; the update itself stays
    // p <- p - lr(step) * v.
    double momentum = 0.9;
    float bias_init = 0.05f;
};

struct TrainResult {
    std::vector<double> losses;  // mean batch loss per step
    double final_accuracy = 0.0;
    ModelParams params;
};

/// SGD on the toy dataset. The graph's head width must match the dataset's
/// class count. Deterministic for a fixed seed: initialization, batch order
/// and dropout masks all derive from it.
inline TrainResult train_toy(const ArchGraph& g, const ToyDataset& ds, const TrainConfig& cfg) {
    int head_filters = -1;
    for (const auto& n : g.nodes) {
        if (n.kind == NodeKind::kConv) head_filters = n.filters;
    }
    if (head_filters != ds.num_classes) {
        throw ConfigError("head has " + std::to_string(head_filters) +
                          " filters but dataset has " + std::to_string(ds.num_classes) + " classes");
    }
    if (cfg.steps < 0 || cfg.batch < 1) throw ConfigError("steps must be >= 0 and batch >= 1");

    TrainResult result;
    result.params = init_params(g, cfg.seed, cfg.bias_init);
    if (cfg.steps == 0) {
        result.final_accuracy = heldout_accuracy(g, result.params, ds);
        return result;
    }

    std::mt19937 rng(cfg.seed + 1);
    const LrSchedule schedule(cfg.initial_lr, cfg.steps);

    std::vector<Tensor> weight_velocity, bias_velocity;
    for (const auto& layer : result.params.layers) {
        weight_velocity.push_back(Tensor::zeros(layer.weights.shape));
        bias_velocity.push_back(Tensor::zeros(layer.bias.shape));
    }

    // epoch-shuffled training order
    std::vector<int> order(static_cast<std::size_t>(ds.train_count));
    std::size_t pos = order.size();  // forces a shuffle on first use
    auto next_index = [&]() {
        if (pos == order.size()) {
            for (int i = 0; i < ds.train_count; ++i) order[static_cast<std::size_t>(i)] = i;
            for (int i = ds.train_count - 1; i > 0; --i) {
                const int j = static_cast<int>(rng() % static_cast<std::uint32_t>(i + 1));
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
            }
            pos = 0;
        }
        return order[pos++];
    };

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<Tensor> weight_grads, bias_grads;
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const int idx = next_index();
            GradTape tape;
            std::map<std::string, std::pair<GradTape::ValueId, GradTape::ValueId>> param_ids;
            const auto logits_id =
                detail::run_graph(tape, g, result.params, ds.images[static_cast<std::size_t>(idx)],
                                  ops::DropoutMode::kTrain, rng, &param_ids);
            const auto loss = ops::softmax_cross_entropy(tape.value(logits_id),
                                                         ds.labels[static_cast<std::size_t>(idx)]);
            batch_loss += loss.loss;
            tape.backward(logits_id, loss.grad_logits);

            std::size_t li = 0;
            for (const auto& e : result.params.layers) {
                const auto [w_id, b_id] = param_ids.at(e.name);
                if (weight_grads.size() <= li) {
                    weight_grads.push_back(tape.grad(w_id));
                    bias_grads.push_back(tape.grad(b_id));
                } else {
                    const Tensor& gw = tape.grad(w_id);
                    const Tensor& gb = tape.grad(b_id);
                    for (std::size_t i = 0; i < gw.size(); ++i) weight_grads[li].data[i] += gw.data[i];
                    for (std::size_t i = 0; i < gb.size(); ++i) bias_grads[li].data[i] += gb.data[i];
                }
                ++li;
            }
        }

        const float inv_batch = 1.0f / static_cast<float>(cfg.batch);
        for (std::size_t li = 0; li < result.params.layers.size(); ++li) {
            for (auto& v : weight_grads[li].data) v *= inv_batch;
            for (auto& v : bias_grads[li].data) v *= inv_batch;
        }
        if (cfg.clip_norm > 0.0) {
            double sq = 0.0;
            for (std::size_t li = 0; li < result.params.layers.size(); ++li) {
                for (float v : weight_grads[li].data) sq += static_cast<double>(v) * v;
                for (float v : bias_grads[li].data) sq += static_cast<double>(v) * v;
            }
            const double norm = std::sqrt(sq);
            if (norm > cfg.clip_norm) {
                const float scale = static_cast<float>(cfg.clip_norm / norm);
                for (std::size_t li = 0; li < result.params.layers.size(); ++li) {
                    for (auto& v : weight_grads[li].data) v *= scale;
                    for (auto& v : bias_grads[li].data) v *= scale;
                }
            }
        }
        const float m = static_cast<float>(cfg.momentum);
        for (std::size_t li = 0; li < result.params.layers.size(); ++li) {
            for (std::size_t i = 0; i < weight_velocity[li].size(); ++i) {
                weight_velocity[li].data[i] = m * weight_velocity[li].data[i] + weight_grads[li].data[i];
            }
            for (std::size_t i = 0; i < bias_velocity[li].size(); ++i) {
                bias_velocity[li].data[i] = m * bias_velocity[li].data[i] + bias_grads[li].data[i];
            }
            sgd_step(result.params.layers[li].weights, weight_velocity[li], schedule, step);
            sgd_step(result.params.layers[li].bias, bias_velocity[li], schedule, step);
        }
        result.losses.push_back(batch_loss / cfg.batch);
    }

    result.final_accuracy = heldout_accuracy(g, result.params, ds);
    return result;
}

}  // namespace sqzkit
