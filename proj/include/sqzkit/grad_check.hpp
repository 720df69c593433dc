#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sqzkit/tensor.hpp"

namespace sqzkit {

/// A differentiable op under test: forward from a set of input tensors to one
/// output tensor, and backward from an output cotangent to per-input gradients.
/// `coord_ok` may veto input coordinates that sit near a nondifferentiable
/// point (ReLU kinks, near-tied pool windows); null means no veto.
struct GradCheckProblem {
    std::vector<Tensor> inputs;
    std::function<Tensor(const std::vector<Tensor>&)> forward;
    std::function<std::vector<Tensor>(const std::vector<Tensor>&, const Tensor&)> backward;
    std::function<bool(int input_index, std::size_t coord)> coord_ok;
};

/// Central finite differences with epsilon = 1e-3, 64-bit arithmetic.
/// Samples output coordinates, takes the analytic gradient of each via
/// backward with a one-hot cotangent, and compares sampled input coordinates
/// against the numeric derivative. The denominator is the realized float32
/// step (x+ - x-), so input quantization does not pollute the quotient.
/// Returns the max relative error over all sampled coordinates, with
/// rel(a, n) = |a - n| / max(1, |a|, |n|).
inline double grad_check(const GradCheckProblem& problem, std::mt19937& rng,
                         int output_samples = 4, int coord_samples = 16) {
    constexpr double kEps = 1e-3;
    Tensor base_out = problem.forward(problem.inputs);
    const std::size_t out_n = base_out.size();

    double max_rel = 0.0;
    for (int s = 0; s < output_samples; ++s) {
        const std::size_t o = out_n == 1 ? 0 : rng() % out_n;
        Tensor cotangent = Tensor::zeros(base_out.shape);
        cotangent.data[o] = 1.0f;
        std::vector<Tensor> analytic = problem.backward(problem.inputs, cotangent);

        for (std::size_t input_index = 0; input_index < problem.inputs.size(); ++input_index) {
            const std::size_t in_n = problem.inputs[input_index].size();
            for (int c = 0; c < coord_samples; ++c) {
                const std::size_t coord = in_n == 1 ? 0 : rng() % in_n;
                if (problem.coord_ok &&
                    !problem.coord_ok(static_cast<int>(input_index), coord)) {
                    continue;
                }
                std::vector<Tensor> perturbed = problem.inputs;
                const double x0 = perturbed[input_index].data[coord];
                const float x_plus = static_cast<float>(x0 + kEps);
                const float x_minus = static_cast<float>(x0 - kEps);
                perturbed[input_index].data[coord] = x_plus;
                const double plus = problem.forward(perturbed).data[o];
                perturbed[input_index].data[coord] = x_minus;
                const double minus = problem.forward(perturbed).data[o];

                const double numeric =
                    (plus - minus) / (static_cast<double>(x_plus) - static_cast<double>(x_minus));
                const double a = analytic[input_index].data[coord];
                const double rel =
                    std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
                max_rel = std::max(max_rel, rel);
            }
        }
    }
    return max_rel;
}

}  // namespace sqzkit
