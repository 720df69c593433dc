#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sqzkit/error.hpp"

namespace sqzkit {

inline std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense multi-dimensional float32 array, row-major.
/// Activations are [channels, height, width]; conv weights are
/// [out_channels, in_channels, kernel_h, kernel_w].
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;

    Tensor(std::vector<int> s, std::vector<float> d)
        : shape(std::move(s)), data(std::move(d)) {
        check_invariants();
    }

    static Tensor zeros(std::vector<int> s) {
        const auto n = shape_product(s);
        validate_shape(s);
        return Tensor(std::move(s), std::vector<float>(static_cast<std::size_t>(n), 0.0f));
    }

    static Tensor full(std::vector<int> s, float value) {
        const auto n = shape_product(s);
        validate_shape(s);
        return Tensor(std::move(s), std::vector<float>(static_cast<std::size_t>(n), value));
    }

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    // Flat offsets for the two layouts used throughout.
    std::size_t at3(int c, int h, int w, int H, int W) const {
        return static_cast<std::size_t>((static_cast<std::int64_t>(c) * H + h) * W + w);
    }

    float& operator[](std::size_t i) { return data[i]; }
    float operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

private:
    static void validate_shape(const std::vector<int>& s) {
        for (int e : s) {
            if (e < 1) throw ShapeError("extent must be >= 1, got " + std::to_string(e));
        }
    }

    void check_invariants() const {
        validate_shape(shape);
        if (shape_product(shape) != static_cast<std::int64_t>(data.size())) {
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
    }
};

// Uniform floats derived from raw mt19937 draws. mt19937 output is pinned
// by the standard, so these are bitwise reproducible across platforms.
inline float uniform_unit(std::mt19937& rng) {
    // 24 high bits -> [0, 1)
    return static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f);
}

inline float uniform_sym(std::mt19937& rng, float limit) {
    return (2.0f * uniform_unit(rng) - 1.0f) * limit;
}

inline Tensor random_tensor(std::vector<int> shape, std::mt19937& rng, float limit = 1.0f) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = uniform_sym(rng, limit);
    return t;
}

}  // namespace sqzkit
