#pragma once

#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

#include "lfnet/error.hpp"

namespace lfnet {

/// Dense shape in batch/channel/height/width order.
struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    [[nodiscard]] std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }

    bool operator==(const Shape4&) const = default;

    [[nodiscard]] std::string str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }
};

/// Dense 4-D array in row-major N->C->H->W order: the universal value type
/// for activations, kernels and gradients. Element type selects the engine
/// precision (float for training, double for gradient checks).
template <std::floating_point T>
struct TensorT {
    Shape4 shape{};
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(Shape4 s, T fill = T(0)) : shape(s) {
        if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
            throw ShapeError("tensor dims must all be >= 1, got " + s.str());
        }
        data.assign(static_cast<std::size_t>(s.numel()), fill);
    }

    TensorT(int n, int c, int h, int w, T fill = T(0))
        : TensorT(Shape4{n, c, h, w}, fill) {}

    [[nodiscard]] std::int64_t numel() const { return shape.numel(); }
    [[nodiscard]] bool empty() const { return data.empty(); }

    [[nodiscard]] std::int64_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::int64_t>(n) * shape.c + c) * shape.h + y) * shape.w + x;
    }

    T& at(int n, int c, int y, int x) { return data[static_cast<std::size_t>(index(n, c, y, x))]; }
    const T& at(int n, int c, int y, int x) const {
        return data[static_cast<std::size_t>(index(n, c, y, x))];
    }

    /// Pointer to the contiguous H*W plane of (sample, channel).
    T* plane(int n, int c) { return data.data() + index(n, c, 0, 0); }
    const T* plane(int n, int c) const { return data.data() + index(n, c, 0, 0); }

    /// Converts element type (e.g. float model -> double for gradient checks).
    template <std::floating_point U>
    [[nodiscard]] TensorT<U> cast() const {
        TensorT<U> out(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <std::floating_point T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
    if (!(a.shape == b.shape)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape.str() +
                         " vs " + b.shape.str());
    }
}

} // namespace lfnet
