#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "lfnet/image.hpp"
#include "lfnet/rng.hpp"
#include "lfnet/tensor.hpp"

namespace lfnet {

/// Band-limited random texture: a handful of oriented sinusoids plus a linear
/// ramp, normalized into [0.15, 0.85] so evaluation clipping stays inactive.
/// Used for desk-scale experiments and demo datasets.
template <std::floating_point T = float>
TensorT<T> synthetic_texture(Rng& rng, int size, int channels = 1) {
    TensorT<T> out(1, channels, size, size);
    std::vector<double> field(static_cast<std::size_t>(size) * size);
    for (int c = 0; c < channels; ++c) {
        std::fill(field.begin(), field.end(), 0.0);
        const int components = static_cast<int>(rng.uniform_int(4, 8));
        for (int j = 0; j < components; ++j) {
            const double fx = rng.uniform(-4.0, 4.0);
            const double fy = rng.uniform(-4.0, 4.0);
            const double amplitude = rng.uniform(0.2, 1.0) / (1.0 + j);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const double u = static_cast<double>(x) / size;
                    const double v = static_cast<double>(y) / size;
                    field[static_cast<std::size_t>(y) * size + x] +=
                        amplitude *
                        std::sin(2.0 * std::numbers::pi * (fx * u + fy * v) + phase);
                }
            }
        }
        const double gx = rng.uniform(-1.0, 1.0);
        const double gy = rng.uniform(-1.0, 1.0);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                field[static_cast<std::size_t>(y) * size + x] +=
                    gx * x / size + gy * y / size;
            }
        }
        const auto [lo_it, hi_it] = std::minmax_element(field.begin(), field.end());
        const double lo = *lo_it, span = std::max(*hi_it - *lo_it, 1e-9);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                out.at(0, c, y, x) = static_cast<T>(
                    0.15 + 0.7 * (field[static_cast<std::size_t>(y) * size + x] - lo) / span);
            }
        }
    }
    return out;
}

/// Deterministic named texture set ("tex000", "tex001", ...).
template <std::floating_point T = float>
std::vector<NamedImageT<T>> synthetic_texture_set(std::uint64_t seed, int count, int size,
                                                  int channels = 1) {
    Rng rng(derive_seed(seed, 0x7E7));
    std::vector<NamedImageT<T>> images;
    images.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "tex%03d", i);
        images.push_back({name, synthetic_texture<T>(rng, size, channels)});
    }
    return images;
}

} // namespace lfnet
