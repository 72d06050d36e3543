#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include "lfnet/tensor.hpp"

namespace lfnet {

/// 10 * log10(max^2 / MSE) in dB over all elements jointly (color images use
/// a single MSE across channels). Identical inputs return +infinity.
template <std::floating_point T>
double psnr(const TensorT<T>& a, const TensorT<T>& b, double max_value = 1.0) {
    require_same_shape(a, b, "psnr");
    double mse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_value * max_value / mse);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size) * size);
    const int half = size / 2;
    double sum = 0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dy = y - half, dx = x - half;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            w[static_cast<std::size_t>(y) * size + x] = v;
            sum += v;
        }
    }
    for (double& v : w) v /= sum;
    return w;
}

// FP contraction is disabled here so the a == b moment accumulators stay
// bitwise identical whatever the compiler fuses: SSIM of an image with
// itself must be exactly 1.
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC push_options
#pragma GCC optimize("fp-contract=off")
#endif
template <std::floating_point T>
double ssim_channel(const TensorT<T>& a, const TensorT<T>& b, int channel,
                    const std::vector<double>& window, int win, double c1, double c2) {
#if defined(__clang__)
#pragma clang fp contract(off)
#endif
    const int h = a.shape.h, w = a.shape.w;
    const int valid_h = h - win + 1, valid_w = w - win + 1;
    double total = 0;
    for (int y = 0; y < valid_h; ++y) {
        for (int x = 0; x < valid_w; ++x) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int wy = 0; wy < win; ++wy) {
                const T* ra = a.plane(0, channel) + static_cast<std::int64_t>(y + wy) * w + x;
                const T* rb = b.plane(0, channel) + static_cast<std::int64_t>(y + wy) * w + x;
                const double* wrow = window.data() + static_cast<std::size_t>(wy) * win;
                for (int wx = 0; wx < win; ++wx) {
                    const double va = ra[wx], vb = rb[wx];
                    const double weight = wrow[wx];
                    mu_a += weight * va;
                    mu_b += weight * vb;
                    aa += weight * va * va;
                    bb += weight * vb * vb;
                    ab += weight * va * vb;
                }
            }
            // Products are hoisted into locals so FMA contraction cannot make
            // the a==b numerator and denominator round differently (SSIM of an
            // image with itself must be exactly 1).
            const double mu_aa = mu_a * mu_a;
            const double mu_bb = mu_b * mu_b;
            const double mu_ab = mu_a * mu_b;
            const double var_a = aa - mu_aa;
            const double var_b = bb - mu_bb;
            const double cov = ab - mu_ab;
            const double lum = (2.0 * mu_ab + c1) / ((mu_aa + mu_bb) + c1);
            const double contrast = (2.0 * cov + c2) / ((var_a + var_b) + c2);
            total += lum * contrast;
        }
    }
    return total / (static_cast<double>(valid_h) * valid_w);
}
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC pop_options
#endif

} // namespace detail

/// Mean structural similarity with the standard 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03 on dynamic range L. Color images take
/// the mean over per-channel SSIM.
template <std::floating_point T>
double ssim(const TensorT<T>& a, const TensorT<T>& b, double dynamic_range = 1.0) {
    require_same_shape(a, b, "ssim");
    constexpr int kWindow = 11;
    if (a.shape.n != 1) throw ShapeError("ssim: expects single images (N = 1)");
    if (a.shape.h < kWindow || a.shape.w < kWindow) {
        throw ShapeError("ssim: image " + a.shape.str() + " smaller than the 11x11 window");
    }
    static const std::vector<double> window = detail::gaussian_window(kWindow, 1.5);
    const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    double total = 0;
    for (int c = 0; c < a.shape.c; ++c) {
        total += detail::ssim_channel(a, b, c, window, kWindow, c1, c2);
    }
    return total / a.shape.c;
}

} // namespace lfnet
