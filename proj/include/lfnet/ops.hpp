#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <string>
#include <utility>
#include <vector>

#include "lfnet/gemm.hpp"
#include "lfnet/tensor.hpp"

namespace lfnet {

enum class Mode { train, infer };

/// Convolution weights in (out_channels, in_channels, kh, kw) layout plus a
/// per-output-channel bias. Same-zero padding is implied everywhere, so odd
/// kernel sizes are required.
template <std::floating_point T>
struct ConvParamsT {
    TensorT<T> weights;
    std::vector<T> bias;

    [[nodiscard]] int out_channels() const { return weights.shape.n; }
    [[nodiscard]] int in_channels() const { return weights.shape.c; }
    [[nodiscard]] int kernel() const { return weights.shape.h; }

    void validate() const {
        if (weights.empty() || out_channels() < 1 || in_channels() < 1) {
            throw ShapeError("conv params: empty weights");
        }
        if (weights.shape.h != weights.shape.w || weights.shape.h % 2 == 0) {
            throw ShapeError("conv params: kernel must be square and odd, got " +
                             weights.shape.str());
        }
        if (static_cast<int>(bias.size()) != out_channels()) {
            throw ShapeError("conv params: bias length " + std::to_string(bias.size()) +
                             " != out_channels " + std::to_string(out_channels()));
        }
    }
};

using ConvParams = ConvParamsT<float>;

template <std::floating_point T>
struct BatchNormParamsT {
    std::vector<T> gamma;
    std::vector<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T epsilon = T(1e-5);
    /// Weight of the fresh batch statistic in the running average:
    /// running = (1 - momentum) * running + momentum * batch.
    T momentum = T(0.1);

    [[nodiscard]] int channels() const { return static_cast<int>(gamma.size()); }

    static BatchNormParamsT identity(int channels) {
        BatchNormParamsT p;
        p.gamma.assign(channels, T(1));
        p.beta.assign(channels, T(0));
        p.running_mean.assign(channels, T(0));
        p.running_var.assign(channels, T(1));
        return p;
    }

    void validate() const {
        const std::size_t c = gamma.size();
        if (c == 0 || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
            throw ShapeError("batch norm params: per-channel vectors disagree in length");
        }
        if (!(epsilon >= T(0))) throw ShapeError("batch norm params: epsilon must be >= 0");
        for (T v : running_var) {
            if (v < T(0)) throw ShapeError("batch norm params: running_var element < 0");
        }
    }
};

using BatchNormParams = BatchNormParamsT<float>;

/// Per-channel statistics saved by a forward pass; the backward pass is only
/// defined over train-mode (batch) statistics.
template <std::floating_point T>
struct BatchNormCacheT {
    std::vector<T> mean;
    std::vector<T> inv_std;
    std::vector<T> batch_var; // biased, pre-epsilon; feeds the running average
    bool train_mode = false;
};

using BatchNormCache = BatchNormCacheT<float>;

namespace detail {

/// Unfolds one sample (C,H,W) into columns of shape (C*K*K) x (H*W) with
/// same-zero padding, ready for a weights-by-columns GEMM.
template <std::floating_point T>
void im2col(const T* src, int c, int h, int w, int k, T* cols) {
    const int pad = (k - 1) / 2;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    T* out = cols;
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = src + static_cast<std::int64_t>(ch) * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int dy = ky - pad;
                const int dx = kx - pad;
                for (int y = 0; y < h; ++y) {
                    T* row = out + static_cast<std::int64_t>(y) * w;
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) {
                        std::fill(row, row + w, T(0));
                        continue;
                    }
                    const T* srow = plane + static_cast<std::int64_t>(sy) * w;
                    const int x0 = std::min(w, std::max(0, -dx));
                    const int x1 = std::max(x0, std::min(w, w - dx));
                    if (x0 > 0) std::fill(row, row + x0, T(0));
                    std::copy(srow + x0 + dx, srow + x1 + dx, row + x0);
                    if (x1 < w) std::fill(row + x1, row + w, T(0));
                }
                out += hw;
            }
        }
    }
}

/// Adjoint of im2col: scatter-adds columns back into one (C,H,W) sample.
template <std::floating_point T>
void col2im_add(const T* cols, int c, int h, int w, int k, T* dst) {
    const int pad = (k - 1) / 2;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const T* in = cols;
    for (int ch = 0; ch < c; ++ch) {
        T* plane = dst + static_cast<std::int64_t>(ch) * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int dy = ky - pad;
                const int dx = kx - pad;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* row = in + static_cast<std::int64_t>(y) * w;
                    T* drow = plane + static_cast<std::int64_t>(sy) * w;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(w, w - dx);
                    for (int x = x0; x < x1; ++x) drow[x + dx] += row[x];
                }
                in += hw;
            }
        }
    }
}

} // namespace detail

/// Cross-correlation (deep-learning "convolution") with same-zero padding:
/// output shape (N, out_channels, H, W) with spatial dims preserved.
template <std::floating_point T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const ConvParamsT<T>& params) {
    params.validate();
    if (input.shape.c != params.in_channels()) {
        throw ShapeError("conv2d: input has " + std::to_string(input.shape.c) +
                         " channels, params expect " + std::to_string(params.in_channels()));
    }
    const int n = input.shape.n, c = input.shape.c, h = input.shape.h, w = input.shape.w;
    const int oc = params.out_channels(), k = params.kernel();
    const int ckk = c * k * k;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;

    TensorT<T> out(n, oc, h, w);
    std::vector<T> cols(static_cast<std::size_t>(ckk) * hw);
    for (int s = 0; s < n; ++s) {
        detail::im2col(input.plane(s, 0), c, h, w, k, cols.data());
        gemm<T>(false, false, oc, static_cast<int>(hw), ckk, T(1),
                params.weights.data.data(), ckk, cols.data(), static_cast<int>(hw), T(0),
                out.plane(s, 0), static_cast<int>(hw));
        for (int ch = 0; ch < oc; ++ch) {
            T* plane = out.plane(s, ch);
            const T b = params.bias[static_cast<std::size_t>(ch)];
            for (std::int64_t i = 0; i < hw; ++i) plane[i] += b;
        }
    }
    return out;
}

template <std::floating_point T>
struct Conv2dGradsT {
    TensorT<T> input;   // empty when grad_input was not requested
    TensorT<T> weights; // same layout as ConvParamsT::weights
    std::vector<T> bias;
};

using Conv2dGrads = Conv2dGradsT<float>;

/// Reverse-mode of conv2d_forward. Per-sample weight/bias contributions are
/// accumulated in ascending sample order, so results do not depend on any
/// internal batching.
template <std::floating_point T>
Conv2dGradsT<T> conv2d_backward(const TensorT<T>& input, const ConvParamsT<T>& params,
                                const TensorT<T>& grad_output, bool need_grad_input = true) {
    params.validate();
    const int n = input.shape.n, c = input.shape.c, h = input.shape.h, w = input.shape.w;
    const int oc = params.out_channels(), k = params.kernel();
    if (input.shape.c != params.in_channels()) {
        throw ShapeError("conv2d backward: input/params channel mismatch");
    }
    const Shape4 expect{n, oc, h, w};
    if (!(grad_output.shape == expect)) {
        throw ShapeError("conv2d backward: grad_output shape " + grad_output.shape.str() +
                         " != forward output shape " + expect.str());
    }
    const int ckk = c * k * k;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;

    Conv2dGradsT<T> grads;
    grads.weights = TensorT<T>(params.weights.shape);
    grads.bias.assign(static_cast<std::size_t>(oc), T(0));
    if (need_grad_input) grads.input = TensorT<T>(input.shape);

    std::vector<T> cols(static_cast<std::size_t>(ckk) * hw);
    std::vector<T> cols_grad(need_grad_input ? static_cast<std::size_t>(ckk) * hw : 0);
    for (int s = 0; s < n; ++s) {
        detail::im2col(input.plane(s, 0), c, h, w, k, cols.data());
        // dW += dY_s (oc x hw) * cols_s^T (hw x ckk)
        gemm<T>(false, true, oc, ckk, static_cast<int>(hw), T(1), grad_output.plane(s, 0),
                static_cast<int>(hw), cols.data(), static_cast<int>(hw), T(1),
                grads.weights.data.data(), ckk);
        for (int ch = 0; ch < oc; ++ch) {
            const T* plane = grad_output.plane(s, ch);
            T acc = 0;
            for (std::int64_t i = 0; i < hw; ++i) acc += plane[i];
            grads.bias[static_cast<std::size_t>(ch)] += acc;
        }
        if (need_grad_input) {
            // dCols = W^T (ckk x oc) * dY_s (oc x hw)
            gemm<T>(true, false, ckk, static_cast<int>(hw), oc, T(1),
                    params.weights.data.data(), ckk, grad_output.plane(s, 0),
                    static_cast<int>(hw), T(0), cols_grad.data(), static_cast<int>(hw));
            detail::col2im_add(cols_grad.data(), c, h, w, k, grads.input.plane(s, 0));
        }
    }
    return grads;
}

/// Normalizes per channel. Train mode uses batch statistics (biased variance
/// over N*H*W elements) and reports them through the cache; infer mode uses
/// the running statistics. Train mode also folds the batch statistics into
/// the running averages.
template <std::floating_point T>
TensorT<T> batchnorm_forward(const TensorT<T>& input, BatchNormParamsT<T>& params,
                             Mode mode, BatchNormCacheT<T>& cache) {
    params.validate();
    if (input.shape.c != params.channels()) {
        throw ShapeError("batch norm: input has " + std::to_string(input.shape.c) +
                         " channels, params expect " + std::to_string(params.channels()));
    }
    const int n = input.shape.n, c = input.shape.c, h = input.shape.h, w = input.shape.w;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const std::int64_t count = static_cast<std::int64_t>(n) * hw;

    cache.mean.assign(static_cast<std::size_t>(c), T(0));
    cache.inv_std.assign(static_cast<std::size_t>(c), T(0));
    cache.batch_var.assign(static_cast<std::size_t>(c), T(0));
    cache.train_mode = (mode == Mode::train);

    if (mode == Mode::train && count < 2) {
        throw ShapeError("batch norm: train mode needs >= 2 elements per channel, got " +
                         std::to_string(count));
    }

    TensorT<T> out(input.shape);
    for (int ch = 0; ch < c; ++ch) {
        T mean, inv_std;
        if (mode == Mode::train) {
            double sum = 0;
            for (int s = 0; s < n; ++s) {
                const T* plane = input.plane(s, ch);
                for (std::int64_t i = 0; i < hw; ++i) sum += plane[i];
            }
            const double mu = sum / static_cast<double>(count);
            double sq = 0;
            for (int s = 0; s < n; ++s) {
                const T* plane = input.plane(s, ch);
                for (std::int64_t i = 0; i < hw; ++i) {
                    const double d = plane[i] - mu;
                    sq += d * d;
                }
            }
            const double var = sq / static_cast<double>(count);
            mean = static_cast<T>(mu);
            inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(params.epsilon)));
            cache.batch_var[static_cast<std::size_t>(ch)] = static_cast<T>(var);
            params.running_mean[static_cast<std::size_t>(ch)] =
                (T(1) - params.momentum) * params.running_mean[static_cast<std::size_t>(ch)] +
                params.momentum * mean;
            params.running_var[static_cast<std::size_t>(ch)] =
                (T(1) - params.momentum) * params.running_var[static_cast<std::size_t>(ch)] +
                params.momentum * static_cast<T>(var);
        } else {
            mean = params.running_mean[static_cast<std::size_t>(ch)];
            inv_std = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(params.running_var[static_cast<std::size_t>(ch)]) +
                                static_cast<double>(params.epsilon)));
            cache.batch_var[static_cast<std::size_t>(ch)] =
                params.running_var[static_cast<std::size_t>(ch)];
        }
        cache.mean[static_cast<std::size_t>(ch)] = mean;
        cache.inv_std[static_cast<std::size_t>(ch)] = inv_std;

        const T g = params.gamma[static_cast<std::size_t>(ch)];
        const T b = params.beta[static_cast<std::size_t>(ch)];
        for (int s = 0; s < n; ++s) {
            const T* src = input.plane(s, ch);
            T* dst = out.plane(s, ch);
            for (std::int64_t i = 0; i < hw; ++i) {
                dst[i] = g * ((src[i] - mean) * inv_std) + b;
            }
        }
    }
    return out;
}

template <std::floating_point T>
struct BatchNormGradsT {
    TensorT<T> input;
    std::vector<T> gamma;
    std::vector<T> beta;
};

using BatchNormGrads = BatchNormGradsT<float>;

/// Full backward through the batch statistics (mean and variance treated as
/// functions of the input). Requires a cache saved by a train-mode forward.
template <std::floating_point T>
BatchNormGradsT<T> batchnorm_backward(const TensorT<T>& input,
                                      const BatchNormParamsT<T>& params,
                                      const BatchNormCacheT<T>& cache,
                                      const TensorT<T>& grad_output) {
    if (!cache.train_mode) {
        throw GraphError("batch norm backward: cache holds inference statistics; "
                         "backward is defined for train mode only");
    }
    require_same_shape(input, grad_output, "batch norm backward");
    const int n = input.shape.n, c = input.shape.c, h = input.shape.h, w = input.shape.w;
    if (static_cast<int>(cache.mean.size()) != c || params.channels() != c) {
        throw ShapeError("batch norm backward: cache/params channel mismatch");
    }
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const std::int64_t count = static_cast<std::int64_t>(n) * hw;

    BatchNormGradsT<T> grads;
    grads.input = TensorT<T>(input.shape);
    grads.gamma.assign(static_cast<std::size_t>(c), T(0));
    grads.beta.assign(static_cast<std::size_t>(c), T(0));

    for (int ch = 0; ch < c; ++ch) {
        const T mean = cache.mean[static_cast<std::size_t>(ch)];
        const T inv_std = cache.inv_std[static_cast<std::size_t>(ch)];
        const T g = params.gamma[static_cast<std::size_t>(ch)];

        double sum_dy = 0, sum_dy_xhat = 0;
        for (int s = 0; s < n; ++s) {
            const T* x = input.plane(s, ch);
            const T* dy = grad_output.plane(s, ch);
            for (std::int64_t i = 0; i < hw; ++i) {
                const double xhat = (x[i] - mean) * inv_std;
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * xhat;
            }
        }
        grads.beta[static_cast<std::size_t>(ch)] = static_cast<T>(sum_dy);
        grads.gamma[static_cast<std::size_t>(ch)] = static_cast<T>(sum_dy_xhat);

        const double scale = static_cast<double>(g) * inv_std / static_cast<double>(count);
        for (int s = 0; s < n; ++s) {
            const T* x = input.plane(s, ch);
            const T* dy = grad_output.plane(s, ch);
            T* dx = grads.input.plane(s, ch);
            for (std::int64_t i = 0; i < hw; ++i) {
                const double xhat = (x[i] - mean) * inv_std;
                dx[i] = static_cast<T>(
                    scale * (static_cast<double>(count) * dy[i] - sum_dy - xhat * sum_dy_xhat));
            }
        }
    }
    return grads;
}

/// Elementwise max(0, x).
template <std::floating_point T>
TensorT<T> relu(const TensorT<T>& input) {
    TensorT<T> out(input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i) {
        out.data[i] = input.data[i] > T(0) ? input.data[i] : T(0);
    }
    return out;
}

/// Passes gradient where the (pre-activation) input is > 0; the subgradient
/// at exactly zero is fixed to 0.
template <std::floating_point T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_output) {
    require_same_shape(input, grad_output, "relu backward");
    TensorT<T> out(input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i) {
        out.data[i] = input.data[i] > T(0) ? grad_output.data[i] : T(0);
    }
    return out;
}

/// Stacks b's channels after a's. Inputs must agree on batch and spatial dims.
template <std::floating_point T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w) {
        throw ShapeError("concat: batch/spatial mismatch " + a.shape.str() + " vs " +
                         b.shape.str());
    }
    TensorT<T> out(a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w);
    const std::int64_t hw = static_cast<std::int64_t>(a.shape.h) * a.shape.w;
    for (int s = 0; s < a.shape.n; ++s) {
        std::copy(a.plane(s, 0), a.plane(s, 0) + static_cast<std::int64_t>(a.shape.c) * hw,
                  out.plane(s, 0));
        std::copy(b.plane(s, 0), b.plane(s, 0) + static_cast<std::int64_t>(b.shape.c) * hw,
                  out.plane(s, a.shape.c));
    }
    return out;
}

/// Adjoint of concat_channels: slices the cotangent at split_point channels.
template <std::floating_point T>
std::pair<TensorT<T>, TensorT<T>> split_channels_backward(const TensorT<T>& grad_output,
                                                          int split_point) {
    if (split_point <= 0 || split_point >= grad_output.shape.c) {
        throw ShapeError("split: split_point " + std::to_string(split_point) +
                         " outside (0, " + std::to_string(grad_output.shape.c) + ")");
    }
    TensorT<T> a(grad_output.shape.n, split_point, grad_output.shape.h, grad_output.shape.w);
    TensorT<T> b(grad_output.shape.n, grad_output.shape.c - split_point, grad_output.shape.h,
                 grad_output.shape.w);
    const std::int64_t hw = static_cast<std::int64_t>(grad_output.shape.h) * grad_output.shape.w;
    for (int s = 0; s < grad_output.shape.n; ++s) {
        std::copy(grad_output.plane(s, 0),
                  grad_output.plane(s, 0) + static_cast<std::int64_t>(split_point) * hw,
                  a.plane(s, 0));
        std::copy(grad_output.plane(s, split_point),
                  grad_output.plane(s, split_point) +
                      static_cast<std::int64_t>(b.shape.c) * hw,
                  b.plane(s, 0));
    }
    return {std::move(a), std::move(b)};
}

/// Elementwise sum of two equally shaped tensors (the "sum" fusion variant).
template <std::floating_point T>
TensorT<T> add_tensors(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "add");
    TensorT<T> out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

} // namespace lfnet
