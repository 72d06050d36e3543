#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lfnet/autograd.hpp"
#include "lfnet/image.hpp"
#include "lfnet/metrics.hpp"
#include "lfnet/model.hpp"
#include "lfnet/optim.hpp"
#include "lfnet/rng.hpp"

namespace lfnet {

/// Noise synthesis policy. Sigma lives on the 0-255 intensity scale and is
/// divided by 255 inside the kernels (images are [0,1] tensors).
struct NoiseMode {
    enum class Kind { fixed, uniform_range };
    Kind kind = Kind::fixed;
    double sigma_lo = 25.0;
    double sigma_hi = 25.0;

    static NoiseMode fixed(double sigma) {
        if (sigma < 0) throw ConfigError("noise sigma must be >= 0");
        return {Kind::fixed, sigma, sigma};
    }

    static NoiseMode uniform_range(double lo, double hi) {
        if (lo < 0 || hi < lo) throw ConfigError("noise range needs 0 <= lo <= hi");
        return {Kind::uniform_range, lo, hi};
    }

    /// Sigma for a single patch (drawn per patch in blind mode).
    double draw_sigma(Rng& rng) const {
        return kind == Kind::fixed ? sigma_lo : rng.uniform(sigma_lo, sigma_hi);
    }

    /// Single representative sigma, used for validation curves of blind runs.
    [[nodiscard]] double representative_sigma() const {
        return kind == Kind::fixed ? sigma_lo : 0.5 * (sigma_lo + sigma_hi);
    }

    [[nodiscard]] std::string str() const {
        if (kind == Kind::fixed) return "fixed sigma " + std::to_string(sigma_lo);
        return "blind sigma [" + std::to_string(sigma_lo) + ", " + std::to_string(sigma_hi) + "]";
    }
};

struct TrainConfig {
    NoiseMode noise = NoiseMode::fixed(25.0);
    int patch_size = 16;
    int pairs_per_epoch = 2048;
    int batch_size = 16;
    int epochs = 30;
    double lr_start = 1e-3;
    double lr_end = 1e-5;
    std::uint64_t seed = 1;
    bool augment = false;

    void validate() const {
        if (patch_size < 1) throw ConfigError("train config: patch_size must be >= 1");
        if (pairs_per_epoch < 0) throw ConfigError("train config: pairs_per_epoch must be >= 0");
        if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
        if (epochs < 0) throw ConfigError("train config: epochs must be >= 0");
        if (lr_start <= 0 || lr_end <= 0) throw ConfigError("train config: learning rates must be > 0");
    }
};

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0;
    std::optional<double> val_psnr_db;
};

using TrainHistory = std::vector<EpochRecord>;

/// Adds elementwise N(0, (sigma/255)^2) noise. No clipping: the residual
/// target must equal the added noise exactly.
template <std::floating_point T>
TensorT<T> add_gaussian_noise(const TensorT<T>& clean, double sigma_255, Rng& rng) {
    if (sigma_255 < 0) throw ConfigError("add_gaussian_noise: sigma must be >= 0");
    TensorT<T> noisy(clean.shape);
    const double scale = sigma_255 / 255.0;
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        noisy.data[i] = clean.data[i] + static_cast<T>(scale * rng.normal());
    }
    return noisy;
}

template <std::floating_point T>
struct TrainingPairT {
    TensorT<T> input;  // noisy patch
    TensorT<T> target; // the residual, i.e. exactly the sampled noise
};

using TrainingPair = TrainingPairT<float>;

/// Residual learning: input = clean + noise, target = noise. Under a blind
/// range the sigma is drawn uniformly per patch.
template <std::floating_point T>
TrainingPairT<T> make_training_pair(const TensorT<T>& clean_patch, const NoiseMode& mode,
                                    Rng& rng) {
    const double sigma = mode.draw_sigma(rng);
    TrainingPairT<T> pair;
    pair.input = add_gaussian_noise(clean_patch, sigma, rng);
    pair.target = TensorT<T>(clean_patch.shape);
    for (std::size_t i = 0; i < clean_patch.data.size(); ++i) {
        pair.target.data[i] = pair.input.data[i] - clean_patch.data[i];
    }
    return pair;
}

namespace detail {

/// The eight dihedral transforms of a square patch (identity, rotations,
/// flips), used for optional augmentation.
template <std::floating_point T>
TensorT<T> dihedral(const TensorT<T>& patch, int which) {
    const int h = patch.shape.h, w = patch.shape.w;
    TensorT<T> out(patch.shape.n, patch.shape.c,
                   (which % 2 == 1) ? w : h, (which % 2 == 1) ? h : w);
    for (int s = 0; s < patch.shape.n; ++s) {
        for (int c = 0; c < patch.shape.c; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    int ty = 0, tx = 0;
                    switch (which) {
                        case 0: ty = y; tx = x; break;                 // identity
                        case 1: ty = x; tx = h - 1 - y; break;         // rot90
                        case 2: ty = h - 1 - y; tx = w - 1 - x; break; // rot180
                        case 3: ty = w - 1 - x; tx = y; break;         // rot270
                        case 4: ty = y; tx = w - 1 - x; break;         // flip horizontal
                        case 5: ty = h - 1 - y; tx = x; break;         // flip vertical
                        case 6: ty = x; tx = y; break;                 // transpose
                        default: ty = w - 1 - x; tx = h - 1 - y; break; // anti-transpose
                    }
                    out.at(s, c, ty, tx) = patch.at(s, c, y, x);
                }
            }
        }
    }
    return out;
}

} // namespace detail

/// Draws `count` patches at uniformly random valid top-left positions from
/// uniformly chosen images. With `augment`, one of the eight dihedral
/// transforms is applied per patch.
template <std::floating_point T>
std::vector<TensorT<T>> sample_patches(const std::vector<NamedImageT<T>>& images,
                                       int patch_size, int count, Rng& rng,
                                       bool augment = false) {
    if (images.empty() && count > 0) throw ConfigError("sample_patches: no source images");
    for (const auto& image : images) {
        if (image.pixels.shape.h < patch_size || image.pixels.shape.w < patch_size) {
            throw ShapeError("sample_patches: image '" + image.name + "' (" +
                             std::to_string(image.pixels.shape.w) + "x" +
                             std::to_string(image.pixels.shape.h) +
                             ") is smaller than patch size " + std::to_string(patch_size));
        }
    }
    std::vector<TensorT<T>> patches;
    patches.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto& img = images[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(images.size()) - 1))].pixels;
        const int y0 = static_cast<int>(rng.uniform_int(0, img.shape.h - patch_size));
        const int x0 = static_cast<int>(rng.uniform_int(0, img.shape.w - patch_size));
        TensorT<T> patch(1, img.shape.c, patch_size, patch_size);
        for (int c = 0; c < img.shape.c; ++c) {
            for (int y = 0; y < patch_size; ++y) {
                const T* src = img.plane(0, c) +
                               static_cast<std::int64_t>(y0 + y) * img.shape.w + x0;
                std::copy(src, src + patch_size, patch.plane(0, c) +
                                                     static_cast<std::int64_t>(y) * patch_size);
            }
        }
        if (augment) {
            const int which = static_cast<int>(rng.uniform_int(0, 7));
            if (which != 0) patch = detail::dihedral(patch, which);
        }
        patches.push_back(std::move(patch));
    }
    return patches;
}

template <std::floating_point T>
struct MseResultT {
    double loss = 0;
    TensorT<T> grad;
};

/// Mean over all elements of (pred - target)^2, with its gradient
/// 2 (pred - target) / element_count.
template <std::floating_point T>
MseResultT<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    require_same_shape(pred, target, "mse_loss");
    MseResultT<T> result;
    result.grad = TensorT<T>(pred.shape);
    const double inv_count = 1.0 / static_cast<double>(pred.numel());
    double acc = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double diff = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
        acc += diff * diff;
        result.grad.data[i] = static_cast<T>(2.0 * diff * inv_count);
    }
    result.loss = acc * inv_count;
    return result;
}

namespace detail {

template <std::floating_point T>
TensorT<T> stack_batch(const std::vector<TrainingPairT<T>>& pairs, std::size_t lo,
                       std::size_t hi, bool inputs) {
    const Shape4 one = pairs[lo].input.shape;
    TensorT<T> out(static_cast<int>(hi - lo), one.c, one.h, one.w);
    const std::int64_t stride = one.numel();
    for (std::size_t i = lo; i < hi; ++i) {
        const TensorT<T>& src = inputs ? pairs[i].input : pairs[i].target;
        std::copy(src.data.begin(), src.data.end(),
                  out.data.begin() + static_cast<std::int64_t>(i - lo) * stride);
    }
    return out;
}

/// One optimization epoch over pre-sampled pairs; returns the sample-weighted
/// mean loss. Shared by train() and compare_training() so both see identical
/// data in identical order.
template <std::floating_point T>
double run_epoch(NetworkModelT<T>& model, AdamStateT<T>& adam,
                 const std::vector<TrainingPairT<T>>& pairs, int batch_size, double lr,
                 int epoch) {
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t lo = 0; lo < pairs.size(); lo += static_cast<std::size_t>(batch_size)) {
        const std::size_t hi = std::min(pairs.size(), lo + static_cast<std::size_t>(batch_size));
        const TensorT<T> inputs = stack_batch(pairs, lo, hi, true);
        const TensorT<T> targets = stack_batch(pairs, lo, hi, false);

        auto forward = forward_pass(model, inputs, Mode::train);
        MseResultT<T> mse = mse_loss(forward.output, targets);
        if (!std::isfinite(mse.loss)) {
            throw TrainingError("non-finite loss " + std::to_string(mse.loss) + " at epoch " +
                                std::to_string(epoch) + ", batch " +
                                std::to_string(lo / static_cast<std::size_t>(batch_size)));
        }
        const GradientSetT<T> grads = backward_pass(model, forward.trace, mse.grad);
        adam_step(model, grads, adam, static_cast<T>(lr));

        loss_sum += mse.loss * static_cast<double>(hi - lo);
        seen += hi - lo;
    }
    return seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
}

/// Mean validation PSNR of the denoised estimate against the clean images.
/// Noise per image is a pure function of (seed, image index), so the metric
/// is comparable across epochs.
template <std::floating_point T>
double validation_psnr(NetworkModelT<T>& model, const std::vector<NamedImageT<T>>& images,
                       double sigma, std::uint64_t seed) {
    double acc = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        Rng rng(derive_seed(seed, 0x7A10 + i));
        const TensorT<T> noisy = add_gaussian_noise(images[i].pixels, sigma, rng);
        const TensorT<T> residual = forward_pass(model, noisy, Mode::infer).output;
        TensorT<T> denoised(noisy.shape);
        for (std::size_t j = 0; j < noisy.data.size(); ++j) {
            denoised.data[j] = std::clamp(noisy.data[j] - residual.data[j], T(0), T(1));
        }
        acc += psnr(denoised, images[i].pixels);
    }
    return images.empty() ? 0.0 : acc / static_cast<double>(images.size());
}

template <std::floating_point T>
std::vector<TrainingPairT<T>> make_epoch_pairs(const std::vector<NamedImageT<T>>& images,
                                               const TrainConfig& config, Rng& rng) {
    std::vector<TrainingPairT<T>> pairs;
    pairs.reserve(static_cast<std::size_t>(config.pairs_per_epoch));
    std::vector<TensorT<T>> patches =
        sample_patches(images, config.patch_size, config.pairs_per_epoch, rng, config.augment);
    for (auto& patch : patches) {
        pairs.push_back(make_training_pair(patch, config.noise, rng));
    }
    return pairs;
}

} // namespace detail

/// The full residual-learning loop: per epoch, sample pairs, iterate
/// mini-batches (forward, MSE on the residual, backward, Adam at the
/// scheduled rate) and record history. Deterministic for a given seed.
/// Optional validation images add a per-epoch PSNR column at the noise
/// mode's representative sigma.
template <std::floating_point T>
TrainHistory train(NetworkModelT<T>& model, const std::vector<NamedImageT<T>>& images,
                   const TrainConfig& config,
                   const std::vector<NamedImageT<T>>* validation = nullptr) {
    config.validate();
    TrainHistory history;
    if (config.epochs == 0) return history;

    AdamStateT<T> adam = AdamStateT<T>::for_model(model);
    Rng rng(derive_seed(config.seed, 0xDA7A));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config.lr_start, config.lr_end, config.epochs, epoch);
        const auto pairs = detail::make_epoch_pairs(images, config, rng);
        EpochRecord record;
        record.epoch = epoch;
        record.mean_loss = detail::run_epoch(model, adam, pairs, config.batch_size, lr, epoch);
        if (validation && !validation->empty()) {
            record.val_psnr_db = detail::validation_psnr(
                model, *validation, config.noise.representative_sigma(), config.seed);
        }
        history.push_back(record);
    }
    return history;
}

/// Trains two networks under one shared data stream: pairs are sampled once
/// per epoch and fed to both models, so seed and data order are identical.
/// Used for the lattice-versus-plain comparison.
template <std::floating_point T>
std::pair<TrainHistory, TrainHistory> compare_training(
    NetworkModelT<T>& model_a, NetworkModelT<T>& model_b,
    const std::vector<NamedImageT<T>>& images, const TrainConfig& config,
    const std::vector<NamedImageT<T>>& validation) {
    config.validate();
    TrainHistory history_a, history_b;
    AdamStateT<T> adam_a = AdamStateT<T>::for_model(model_a);
    AdamStateT<T> adam_b = AdamStateT<T>::for_model(model_b);
    Rng rng(derive_seed(config.seed, 0xDA7A));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config.lr_start, config.lr_end, config.epochs, epoch);
        const auto pairs = detail::make_epoch_pairs(images, config, rng);

        EpochRecord rec_a{epoch, detail::run_epoch(model_a, adam_a, pairs, config.batch_size, lr, epoch), {}};
        EpochRecord rec_b{epoch, detail::run_epoch(model_b, adam_b, pairs, config.batch_size, lr, epoch), {}};
        if (!validation.empty()) {
            const double sigma = config.noise.representative_sigma();
            rec_a.val_psnr_db = detail::validation_psnr(model_a, validation, sigma, config.seed);
            rec_b.val_psnr_db = detail::validation_psnr(model_b, validation, sigma, config.seed);
        }
        history_a.push_back(rec_a);
        history_b.push_back(rec_b);
    }
    return {std::move(history_a), std::move(history_b)};
}

} // namespace lfnet
