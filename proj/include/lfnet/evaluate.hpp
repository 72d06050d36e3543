#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "lfnet/autograd.hpp"
#include "lfnet/image.hpp"
#include "lfnet/metrics.hpp"
#include "lfnet/model.hpp"
#include "lfnet/training.hpp"

namespace lfnet {

/// The raw residual estimate R(noisy) from an inference-mode forward pass.
template <std::floating_point T>
TensorT<T> denoise_residual(const NetworkModelT<T>& model, const TensorT<T>& noisy) {
    return forward_infer(model, noisy);
}

/// clip(noisy - R(noisy), 0, 1). Clipping is applied for metrics and storage
/// only; the unclipped estimate is noisy - denoise_residual(...).
template <std::floating_point T>
TensorT<T> denoise_image(const NetworkModelT<T>& model, const TensorT<T>& noisy) {
    const TensorT<T> residual = denoise_residual(model, noisy);
    TensorT<T> out(noisy.shape);
    for (std::size_t i = 0; i < noisy.data.size(); ++i) {
        out.data[i] = std::clamp(noisy.data[i] - residual.data[i], T(0), T(1));
    }
    return out;
}

struct EvalEntry {
    std::string name;
    double psnr_db = 0;
    double ssim = 0;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    double mean_psnr_db = 0;
    double mean_ssim = 0;
    double sigma = 0;
    std::string model_id;
};

/// Per image: add seeded Gaussian noise, denoise, score PSNR/SSIM against the
/// clean original. Each image's noise stream is derived from (seed, index),
/// so results are reproducible and order-independent. Evaluation always runs
/// at one fixed sigma (blind models are tested per noise level).
template <std::floating_point T>
EvalReport evaluate_dataset(const NetworkModelT<T>& model,
                            const std::vector<NamedImageT<T>>& images, const NoiseMode& noise,
                            std::uint64_t seed, std::string model_id = {}) {
    if (images.empty()) throw ConfigError("evaluate_dataset: empty dataset");
    if (noise.kind != NoiseMode::Kind::fixed) {
        throw ConfigError("evaluate_dataset: evaluation needs an explicit fixed sigma "
                          "(blind models are scored per noise level)");
    }
    EvalReport report;
    report.sigma = noise.sigma_lo;
    report.model_id = std::move(model_id);
    double psnr_acc = 0, ssim_acc = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        Rng rng(derive_seed(seed, 0xE7A1 + i));
        const TensorT<T> noisy = add_gaussian_noise(images[i].pixels, report.sigma, rng);
        const TensorT<T> denoised = denoise_image(model, noisy);
        EvalEntry entry;
        entry.name = images[i].name;
        entry.psnr_db = psnr(denoised, images[i].pixels);
        entry.ssim = ssim(denoised, images[i].pixels);
        psnr_acc += entry.psnr_db;
        ssim_acc += entry.ssim;
        report.entries.push_back(std::move(entry));
    }
    report.mean_psnr_db = psnr_acc / static_cast<double>(images.size());
    report.mean_ssim = ssim_acc / static_cast<double>(images.size());
    return report;
}

namespace detail {

inline std::string format_db(double value) {
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.4f", value);
    return buffer;
}

inline std::string format_ssim(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.6f", value);
    return buffer;
}

} // namespace detail

inline void write_eval_csv(const EvalReport& report, std::ostream& out) {
    out << "image,psnr_db,ssim\n";
    for (const EvalEntry& entry : report.entries) {
        out << entry.name << ',' << detail::format_db(entry.psnr_db) << ','
            << detail::format_ssim(entry.ssim) << '\n';
    }
}

inline std::string format_eval_table(const EvalReport& report) {
    std::string out;
    out += "image                     psnr_db      ssim\n";
    for (const EvalEntry& entry : report.entries) {
        char line[96];
        std::snprintf(line, sizeof(line), "%-24s %8s  %8s\n", entry.name.c_str(),
                      detail::format_db(entry.psnr_db).c_str(),
                      detail::format_ssim(entry.ssim).c_str());
        out += line;
    }
    char mean[96];
    std::snprintf(mean, sizeof(mean), "%-24s %8s  %8s\n", "mean",
                  detail::format_db(report.mean_psnr_db).c_str(),
                  detail::format_ssim(report.mean_ssim).c_str());
    out += mean;
    return out;
}

/// History CSV: `epoch,mean_loss,val_psnr_db` (empty last column when no
/// validation set was given).
inline void write_history_csv(const TrainHistory& history, std::ostream& out) {
    out << "epoch,mean_loss,val_psnr_db\n";
    for (const EpochRecord& record : history) {
        char loss[32];
        std::snprintf(loss, sizeof(loss), "%.8e", record.mean_loss);
        out << record.epoch << ',' << loss << ',';
        if (record.val_psnr_db.has_value()) out << detail::format_db(*record.val_psnr_db);
        out << '\n';
    }
}

} // namespace lfnet
