#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lfnet/error.hpp"
#include "lfnet/tensor.hpp"

namespace lfnet {

/// 8-bit raster in interleaved row-major order (NetPBM memory layout).
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 1; // 1 (P5) or 3 (P6)
    std::vector<std::uint8_t> samples;

    [[nodiscard]] std::size_t expected_samples() const {
        return static_cast<std::size_t>(width) * height * channels;
    }
};

namespace detail {

/// Reads one whitespace-delimited header token, skipping '#' comments. The
/// single whitespace byte that terminates the token is consumed, matching the
/// header/payload boundary rule.
inline std::string pnm_token(std::istream& in) {
    std::string token;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
            continue;
        }
        if (std::isspace(ch)) {
            if (!token.empty()) return token;
            continue;
        }
        token.push_back(static_cast<char>(ch));
    }
    return token;
}

} // namespace detail

/// Loads a binary NetPBM image: P5 (gray) or P6 (color), maxval 255.
inline ImageBuffer load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file " + path.string());

    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
        throw FormatError(FormatError::Kind::bad_magic,
                          path.string() + ": not a binary P5/P6 NetPBM file");
    }
    ImageBuffer img;
    img.channels = (magic[1] == '5') ? 1 : 3;

    auto parse_int = [&](const char* what) {
        const std::string token = detail::pnm_token(in);
        if (token.empty() || !std::all_of(token.begin(), token.end(),
                                          [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            throw FormatError(FormatError::Kind::bad_header,
                              path.string() + ": malformed " + std::string(what) + " field");
        }
        return std::stoi(token);
    };
    img.width = parse_int("width");
    img.height = parse_int("height");
    const int maxval = parse_int("maxval");
    if (img.width < 1 || img.height < 1) {
        throw FormatError(FormatError::Kind::bad_header,
                          path.string() + ": non-positive image dimensions");
    }
    if (maxval != 255) {
        throw FormatError(FormatError::Kind::unsupported_maxval,
                          path.string() + ": maxval " + std::to_string(maxval) +
                              " unsupported (only 255)");
    }
    // The header ends with exactly one whitespace byte, already consumed by
    // the tokenizer's terminating isspace.
    img.samples.resize(img.expected_samples());
    in.read(reinterpret_cast<char*>(img.samples.data()),
            static_cast<std::streamsize>(img.samples.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.samples.size()) {
        throw FormatError(FormatError::Kind::truncated,
                          path.string() + ": payload truncated (" + std::to_string(in.gcount()) +
                              " of " + std::to_string(img.samples.size()) + " bytes)");
    }
    return img;
}

inline void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
    if (img.channels != 1 && img.channels != 3) {
        throw FormatError(FormatError::Kind::bad_header,
                          "save_image: channel count must be 1 or 3");
    }
    if (img.samples.size() != img.expected_samples()) {
        throw ShapeError("save_image: sample count does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.samples.data()),
              static_cast<std::streamsize>(img.samples.size()));
    if (!out) throw IoError("short write to " + path.string());
}

/// ITU-R 601 luma conversion of a color buffer (rounded to 8-bit).
inline ImageBuffer rgb_to_gray(const ImageBuffer& img) {
    if (img.channels == 1) return img;
    ImageBuffer gray;
    gray.width = img.width;
    gray.height = img.height;
    gray.channels = 1;
    gray.samples.resize(gray.expected_samples());
    for (std::size_t i = 0; i < gray.samples.size(); ++i) {
        const double r = img.samples[3 * i + 0];
        const double g = img.samples[3 * i + 1];
        const double b = img.samples[3 * i + 2];
        gray.samples[i] = static_cast<std::uint8_t>(
            std::lround(std::clamp(0.299 * r + 0.587 * g + 0.114 * b, 0.0, 255.0)));
    }
    return gray;
}

/// [0,1] tensor (1,C,H,W) from 8-bit samples.
template <std::floating_point T = float>
TensorT<T> image_to_tensor(const ImageBuffer& img) {
    TensorT<T> out(1, img.channels, img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                out.at(0, c, y, x) = static_cast<T>(
                    img.samples[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] /
                    T(255));
            }
        }
    }
    return out;
}

/// 8-bit buffer from a [0,1] tensor (values clipped, then rounded).
template <std::floating_point T>
ImageBuffer tensor_to_image(const TensorT<T>& t) {
    if (t.shape.n != 1 || (t.shape.c != 1 && t.shape.c != 3)) {
        throw ShapeError("tensor_to_image: need shape (1, 1|3, H, W), got " + t.shape.str());
    }
    ImageBuffer img;
    img.width = t.shape.w;
    img.height = t.shape.h;
    img.channels = t.shape.c;
    img.samples.resize(img.expected_samples());
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                const double v = std::clamp(static_cast<double>(t.at(0, c, y, x)), 0.0, 1.0);
                img.samples[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return img;
}

template <std::floating_point T>
struct NamedImageT {
    std::string name;
    TensorT<T> pixels; // (1, C, H, W) in [0,1]
};

using NamedImage = NamedImageT<float>;

/// Loads every .pgm/.ppm file of a directory in sorted filename order.
template <std::floating_point T = float>
std::vector<NamedImageT<T>> load_image_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<NamedImageT<T>> images;
    images.reserve(files.size());
    for (const auto& file : files) {
        images.push_back({file.filename().string(), image_to_tensor<T>(load_image(file))});
    }
    return images;
}

} // namespace lfnet
