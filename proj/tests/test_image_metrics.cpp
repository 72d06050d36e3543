#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lfnet/image.hpp"
#include "lfnet/metrics.hpp"
#include "lfnet/rng.hpp"
#include "support/oracles.hpp"

using namespace lfnet;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("netpbm round trip", "[image]") {
    Rng rng(1);
    SECTION("P5 gray") {
        ImageBuffer img;
        img.width = 7;
        img.height = 5;
        img.channels = 1;
        img.samples.resize(img.expected_samples());
        for (auto& s : img.samples) s = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
        const auto path = temp_file("roundtrip.pgm");
        save_image(img, path);
        const ImageBuffer back = load_image(path);
        CHECK(back.width == 7);
        CHECK(back.height == 5);
        CHECK(back.channels == 1);
        CHECK(back.samples == img.samples);
        std::filesystem::remove(path);
    }
    SECTION("P6 color") {
        ImageBuffer img;
        img.width = 4;
        img.height = 6;
        img.channels = 3;
        img.samples.resize(img.expected_samples());
        for (auto& s : img.samples) s = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
        const auto path = temp_file("roundtrip.ppm");
        save_image(img, path);
        const ImageBuffer back = load_image(path);
        CHECK(back.channels == 3);
        CHECK(back.samples == img.samples);
        std::filesystem::remove(path);
    }
}

TEST_CASE("netpbm header parsing", "[image]") {
    const auto path = temp_file("header_cases.pgm");

    SECTION("minimal P5 header followed by raw bytes") {
        write_bytes(path, std::string("P5 2 2 255 ") + "\x01\x02\x03\x04");
        const ImageBuffer img = load_image(path);
        CHECK(img.width == 2);
        CHECK(img.height == 2);
        CHECK(img.samples == std::vector<std::uint8_t>{1, 2, 3, 4});
    }

    SECTION("comments are skipped") {
        write_bytes(path,
                    std::string("P5\n# a comment\n2 # inline\n1\n255\n") + std::string("\x09\x0a", 2));
        const ImageBuffer img = load_image(path);
        CHECK(img.width == 2);
        CHECK(img.height == 1);
        CHECK(img.samples[0] == 9);
        CHECK(img.samples[1] == 10);
    }

    SECTION("unsupported maxval") {
        write_bytes(path, "P5 2 2 65535 data");
        try {
            load_image(path);
            FAIL("expected maxval error");
        } catch (const FormatError& err) {
            CHECK(err.kind == FormatError::Kind::unsupported_maxval);
        }
    }

    SECTION("truncated payload") {
        write_bytes(path, std::string("P5 2 2 255 ") + "\x01\x02");
        try {
            load_image(path);
            FAIL("expected truncation error");
        } catch (const FormatError& err) {
            CHECK(err.kind == FormatError::Kind::truncated);
        }
    }

    SECTION("wrong magic") {
        write_bytes(path, "P3 2 2 255 1 2 3 4");
        try {
            load_image(path);
            FAIL("expected magic error");
        } catch (const FormatError& err) {
            CHECK(err.kind == FormatError::Kind::bad_magic);
        }
    }

    SECTION("malformed dimension") {
        write_bytes(path, "P5 two 2 255 ab");
        try {
            load_image(path);
            FAIL("expected header error");
        } catch (const FormatError& err) {
            CHECK(err.kind == FormatError::Kind::bad_header);
        }
    }

    std::filesystem::remove(path);
}

TEST_CASE("luma conversion uses ITU-R 601 weights", "[image]") {
    ImageBuffer rgb;
    rgb.width = 3;
    rgb.height = 1;
    rgb.channels = 3;
    rgb.samples = {255, 0, 0, /**/ 0, 255, 0, /**/ 0, 0, 255};
    const ImageBuffer gray = rgb_to_gray(rgb);
    REQUIRE(gray.channels == 1);
    CHECK(gray.samples[0] == 76);  // round(0.299 * 255)
    CHECK(gray.samples[1] == 150); // round(0.587 * 255)
    CHECK(gray.samples[2] == 29);  // round(0.114 * 255)
}

TEST_CASE("image/tensor conversion is lossless at 8 bits", "[image]") {
    Rng rng(2);
    ImageBuffer img;
    img.width = 9;
    img.height = 4;
    img.channels = 3;
    img.samples.resize(img.expected_samples());
    for (auto& s : img.samples) s = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    const Tensor t = image_to_tensor<float>(img);
    REQUIRE(t.shape == Shape4{1, 3, 4, 9});
    const ImageBuffer back = tensor_to_image(t);
    CHECK(back.samples == img.samples);
}

TEST_CASE("psnr closed forms", "[metrics]") {
    SECTION("identical inputs hit the +inf sentinel") {
        Tensor a(1, 1, 4, 4, 0.42f);
        CHECK(std::isinf(psnr(a, a)));
        CHECK(psnr(a, a) > 0);
    }

    SECTION("MSE 0.01 gives exactly 20 dB") {
        TensorD a(1, 1, 2, 2, 0.0);
        TensorD b(1, 1, 2, 2, 0.1); // squared error 0.01 everywhere
        CHECK(psnr(a, b) == Catch::Approx(20.0).margin(1e-9));
    }

    SECTION("uniform error of 16/255 on the [0,1] scale") {
        TensorD a(1, 1, 3, 3, 0.5);
        TensorD b(1, 1, 3, 3, 0.5 + 16.0 / 255.0);
        const double expected = 20.0 * std::log10(255.0 / 16.0);
        CHECK(psnr(a, b) == Catch::Approx(expected).margin(1e-9));
        CHECK(psnr(a, b) == Catch::Approx(24.048).margin(1e-3));
    }

    SECTION("shape mismatch is rejected") {
        CHECK_THROWS_AS(psnr(Tensor(1, 1, 2, 2), Tensor(1, 1, 2, 3)), ShapeError);
    }

    SECTION("invariant under a common pixel permutation") {
        Rng rng(3);
        const auto a = oracle::random_tensor<double>(rng, 1, 1, 4, 4);
        const auto b = oracle::random_tensor<double>(rng, 1, 1, 4, 4);
        TensorD ap = a, bp = b;
        std::reverse(ap.data.begin(), ap.data.end());
        std::reverse(bp.data.begin(), bp.data.end());
        CHECK(psnr(a, b) == Catch::Approx(psnr(ap, bp)).margin(1e-12));
    }
}

TEST_CASE("ssim reference cases", "[metrics]") {
    SECTION("identical inputs give exactly 1") {
        Rng rng(4);
        auto a = oracle::random_tensor<double>(rng, 1, 1, 16, 16, 0.2);
        for (double& v : a.data) v += 0.5;
        CHECK(ssim(a, a) == 1.0);
    }

    SECTION("constant images reduce to the luminance term") {
        TensorD a(1, 1, 16, 16, 0.5);
        TensorD b(1, 1, 16, 16, 0.6);
        const double c1 = 1e-4;
        const double expected = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
        CHECK(ssim(a, b) == Catch::Approx(expected).margin(1e-4));
        CHECK(expected == Catch::Approx(0.9836).margin(1e-4));
    }

    SECTION("symmetry") {
        Rng rng(5);
        for (int trial = 0; trial < 5; ++trial) {
            auto a = oracle::random_tensor<double>(rng, 1, 1, 14, 18, 0.1);
            auto b = oracle::random_tensor<double>(rng, 1, 1, 14, 18, 0.1);
            for (double& v : a.data) v += 0.5;
            for (double& v : b.data) v += 0.5;
            CHECK(ssim(a, b) == Catch::Approx(ssim(b, a)).margin(1e-12));
        }
    }

    SECTION("window larger than the image is rejected") {
        CHECK_THROWS_AS(ssim(TensorD(1, 1, 8, 8), TensorD(1, 1, 8, 8)), ShapeError);
    }

    SECTION("color images average the per-channel maps") {
        Rng rng(6);
        auto a = oracle::random_tensor<double>(rng, 1, 3, 12, 12, 0.1);
        for (double& v : a.data) v += 0.5;
        CHECK(ssim(a, a) == 1.0);
    }
}
