// Writes a deterministic set of synthetic texture images (NetPBM), handy for
// demo training runs without an external dataset.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

#include "lfnet/image.hpp"
#include "lfnet/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synthetic texture dataset generator"};
    std::string out_dir;
    int count = 32;
    int size = 64;
    int channels = 1;
    std::uint64_t seed = 1;
    app.add_option("--out", out_dir, "Output directory")->required();
    app.add_option("--count", count, "Number of images")->check(CLI::PositiveNumber);
    app.add_option("--size", size, "Square image side length")->check(CLI::PositiveNumber);
    app.add_option("--channels", channels, "1 (gray .pgm) or 3 (color .ppm)")
        ->check(CLI::IsMember({1, 3}));
    app.add_option("--seed", seed, "Texture seed");
    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir);
        const auto images = lfnet::synthetic_texture_set<float>(seed, count, size, channels);
        const char* ext = channels == 1 ? ".pgm" : ".ppm";
        for (const auto& image : images) {
            const auto path = std::filesystem::path(out_dir) / (image.name + ext);
            lfnet::save_image(lfnet::tensor_to_image(image.pixels), path);
        }
        std::printf("wrote %zu images to %s\n", images.size(), out_dir.c_str());
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    }
    return 0;
}
