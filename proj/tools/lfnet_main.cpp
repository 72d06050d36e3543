// Command-line surface of the lattice fusion network engine: analyze a
// topology, train a denoiser, denoise an image, evaluate a dataset, or run
// the lattice-versus-plain training comparison.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "lfnet/lfnet.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct SpecOptions {
    int rows = 4;
    int cols = 5;
    int channels = 1;
    int filters = 32;
    int kernel = 3;
    std::string fusion = "concat";

    [[nodiscard]] lfnet::LatticeSpec to_spec() const {
        lfnet::LatticeSpec spec;
        spec.rows = rows;
        spec.cols = cols;
        spec.in_channels = channels;
        spec.filters_per_node = filters;
        spec.kernel_size = kernel;
        spec.fusion = fusion == "sum" ? lfnet::FusionMode::sum : lfnet::FusionMode::concat;
        return spec;
    }
};

struct TrainOptions {
    SpecOptions spec;
    std::string images_dir;
    std::string val_dir;
    std::string model_path;
    std::string history_path;
    std::string profile;
    double sigma = 25.0;
    std::vector<double> blind;
    int patch = 16;
    int pairs = 2048;
    int batch = 16;
    int epochs = 30;
    double lr_start = 1e-3;
    double lr_end = 1e-5;
    std::uint64_t seed = 1;
    bool augment = false;
};

void add_spec_flags(CLI::App* cmd, SpecOptions& spec) {
    cmd->add_option("--rows", spec.rows, "Lattice rows");
    cmd->add_option("--cols", spec.cols, "Lattice columns");
    cmd->add_option("--channels", spec.channels, "Image channels (1 gray, 3 color)")
        ->check(CLI::IsMember({1, 3}));
    cmd->add_option("--filters", spec.filters, "Filters per node");
    cmd->add_option("--kernel", spec.kernel, "Convolution kernel size (odd)");
    cmd->add_option("--fusion", spec.fusion, "Fusion at two-input nodes")
        ->check(CLI::IsMember({"concat", "sum"}));
}

void add_train_flags(CLI::App* cmd, TrainOptions& opts) {
    add_spec_flags(cmd, opts.spec);
    cmd->add_option("--images", opts.images_dir, "Directory of clean training images")
        ->required();
    cmd->add_option("--val", opts.val_dir, "Directory of validation images (adds a PSNR column)");
    cmd->add_option("--sigma", opts.sigma, "Fixed training noise level on the 0-255 scale");
    cmd->add_option("--blind", opts.blind, "Blind training range LO HI on the 0-255 scale")
        ->expected(2);
    cmd->add_option("--patch", opts.patch, "Patch side length");
    cmd->add_option("--pairs", opts.pairs, "Noisy/residual pairs per epoch");
    cmd->add_option("--batch", opts.batch, "Mini-batch size");
    cmd->add_option("--epochs", opts.epochs, "Training epochs");
    cmd->add_option("--lr-start", opts.lr_start, "Initial learning rate");
    cmd->add_option("--lr-end", opts.lr_end, "Final learning rate");
    cmd->add_option("--seed", opts.seed, "Master seed (init, sampling, noise)");
    cmd->add_flag("--augment", opts.augment, "Apply the eight dihedral transforms per patch");
    cmd->add_option("--profile", opts.profile,
                    "Named paper-scale preset (applied before other flags): "
                    "lfnet-4-5-gray-s15|s25|s50, lfnet-4-6-gray-s15|s25|s50, "
                    "lfnet-4-10-color-blind");
}

/// Paper-scale presets; explicit flags still win because profiles only
/// replace values the user left at their defaults.
void apply_profile(TrainOptions& opts, const CLI::App* cmd) {
    if (opts.profile.empty()) return;
    auto defaulted = [&](const std::string& flag) { return cmd->count(flag) == 0; };
    auto set_spec = [&](int rows, int cols, int channels, int patch) {
        if (defaulted("--rows")) opts.spec.rows = rows;
        if (defaulted("--cols")) opts.spec.cols = cols;
        if (defaulted("--channels")) opts.spec.channels = channels;
        if (defaulted("--patch")) opts.patch = patch;
        if (defaulted("--batch")) opts.batch = 128;
        if (defaulted("--lr-start")) opts.lr_start = 1e-3;
        if (defaulted("--lr-end")) opts.lr_end = 1e-5;
    };
    const std::string& p = opts.profile;
    double sigma = 25.0;
    if (p.ends_with("-s15")) sigma = 15.0;
    if (p.ends_with("-s50")) sigma = 50.0;
    if (p.starts_with("lfnet-4-5-gray")) {
        set_spec(4, 5, 1, 50);
        if (defaulted("--pairs")) opts.pairs = 128 * 1600;
        if (defaulted("--epochs")) opts.epochs = 50;
        if (defaulted("--sigma")) opts.sigma = sigma;
    } else if (p.starts_with("lfnet-4-6-gray")) {
        set_spec(4, 6, 1, 60);
        if (defaulted("--pairs")) opts.pairs = 128 * 1600;
        if (defaulted("--epochs")) opts.epochs = 50;
        if (defaulted("--sigma")) opts.sigma = sigma;
    } else if (p == "lfnet-4-10-color-blind") {
        set_spec(4, 10, 3, 90);
        if (defaulted("--pairs")) opts.pairs = 128 * 3000;
        if (defaulted("--epochs")) opts.epochs = 40;
        if (opts.blind.empty()) opts.blind = {0.0, 55.0};
    } else {
        throw lfnet::ConfigError("unknown profile '" + p + "'");
    }
}

lfnet::TrainConfig to_train_config(const TrainOptions& opts) {
    lfnet::TrainConfig config;
    config.noise = opts.blind.empty()
                       ? lfnet::NoiseMode::fixed(opts.sigma)
                       : lfnet::NoiseMode::uniform_range(opts.blind[0], opts.blind[1]);
    config.patch_size = opts.patch;
    config.pairs_per_epoch = opts.pairs;
    config.batch_size = opts.batch;
    config.epochs = opts.epochs;
    config.lr_start = opts.lr_start;
    config.lr_end = opts.lr_end;
    config.seed = opts.seed;
    config.augment = opts.augment;
    config.validate();
    return config;
}

std::vector<lfnet::NamedImage> load_dataset(const std::string& dir, int channels) {
    auto images = lfnet::load_image_directory<float>(dir);
    if (images.empty()) throw lfnet::IoError("no .pgm/.ppm images in " + dir);
    for (const auto& image : images) {
        if (image.pixels.shape.c != channels) {
            throw lfnet::ShapeError("image '" + image.name + "' has " +
                                    std::to_string(image.pixels.shape.c) +
                                    " channels, expected " + std::to_string(channels));
        }
    }
    return images;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw lfnet::IoError("cannot write " + path);
    out << text;
}

int cmd_analyze(const SpecOptions& spec_opts, bool as_json, const std::string& edges_path,
                const std::string& adjacency_path) {
    const lfnet::LatticeSpec spec = spec_opts.to_spec();
    const lfnet::NetworkTopology topo = lfnet::build_lattice(spec);
    const lfnet::GraphAnalysis analysis = lfnet::analyze_topology(topo);

    if (!edges_path.empty()) write_text_file(edges_path, lfnet::format_edge_list(topo));
    if (!adjacency_path.empty()) write_text_file(adjacency_path, lfnet::format_adjacency(topo));

    if (as_json) {
        json out;
        out["rows"] = spec.rows;
        out["cols"] = spec.cols;
        out["channels"] = spec.in_channels;
        out["filters"] = spec.filters_per_node;
        out["kernel"] = spec.kernel_size;
        out["fusion"] = lfnet::to_string(spec.fusion);
        out["min_depth_with_output"] = analysis.min_depth_with_output;
        out["max_depth_with_output"] = analysis.max_depth_with_output;
        out["min_depth_without_output"] = analysis.min_depth_without_output;
        out["max_depth_without_output"] = analysis.max_depth_without_output;
        out["max_in_degree"] = analysis.max_in_degree;
        out["max_out_degree"] = analysis.max_out_degree;
        out["total_parameters"] = analysis.total_parameters;
        out["receptive_field"] = analysis.receptive_field_side;
        json distances = json::array();
        json params = json::array();
        for (const lfnet::NodeInfo& node : topo.nodes) {
            if (node.id != topo.output_node) {
                distances.push_back({{"node", node.name()},
                                     {"distance", analysis.distance_to_output[static_cast<std::size_t>(node.id)]}});
            }
            params.push_back(
                {{"node", node.name()},
                 {"parameters",
                  analysis.parameter_breakdown.per_node[static_cast<std::size_t>(node.id)].count}});
        }
        out["distance_to_output"] = distances;
        out["parameters_per_node"] = params;
        std::cout << out.dump(2) << "\n";
        return 0;
    }

    std::printf("lattice %dx%d, %d channel(s), %d filters/node, kernel %d, fusion %s\n",
                spec.rows, spec.cols, spec.in_channels, spec.filters_per_node,
                spec.kernel_size, lfnet::to_string(spec.fusion));
    std::printf("depth (with output layer):    min %d  max %d\n",
                analysis.min_depth_with_output, analysis.max_depth_with_output);
    std::printf("depth (without output layer): min %d  max %d\n",
                analysis.min_depth_without_output, analysis.max_depth_without_output);
    std::printf("degrees: max in %d, max out %d\n", analysis.max_in_degree,
                analysis.max_out_degree);
    std::printf("parameters: %lld\n", static_cast<long long>(analysis.total_parameters));
    std::printf("receptive field: %dx%d\n", analysis.receptive_field_side,
                analysis.receptive_field_side);
    std::printf("distance to output per node:\n");
    for (const lfnet::NodeInfo& node : topo.nodes) {
        if (node.id == topo.output_node) continue;
        std::printf("  %-8s %d\n", node.name().c_str(),
                    analysis.distance_to_output[static_cast<std::size_t>(node.id)]);
    }
    return 0;
}

int cmd_train(const TrainOptions& opts) {
    const lfnet::LatticeSpec spec = opts.spec.to_spec();
    const lfnet::TrainConfig config = to_train_config(opts);
    const auto images = load_dataset(opts.images_dir, spec.in_channels);
    std::vector<lfnet::NamedImage> val_images;
    if (!opts.val_dir.empty()) val_images = load_dataset(opts.val_dir, spec.in_channels);

    auto model = lfnet::initialize_model<float>(lfnet::build_lattice(spec), config.seed);
    std::fprintf(stderr, "training lattice %dx%d (%lld parameters) on %zu images, %s\n",
                 spec.rows, spec.cols,
                 static_cast<long long>(lfnet::count_model_parameters(model)), images.size(),
                 config.noise.str().c_str());

    const lfnet::TrainHistory history =
        lfnet::train(model, images, config, val_images.empty() ? nullptr : &val_images);
    for (const lfnet::EpochRecord& record : history) {
        std::fprintf(stderr, "epoch %3d  loss %.6e%s\n", record.epoch, record.mean_loss,
                     record.val_psnr_db
                         ? ("  val " + lfnet::detail::format_db(*record.val_psnr_db) + " dB").c_str()
                         : "");
    }

    lfnet::save_model(model, opts.model_path);
    const std::string history_path =
        opts.history_path.empty()
            ? (fs::path(opts.model_path).parent_path() / "history.csv").string()
            : opts.history_path;
    std::ofstream history_out(history_path);
    if (!history_out) throw lfnet::IoError("cannot write " + history_path);
    lfnet::write_history_csv(history, history_out);
    std::fprintf(stderr, "wrote %s and %s\n", opts.model_path.c_str(), history_path.c_str());
    return 0;
}

int cmd_denoise(const std::string& model_path, const std::string& input_path,
                const std::string& output_path, std::optional<double> sigma,
                std::uint64_t seed) {
    const lfnet::NetworkModel model = lfnet::load_model(model_path);
    const lfnet::Tensor clean = lfnet::image_to_tensor<float>(lfnet::load_image(input_path));

    lfnet::Tensor noisy = clean;
    if (sigma.has_value()) {
        lfnet::Rng rng(lfnet::derive_seed(seed, 0xD0));
        noisy = lfnet::add_gaussian_noise(clean, *sigma, rng);
    }
    const lfnet::Tensor denoised = lfnet::denoise_image(model, noisy);
    lfnet::save_image(lfnet::tensor_to_image(denoised), output_path);

    if (sigma.has_value()) {
        std::printf("sigma %.1f: noisy %s dB, denoised %s dB\n", *sigma,
                    lfnet::detail::format_db(lfnet::psnr(noisy, clean)).c_str(),
                    lfnet::detail::format_db(lfnet::psnr(denoised, clean)).c_str());
    }
    std::fprintf(stderr, "wrote %s\n", output_path.c_str());
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& images_dir, double sigma,
             std::uint64_t seed, const std::string& report_path) {
    const lfnet::NetworkModel model = lfnet::load_model(model_path);
    const auto images = load_dataset(images_dir, model.topology.image_channels);
    const lfnet::EvalReport report = lfnet::evaluate_dataset(
        model, images, lfnet::NoiseMode::fixed(sigma), seed, fs::path(model_path).filename());

    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw lfnet::IoError("cannot write " + report_path);
        lfnet::write_eval_csv(report, out);
    }
    std::fputs(lfnet::format_eval_table(report).c_str(), stdout);
    std::printf("mean PSNR %s dB, mean SSIM %s (sigma %.1f, %zu images)\n",
                lfnet::detail::format_db(report.mean_psnr_db).c_str(),
                lfnet::detail::format_ssim(report.mean_ssim).c_str(), report.sigma,
                report.entries.size());
    return 0;
}

int cmd_compare(const TrainOptions& opts, int plain_layers, int plain_wide,
                const std::string& out_csv) {
    const lfnet::LatticeSpec spec = opts.spec.to_spec();
    const lfnet::TrainConfig config = to_train_config(opts);
    const auto images = load_dataset(opts.images_dir, spec.in_channels);
    if (opts.val_dir.empty()) throw lfnet::ConfigError("compare needs --val for PSNR curves");
    const auto val_images = load_dataset(opts.val_dir, spec.in_channels);

    const lfnet::NetworkTopology lattice = lfnet::build_lattice(spec);
    const std::int64_t reference = lfnet::count_parameters(lattice).total;
    if (plain_layers <= 0) plain_layers = spec.rows * spec.cols + 1;
    if (plain_wide < 0) {
        plain_wide = lfnet::plain_wide_prefix_for(plain_layers, reference, spec.in_channels,
                                                  spec.filters_per_node, 2 * spec.filters_per_node,
                                                  spec.kernel_size);
    }
    const lfnet::NetworkTopology plain =
        lfnet::build_plain(plain_layers, plain_wide, spec.in_channels, spec.filters_per_node,
                           2 * spec.filters_per_node, spec.kernel_size);

    auto lattice_model = lfnet::initialize_model<float>(lattice, config.seed);
    auto plain_model = lfnet::initialize_model<float>(plain, config.seed);
    std::printf("lattice %dx%d: %lld parameters\n", spec.rows, spec.cols,
                static_cast<long long>(reference));
    std::printf("plain %d layers (wide prefix %d): %lld parameters\n", plain_layers, plain_wide,
                static_cast<long long>(lfnet::count_parameters(plain).total));

    const auto [hist_lattice, hist_plain] =
        lfnet::compare_training(lattice_model, plain_model, images, config, val_images);

    std::ofstream out(out_csv);
    if (!out) throw lfnet::IoError("cannot write " + out_csv);
    out << "epoch,lfnet_psnr,plain_psnr\n";
    for (std::size_t i = 0; i < hist_lattice.size(); ++i) {
        out << hist_lattice[i].epoch << ','
            << lfnet::detail::format_db(hist_lattice[i].val_psnr_db.value_or(0)) << ','
            << lfnet::detail::format_db(hist_plain[i].val_psnr_db.value_or(0)) << '\n';
        std::fprintf(stderr, "epoch %3zu  lfnet %s dB  plain %s dB\n", i,
                     lfnet::detail::format_db(hist_lattice[i].val_psnr_db.value_or(0)).c_str(),
                     lfnet::detail::format_db(hist_plain[i].val_psnr_db.value_or(0)).c_str());
    }
    std::fprintf(stderr, "wrote %s\n", out_csv.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    lfnet::pin_blas_threads();

    CLI::App app{"Lattice fusion network engine for image denoising"};
    app.require_subcommand(1);
    bool deterministic = false;
    app.add_flag("--deterministic", deterministic,
                 "Force fully sequential execution (the engine is sequential by "
                 "construction; this also pins BLAS to one thread)");

    // analyze
    SpecOptions analyze_spec;
    bool analyze_json = false;
    std::string edges_path, adjacency_path;
    CLI::App* analyze = app.add_subcommand("analyze", "Structural report for a lattice");
    add_spec_flags(analyze, analyze_spec);
    analyze->add_flag("--json", analyze_json, "Emit the report as JSON");
    analyze->add_option("--edges", edges_path, "Write an edge-per-line graph file");
    analyze->add_option("--adjacency", adjacency_path, "Write a plain-text adjacency listing");

    // train
    TrainOptions train_opts;
    CLI::App* train = app.add_subcommand("train", "Train a denoising model");
    add_train_flags(train, train_opts);
    train->add_option("--model", train_opts.model_path, "Output model file")->required();
    train->add_option("--history", train_opts.history_path,
                      "History CSV path (default: history.csv next to the model)");
    train->set_config("--config", "", "Flat key=value config file (flags win)");

    // denoise
    std::string den_model, den_input, den_output;
    double den_sigma = -1.0;
    std::uint64_t den_seed = 1;
    CLI::App* denoise = app.add_subcommand("denoise", "Denoise one NetPBM image");
    denoise->add_option("--model", den_model, "Model file")->required();
    denoise->add_option("--input", den_input, "Input image (.pgm/.ppm)")->required();
    denoise->add_option("--output", den_output, "Output image")->required();
    denoise->add_option("--sigma", den_sigma,
                        "Demo mode: add noise at this sigma first and report PSNR");
    denoise->add_option("--seed", den_seed, "Noise seed for demo mode");

    // eval
    std::string eval_model, eval_images, eval_report;
    double eval_sigma = -1.0;
    std::uint64_t eval_seed = 1;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a model over a dataset");
    eval->add_option("--model", eval_model, "Model file")->required();
    eval->add_option("--images", eval_images, "Directory of clean test images")->required();
    eval->add_option("--sigma", eval_sigma,
                     "Test noise level on the 0-255 scale (always explicit; blind "
                     "models are scored per level)")
        ->required();
    eval->add_option("--seed", eval_seed, "Test noise seed");
    eval->add_option("--report", eval_report, "Write the per-image CSV here");

    // compare
    TrainOptions cmp_opts;
    int cmp_plain_layers = 0; // 0 = equal total depth
    int cmp_plain_wide = -1;  // -1 = auto parameter match
    std::string cmp_out = "compare.csv";
    CLI::App* compare =
        app.add_subcommand("compare", "Train a lattice and a matched plain chain side by side");
    add_train_flags(compare, cmp_opts);
    compare->add_option("--plain-layers", cmp_plain_layers,
                        "Plain chain total layers (default: lattice max depth)");
    compare->add_option("--plain-wide", cmp_plain_wide,
                        "Wide 64-filter prefix length (default: smallest parameter match)");
    compare->add_option("--out", cmp_out, "Two-column PSNR curve CSV");
    compare->set_config("--config", "", "Flat key=value config file (flags win)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze) {
            return cmd_analyze(analyze_spec, analyze_json, edges_path, adjacency_path);
        }
        if (*train) {
            apply_profile(train_opts, train);
            return cmd_train(train_opts);
        }
        if (*denoise) {
            return cmd_denoise(den_model, den_input, den_output,
                               den_sigma >= 0 ? std::optional<double>(den_sigma) : std::nullopt,
                               den_seed);
        }
        if (*eval) {
            return cmd_eval(eval_model, eval_images, eval_sigma, eval_seed, eval_report);
        }
        if (*compare) {
            apply_profile(cmp_opts, compare);
            return cmd_compare(cmp_opts, cmp_plain_layers, cmp_plain_wide, cmp_out);
        }
    } catch (const lfnet::ConfigError& err) {
        std::fprintf(stderr, "config error: %s\n", err.what());
        return 1;
    } catch (const lfnet::TrainingError& err) {
        std::fprintf(stderr, "training aborted: %s\n", err.what());
        return 3;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    }
    return 0;
}
