#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lfnet/evaluate.hpp"
#include "lfnet/lattice.hpp"
#include "lfnet/model.hpp"
#include "lfnet/optim.hpp"
#include "lfnet/serialize.hpp"
#include "lfnet/synthetic.hpp"
#include "lfnet/training.hpp"
#include "support/oracles.hpp"

using namespace lfnet;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

template <std::floating_point T>
bool models_identical(const NetworkModelT<T>& a, const NetworkModelT<T>& b) {
    bool same = true;
    for_each_parameter(a, [&](ParamId id, std::span<const T> values) {
        const auto other = [&]() -> std::span<const T> {
            const NodeParamsT<T>& node = b.nodes[static_cast<std::size_t>(id.node)];
            switch (id.role) {
                case ParamRole::conv_weight: return {node.conv.weights.data};
                case ParamRole::conv_bias: return {node.conv.bias};
                case ParamRole::bn_gamma: return {node.bn.gamma};
                default: return {node.bn.beta};
            }
        }();
        for (std::size_t i = 0; i < values.size(); ++i) {
            same = same && values[i] == other[i];
        }
    });
    for (std::size_t n = 0; n < a.nodes.size(); ++n) {
        if (!a.nodes[n].has_bn) continue;
        same = same && a.nodes[n].bn.running_mean == b.nodes[n].bn.running_mean &&
               a.nodes[n].bn.running_var == b.nodes[n].bn.running_var;
    }
    return same;
}

} // namespace

TEST_CASE("gaussian noise synthesis", "[training][noise]") {
    SECTION("sigma zero leaves the image untouched") {
        Rng rng(1);
        Tensor clean(1, 1, 8, 8, 0.5f);
        const Tensor noisy = add_gaussian_noise(clean, 0.0, rng);
        CHECK(noisy.data == clean.data);
    }

    SECTION("sample statistics match sigma 25 on the 0-255 scale") {
        Rng rng(2);
        TensorD clean(1, 1, 400, 250); // 1e5 samples
        const TensorD noisy = add_gaussian_noise(clean, 25.0, rng);
        double mean = 0;
        for (double v : noisy.data) mean += v;
        mean /= static_cast<double>(noisy.data.size());
        double var = 0;
        for (double v : noisy.data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(noisy.data.size());
        CHECK(std::abs(mean) < 0.001);
        const double sigma = std::sqrt(var) * 255.0;
        CHECK(sigma > 25.0 * 0.98);
        CHECK(sigma < 25.0 * 1.02);
    }

    SECTION("same seed reproduces the same field") {
        Tensor clean(1, 1, 16, 16, 0.25f);
        Rng a(77), b(77);
        CHECK(add_gaussian_noise(clean, 30.0, a).data ==
              add_gaussian_noise(clean, 30.0, b).data);
    }
}

TEST_CASE("training pairs carry the exact residual", "[training][noise]") {
    Rng texture_rng(3);
    const Tensor clean = synthetic_texture<float>(texture_rng, 24);

    SECTION("sigma zero gives an all-zero target") {
        Rng rng(4);
        const auto pair = make_training_pair(clean, NoiseMode::fixed(0.0), rng);
        for (float v : pair.target.data) CHECK(v == 0.0f);
    }

    SECTION("input minus target reconstructs the clean patch") {
        Rng rng(5);
        const auto pair = make_training_pair(clean, NoiseMode::fixed(25.0), rng);
        for (std::size_t i = 0; i < clean.data.size(); ++i) {
            CHECK(std::abs((pair.input.data[i] - pair.target.data[i]) - clean.data[i]) <=
                  1e-7f);
        }
    }

    SECTION("blind sigma draws are uniform over the range") {
        Rng rng(6);
        const NoiseMode blind = NoiseMode::uniform_range(0.0, 55.0);
        std::vector<int> bins(10, 0);
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) {
            const double sigma = blind.draw_sigma(rng);
            REQUIRE(sigma >= 0.0);
            REQUIRE(sigma <= 55.0);
            ++bins[static_cast<std::size_t>(std::min(9.0, sigma / 5.5))];
        }
        double chi2 = 0;
        const double expected = draws / 10.0;
        for (int count : bins) chi2 += (count - expected) * (count - expected) / expected;
        CHECK(chi2 < 27.88); // chi-square_9 at the 99.9% quantile
    }
}

TEST_CASE("patch sampling", "[training][patches]") {
    SECTION("positions cover exactly the valid top-left range") {
        // Encode the source position in the pixel values so patches reveal
        // where they came from.
        Tensor coded(1, 1, 180, 180);
        for (int y = 0; y < 180; ++y) {
            for (int x = 0; x < 180; ++x) {
                coded.at(0, 0, y, x) = static_cast<float>(y * 180 + x);
            }
        }
        std::vector<NamedImage> images{{"coded", coded}};
        Rng rng(7);
        const auto patches = sample_patches(images, 50, 3000, rng);
        int min_x = 999, max_x = -1, min_y = 999, max_y = -1;
        for (const Tensor& patch : patches) {
            const int id = static_cast<int>(std::lround(patch.at(0, 0, 0, 0)));
            const int y0 = id / 180, x0 = id % 180;
            REQUIRE(y0 >= 0);
            REQUIRE(y0 <= 130);
            REQUIRE(x0 >= 0);
            REQUIRE(x0 <= 130);
            min_x = std::min(min_x, x0);
            max_x = std::max(max_x, x0);
            min_y = std::min(min_y, y0);
            max_y = std::max(max_y, y0);
        }
        CHECK(min_x == 0);
        CHECK(max_x == 130);
        CHECK(min_y == 0);
        CHECK(max_y == 130);
    }

    SECTION("count zero yields an empty set") {
        Rng texture_rng(8);
        std::vector<NamedImage> images{{"t", synthetic_texture<float>(texture_rng, 32)}};
        Rng rng(9);
        CHECK(sample_patches(images, 16, 0, rng).empty());
    }

    SECTION("fixed seed gives an identical sequence") {
        Rng texture_rng(10);
        std::vector<NamedImage> images{{"t", synthetic_texture<float>(texture_rng, 32)}};
        Rng a(11), b(11);
        const auto pa = sample_patches(images, 8, 20, a);
        const auto pb = sample_patches(images, 8, 20, b);
        REQUIRE(pa.size() == pb.size());
        for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].data == pb[i].data);
    }

    SECTION("undersized images are rejected by name") {
        Rng texture_rng(12);
        std::vector<NamedImage> images{{"too_small", synthetic_texture<float>(texture_rng, 8)}};
        Rng rng(13);
        try {
            sample_patches(images, 16, 1, rng);
            FAIL("expected ShapeError");
        } catch (const ShapeError& err) {
            CHECK(std::string(err.what()).find("too_small") != std::string::npos);
        }
    }

    SECTION("augmentation produces the eight dihedral variants") {
        Tensor tiny(1, 1, 3, 3);
        for (int i = 0; i < 9; ++i) tiny.data[static_cast<std::size_t>(i)] = static_cast<float>(i);
        std::vector<NamedImage> images{{"tiny", tiny}};
        Rng rng(14);
        const auto patches = sample_patches(images, 3, 400, rng, /*augment=*/true);
        std::set<std::vector<float>> variants;
        for (const Tensor& patch : patches) variants.insert(patch.data);
        CHECK(variants.size() == 8);
        CHECK(variants.contains(tiny.data)); // identity among them
    }
}

TEST_CASE("mse loss", "[training][loss]") {
    SECTION("matching tensors give zero loss and gradient") {
        Tensor a(1, 1, 4, 4, 0.3f);
        const auto result = mse_loss(a, a);
        CHECK(result.loss == 0.0);
        for (float v : result.grad.data) CHECK(v == 0.0f);
    }

    SECTION("constant offset c gives loss c^2") {
        TensorD pred(1, 2, 3, 3, 0.9);
        TensorD target(1, 2, 3, 3, 0.4);
        CHECK(mse_loss(pred, target).loss == Catch::Approx(0.25).margin(1e-12));
    }

    SECTION("gradient matches finite differences") {
        Rng rng(15);
        auto pred = oracle::random_tensor<double>(rng, 1, 2, 4, 4);
        const auto target = oracle::random_tensor<double>(rng, 1, 2, 4, 4);
        const auto analytic = mse_loss(pred, target);
        auto loss = [&]() { return mse_loss(pred, target).loss; };
        const auto fd = oracle::finite_difference(pred.data, loss, 1e-6);
        for (std::size_t i = 0; i < fd.size(); ++i) {
            REQUIRE(oracle::rel_error(fd[i], analytic.grad.data[i]) < 1e-8);
        }
    }

    SECTION("shape mismatch is rejected") {
        CHECK_THROWS_AS(mse_loss(Tensor(1, 1, 3, 3), Tensor(1, 1, 3, 4)), ShapeError);
    }
}

TEST_CASE("learning rate schedule", "[training][optim]") {
    CHECK(lr_at_epoch(1e-3, 1e-5, 50, 0) == 1e-3);
    CHECK(lr_at_epoch(1e-3, 1e-5, 50, 49) == 1e-5);
    // Midpoint of the exponent (51 epochs puts it on an integer epoch).
    CHECK(lr_at_epoch(1e-3, 1e-5, 51, 25) == Catch::Approx(1e-4).epsilon(1e-12));
    CHECK(lr_at_epoch(1e-3, 1e-5, 1, 0) == 1e-3);
    CHECK_THROWS_AS(lr_at_epoch(1e-3, 1e-5, 50, 50), ConfigError);
    // Monotone decreasing across the schedule.
    for (int e = 1; e < 50; ++e) {
        CHECK(lr_at_epoch(1e-3, 1e-5, 50, e) < lr_at_epoch(1e-3, 1e-5, 50, e - 1));
    }
}

TEST_CASE("adam single-parameter arithmetic", "[training][optim]") {
    SECTION("zero gradient leaves a fresh parameter unchanged") {
        std::vector<double> p{1.5}, g{0.0}, m{0.0}, v{0.0};
        adam_update<double>(p, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8);
        CHECK(p[0] == 1.5);
    }

    SECTION("first step with unit gradient") {
        std::vector<double> p{0.0}, g{1.0}, m{0.0}, v{0.0};
        adam_update<double>(p, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8);
        // m_hat = 1, v_hat = 1: update = -lr / (1 + eps)
        CHECK(p[0] == Catch::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
    }

    SECTION("odd symmetry of the update") {
        std::vector<double> p1{0.0}, g1{0.7}, m1{0.0}, v1{0.0};
        std::vector<double> p2{0.0}, g2{-0.7}, m2{0.0}, v2{0.0};
        adam_update<double>(p1, g1, m1, v1, 1, 1e-3, 0.9, 0.999, 1e-8);
        adam_update<double>(p2, g2, m2, v2, 1, 1e-3, 0.9, 0.999, 1e-8);
        CHECK(p1[0] == -p2[0]);
    }
}

TEST_CASE("adam over a model", "[training][optim]") {
    auto model = initialize_model<float>(build_lattice({2, 2, 6, 3, 1, FusionMode::concat}), 5);
    auto state = AdamStateT<float>::for_model(model);
    auto before = model;

    // Synthesize a gradient set from a real backward pass.
    Rng rng(16);
    const auto input = oracle::random_tensor<float>(rng, 2, 1, 8, 8);
    const auto result = forward_pass(model, input, Mode::train);
    const auto grads = backward_pass(model, result.trace, result.output);

    SECTION("lr = 0 freezes parameters while moments advance") {
        adam_step(model, grads, state, 0.0f);
        CHECK(state.t == 1);
        bool params_same = true;
        bool moments_moved = false;
        for_each_parameter(model, [&](ParamId id, std::span<const float> values) {
            const auto prev = [&]() -> std::span<const float> {
                const auto& node = before.nodes[static_cast<std::size_t>(id.node)];
                switch (id.role) {
                    case ParamRole::conv_weight: return {node.conv.weights.data};
                    case ParamRole::conv_bias: return {node.conv.bias};
                    case ParamRole::bn_gamma: return {node.bn.gamma};
                    default: return {node.bn.beta};
                }
            }();
            for (std::size_t i = 0; i < values.size(); ++i) {
                params_same = params_same && values[i] == prev[i];
            }
        });
        for (const auto& slot : state.slots) {
            for (float v : slot.m) moments_moved = moments_moved || v != 0.0f;
        }
        CHECK(params_same);
        CHECK(moments_moved);
    }

    SECTION("a positive lr moves the parameters") {
        adam_step(model, grads, state, 1e-3f);
        CHECK_FALSE(models_identical(model, before));
    }
}

TEST_CASE("tiny training run makes progress deterministically", "[training][slow]") {
    const auto images = synthetic_texture_set<float>(90, 6, 32);
    const LatticeSpec spec{2, 3, 32, 3, 1, FusionMode::concat};

    TrainConfig config;
    config.noise = NoiseMode::fixed(25.0);
    config.patch_size = 16;
    config.pairs_per_epoch = 64;
    config.batch_size = 16;
    config.epochs = 10;
    config.seed = 7;

    auto model = initialize_model<float>(build_lattice(spec), config.seed);

    // Mean loss of the untrained model over one deterministic pair set.
    double untrained_loss;
    {
        Rng rng(derive_seed(config.seed, 0xDA7A));
        auto pristine = model;
        double acc = 0;
        const auto patches = sample_patches(images, 16, 64, rng);
        int count = 0;
        for (const auto& patch : patches) {
            const auto pair = make_training_pair(patch, config.noise, rng);
            const auto out = forward_pass(pristine, pair.input, Mode::train);
            acc += mse_loss(out.output, pair.target).loss;
            ++count;
        }
        untrained_loss = acc / count;
    }

    const TrainHistory history = train(model, images, config);
    REQUIRE(history.size() == 10);
    CHECK(history.back().mean_loss < history.front().mean_loss);
    CHECK(history.back().mean_loss < untrained_loss);

    SECTION("identical seeds give bitwise-identical models") {
        auto again = initialize_model<float>(build_lattice(spec), config.seed);
        const TrainHistory second = train(again, images, config);
        CHECK(models_identical(model, again));
        REQUIRE(second.size() == history.size());
        for (std::size_t i = 0; i < history.size(); ++i) {
            CHECK(second[i].mean_loss == history[i].mean_loss);
        }
    }
}

TEST_CASE("zero-epoch training is a no-op", "[training]") {
    const auto images = synthetic_texture_set<float>(91, 2, 24);
    auto model = initialize_model<float>(build_lattice({2, 2, 8, 3, 1, FusionMode::concat}), 1);
    const auto before = model;
    TrainConfig config;
    config.epochs = 0;
    const TrainHistory history = train(model, images, config);
    CHECK(history.empty());
    CHECK(models_identical(model, before));
}

TEST_CASE("comparing a network against itself gives identical curves", "[training]") {
    const auto images = synthetic_texture_set<float>(92, 4, 32);
    const auto val = synthetic_texture_set<float>(93, 2, 32);
    const NetworkTopology topo = build_lattice({2, 2, 8, 3, 1, FusionMode::concat});
    auto model_a = initialize_model<float>(topo, 9);
    auto model_b = initialize_model<float>(topo, 9);

    TrainConfig config;
    config.patch_size = 12;
    config.pairs_per_epoch = 32;
    config.batch_size = 8;
    config.epochs = 3;
    config.seed = 5;

    const auto [hist_a, hist_b] = compare_training(model_a, model_b, images, config, val);
    REQUIRE(hist_a.size() == 3);
    REQUIRE(hist_b.size() == 3);
    for (std::size_t i = 0; i < hist_a.size(); ++i) {
        CHECK(hist_a[i].mean_loss == hist_b[i].mean_loss);
        REQUIRE(hist_a[i].val_psnr_db.has_value());
        CHECK(*hist_a[i].val_psnr_db == *hist_b[i].val_psnr_db);
    }
    CHECK(models_identical(model_a, model_b));
}

TEST_CASE("residual identity within float round-off", "[training]") {
    const auto images = synthetic_texture_set<float>(94, 1, 32);
    auto model = initialize_model<float>(build_lattice({2, 2, 8, 3, 1, FusionMode::concat}), 2);
    Rng rng(17);
    const Tensor noisy = add_gaussian_noise(images[0].pixels, 25.0, rng);
    const Tensor residual = forward_infer(model, noisy);
    for (std::size_t i = 0; i < noisy.data.size(); ++i) {
        const float denoised = noisy.data[i] - residual.data[i];
        CHECK(std::abs((denoised + residual.data[i]) - noisy.data[i]) <= 1e-6f);
    }
}

TEST_CASE("non-finite loss aborts with a diagnostic", "[training]") {
    const auto images = synthetic_texture_set<float>(95, 2, 24);
    auto model = initialize_model<float>(build_lattice({1, 2, 4, 3, 1, FusionMode::concat}), 3);
    // Poison the output conv (no batch norm behind it to renormalize): its
    // post-ReLU inputs are non-negative, so the sum overflows to +inf.
    auto& out_node = model.nodes[static_cast<std::size_t>(model.topology.output_node)];
    for (float& w : out_node.conv.weights.data) w = 1e38f;
    for (auto& node : model.nodes) {
        if (node.has_bn) {
            for (float& b : node.bn.beta) b = 1.0f; // keep activations positive
        }
    }

    TrainConfig config;
    config.patch_size = 12;
    config.pairs_per_epoch = 8;
    config.batch_size = 8;
    config.epochs = 1;
    try {
        train(model, images, config);
        FAIL("expected TrainingError");
    } catch (const TrainingError& err) {
        CHECK(std::string(err.what()).find("epoch 0") != std::string::npos);
    }
}

TEST_CASE("model persistence round-trips bitwise", "[training][serialize]") {
    const auto path = temp_file("lfnet_roundtrip.lfnt");

    const std::vector<LatticeSpec> specs = {
        {2, 3, 8, 3, 1, FusionMode::concat},
        {2, 2, 6, 3, 3, FusionMode::concat},
        {2, 3, 8, 3, 1, FusionMode::sum},
    };
    for (const LatticeSpec& spec : specs) {
        auto model = initialize_model<float>(build_lattice(spec), 77);
        // Make running statistics non-trivial so they are exercised too.
        const auto images = synthetic_texture_set<float>(96, 2, 24, spec.in_channels);
        TrainConfig config;
        config.patch_size = 12;
        config.pairs_per_epoch = 8;
        config.batch_size = 8;
        config.epochs = 1;
        train(model, images, config);

        save_model(model, path);
        const NetworkModel loaded = load_model(path);
        CHECK(models_identical(model, loaded));
        REQUIRE(loaded.topology.lattice.has_value());
        CHECK(loaded.topology.lattice->rows == spec.rows);
        CHECK(loaded.topology.lattice->fusion == spec.fusion);
    }
    std::filesystem::remove(path);
}

TEST_CASE("model container rejects malformed files", "[training][serialize]") {
    const auto path = temp_file("lfnet_malformed.lfnt");
    auto model = initialize_model<float>(build_lattice({1, 2, 4, 3, 1, FusionMode::concat}), 1);
    save_model(model, path);

    SECTION("truncation") {
        const auto size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, size / 2);
        try {
            load_model(path);
            FAIL("expected truncation error");
        } catch (const FormatError& err) {
            CHECK(err.kind == FormatError::Kind::truncated);
        }
    }

    SECTION("bad magic") {
        std::fstream file(path, std::ios::in | std::ios::out | std::ios::binary);
        file.write("XXXX", 4);
        file.close();
        try {
            load_model(path);
            FAIL("expected magic error");
        } catch (const FormatError& err) {
            CHECK(err.kind == FormatError::Kind::bad_magic);
        }
    }

    SECTION("bad version") {
        std::fstream file(path, std::ios::in | std::ios::out | std::ios::binary);
        file.seekp(4);
        const char version[2] = {9, 0};
        file.write(version, 2);
        file.close();
        try {
            load_model(path);
            FAIL("expected version error");
        } catch (const FormatError& err) {
            CHECK(err.kind == FormatError::Kind::bad_version);
        }
    }

    SECTION("trailing data") {
        std::ofstream file(path, std::ios::app | std::ios::binary);
        file.write("zz", 2);
        file.close();
        try {
            load_model(path);
            FAIL("expected trailing-data error");
        } catch (const FormatError& err) {
            CHECK(err.kind == FormatError::Kind::trailing_data);
        }
    }

    std::filesystem::remove(path);
}

TEST_CASE("plain models are not persisted", "[training][serialize]") {
    auto plain = initialize_model<float>(build_plain(3, 0, 1, 8), 1);
    CHECK_THROWS_AS(save_model(plain, temp_file("lfnet_plain.lfnt")), ConfigError);
}
