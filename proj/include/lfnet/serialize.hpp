#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "lfnet/model.hpp"

namespace lfnet {

/// Model container: magic "LFNT", u16 format version, lattice spec header
/// (rows, cols, filters, kernel, in/out channels as u32, fusion mode as u8),
/// then every node's tensors in the canonical topological order as
/// little-endian 32-bit floats, each tensor preceded by its shape
/// (u8 rank + rank u32 dims). Per node: conv weights, bias, and for
/// batch-normalized nodes gamma, beta, running mean, running variance.
inline constexpr char kModelMagic[4] = {'L', 'F', 'N', 'T'};
inline constexpr std::uint16_t kModelVersion = 1;

namespace detail {

inline void put_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void put_u16(std::ostream& out, std::uint16_t v) {
    const char bytes[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
    out.write(bytes, 2);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                           static_cast<char>((v >> 16) & 0xFF),
                           static_cast<char>((v >> 24) & 0xFF)};
    out.write(bytes, 4);
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint8_t get_u8(std::istream& in, const char* what) {
    const int ch = in.get();
    if (ch == EOF) {
        throw FormatError(FormatError::Kind::truncated,
                          std::string("model file truncated while reading ") + what);
    }
    return static_cast<std::uint8_t>(ch);
}

inline std::uint16_t get_u16(std::istream& in, const char* what) {
    const std::uint16_t lo = get_u8(in, what);
    const std::uint16_t hi = get_u8(in, what);
    return static_cast<std::uint16_t>(lo | (hi << 8));
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(in, what)) << (8 * i);
    return v;
}

inline float get_f32(std::istream& in, const char* what) {
    return std::bit_cast<float>(get_u32(in, what));
}

inline void put_tensor(std::ostream& out, std::span<const float> values,
                       std::span<const int> dims) {
    put_u8(out, static_cast<std::uint8_t>(dims.size()));
    for (int d : dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : values) put_f32(out, v);
}

inline void get_tensor(std::istream& in, std::span<float> values, std::span<const int> dims,
                       const std::string& what) {
    const std::uint8_t rank = get_u8(in, what.c_str());
    if (rank != dims.size()) {
        throw FormatError(FormatError::Kind::bad_header,
                          what + ": rank " + std::to_string(rank) + ", expected " +
                              std::to_string(dims.size()));
    }
    std::size_t numel = 1;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const std::uint32_t d = get_u32(in, what.c_str());
        if (d != static_cast<std::uint32_t>(dims[i])) {
            throw FormatError(FormatError::Kind::bad_header,
                              what + ": dim " + std::to_string(i) + " is " + std::to_string(d) +
                                  ", expected " + std::to_string(dims[i]));
        }
        numel *= d;
    }
    if (numel != values.size()) {
        throw FormatError(FormatError::Kind::bad_header, what + ": element count mismatch");
    }
    for (float& v : values) v = get_f32(in, what.c_str());
}

} // namespace detail

inline void save_model(const NetworkModelT<float>& model, const std::filesystem::path& path) {
    if (!model.topology.lattice.has_value()) {
        throw ConfigError("save_model: only lattice-spec models are persisted "
                          "(plain baselines are transient)");
    }
    const LatticeSpec& spec = *model.topology.lattice;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");

    out.write(kModelMagic, 4);
    detail::put_u16(out, kModelVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(spec.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(spec.cols));
    detail::put_u32(out, static_cast<std::uint32_t>(spec.filters_per_node));
    detail::put_u32(out, static_cast<std::uint32_t>(spec.kernel_size));
    detail::put_u32(out, static_cast<std::uint32_t>(spec.in_channels));
    detail::put_u32(out, static_cast<std::uint32_t>(spec.in_channels)); // out == in
    detail::put_u8(out, spec.fusion == FusionMode::concat ? 0 : 1);

    for (int node_id : topological_order(model.topology)) {
        const NodeParamsT<float>& node = model.nodes[static_cast<std::size_t>(node_id)];
        const Shape4 ws = node.conv.weights.shape;
        const int wdims[4] = {ws.n, ws.c, ws.h, ws.w};
        detail::put_tensor(out, node.conv.weights.data, wdims);
        const int bdims[1] = {static_cast<int>(node.conv.bias.size())};
        detail::put_tensor(out, node.conv.bias, bdims);
        if (node.has_bn) {
            const int cdims[1] = {node.bn.channels()};
            detail::put_tensor(out, node.bn.gamma, cdims);
            detail::put_tensor(out, node.bn.beta, cdims);
            detail::put_tensor(out, node.bn.running_mean, cdims);
            detail::put_tensor(out, node.bn.running_var, cdims);
        }
    }
    if (!out) throw IoError("short write to " + path.string());
}

inline NetworkModelT<float> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file " + path.string());

    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || std::string_view(magic, 4) != std::string_view(kModelMagic, 4)) {
        throw FormatError(FormatError::Kind::bad_magic,
                          path.string() + ": not an LFNT model container");
    }
    const std::uint16_t version = detail::get_u16(in, "version");
    if (version != kModelVersion) {
        throw FormatError(FormatError::Kind::bad_version,
                          path.string() + ": format version " + std::to_string(version) +
                              " unsupported (expected " + std::to_string(kModelVersion) + ")");
    }
    LatticeSpec spec;
    spec.rows = static_cast<int>(detail::get_u32(in, "rows"));
    spec.cols = static_cast<int>(detail::get_u32(in, "cols"));
    spec.filters_per_node = static_cast<int>(detail::get_u32(in, "filters"));
    spec.kernel_size = static_cast<int>(detail::get_u32(in, "kernel"));
    spec.in_channels = static_cast<int>(detail::get_u32(in, "in_channels"));
    const auto out_channels = detail::get_u32(in, "out_channels");
    if (out_channels != static_cast<std::uint32_t>(spec.in_channels)) {
        throw FormatError(FormatError::Kind::bad_header,
                          path.string() + ": out_channels must equal in_channels");
    }
    const std::uint8_t fusion = detail::get_u8(in, "fusion");
    if (fusion > 1) {
        throw FormatError(FormatError::Kind::bad_header, path.string() + ": unknown fusion mode");
    }
    spec.fusion = fusion == 0 ? FusionMode::concat : FusionMode::sum;
    try {
        spec.validate();
    } catch (const ConfigError& err) {
        throw FormatError(FormatError::Kind::bad_header, path.string() + ": " + err.what());
    }

    NetworkModelT<float> model = initialize_model<float>(build_lattice(spec), 0);
    for (int node_id : topological_order(model.topology)) {
        NodeParamsT<float>& node = model.nodes[static_cast<std::size_t>(node_id)];
        const std::string tag = "node " + std::to_string(node_id);
        const Shape4 ws = node.conv.weights.shape;
        const int wdims[4] = {ws.n, ws.c, ws.h, ws.w};
        detail::get_tensor(in, node.conv.weights.data, wdims, tag + " weights");
        const int bdims[1] = {static_cast<int>(node.conv.bias.size())};
        detail::get_tensor(in, node.conv.bias, bdims, tag + " bias");
        if (node.has_bn) {
            const int cdims[1] = {node.bn.channels()};
            detail::get_tensor(in, node.bn.gamma, cdims, tag + " gamma");
            detail::get_tensor(in, node.bn.beta, cdims, tag + " beta");
            detail::get_tensor(in, node.bn.running_mean, cdims, tag + " running_mean");
            detail::get_tensor(in, node.bn.running_var, cdims, tag + " running_var");
        }
    }
    if (in.peek() != EOF) {
        throw FormatError(FormatError::Kind::trailing_data,
                          path.string() + ": trailing bytes after the last tensor");
    }
    return model;
}

} // namespace lfnet
