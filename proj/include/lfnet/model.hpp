#pragma once

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "lfnet/lattice.hpp"
#include "lfnet/ops.hpp"
#include "lfnet/rng.hpp"
#include "lfnet/tensor.hpp"

namespace lfnet {

template <std::floating_point T>
struct NodeParamsT {
    ConvParamsT<T> conv;
    BatchNormParamsT<T> bn; // unused (empty) when the node has no batch norm
    bool has_bn = true;
};

/// Topology plus per-node learnable parameters and batch-norm running
/// statistics.
template <std::floating_point T>
struct NetworkModelT {
    NetworkTopology topology;
    std::vector<NodeParamsT<T>> nodes; // by node id

    template <std::floating_point U>
    [[nodiscard]] NetworkModelT<U> cast() const {
        NetworkModelT<U> out;
        out.topology = topology;
        out.nodes.resize(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const NodeParamsT<T>& src = nodes[i];
            NodeParamsT<U>& dst = out.nodes[i];
            dst.has_bn = src.has_bn;
            dst.conv.weights = src.conv.weights.template cast<U>();
            dst.conv.bias.assign(src.conv.bias.begin(), src.conv.bias.end());
            if (src.has_bn) {
                dst.bn.gamma.assign(src.bn.gamma.begin(), src.bn.gamma.end());
                dst.bn.beta.assign(src.bn.beta.begin(), src.bn.beta.end());
                dst.bn.running_mean.assign(src.bn.running_mean.begin(), src.bn.running_mean.end());
                dst.bn.running_var.assign(src.bn.running_var.begin(), src.bn.running_var.end());
                dst.bn.epsilon = static_cast<U>(src.bn.epsilon);
                dst.bn.momentum = static_cast<U>(src.bn.momentum);
            }
        }
        return out;
    }
};

using NetworkModel = NetworkModelT<float>;

enum class ParamRole { conv_weight, conv_bias, bn_gamma, bn_beta };

inline const char* to_string(ParamRole role) {
    switch (role) {
        case ParamRole::conv_weight: return "conv_weight";
        case ParamRole::conv_bias: return "conv_bias";
        case ParamRole::bn_gamma: return "bn_gamma";
        case ParamRole::bn_beta: return "bn_beta";
    }
    return "?";
}

/// Identifies one learnable tensor: node id plus its role within the node.
struct ParamId {
    int node = 0;
    ParamRole role = ParamRole::conv_weight;

    bool operator==(const ParamId&) const = default;

    [[nodiscard]] std::string str() const {
        return "node " + std::to_string(node) + " " + to_string(role);
    }
};

/// Visits every learnable parameter group as a flat span, in the fixed order
/// node id ascending / weight, bias, gamma, beta. Optimizers, gradient maps
/// and the serializer all rely on this single enumeration order.
template <std::floating_point T, typename Fn>
void for_each_parameter(NetworkModelT<T>& model, Fn&& fn) {
    for (std::size_t i = 0; i < model.nodes.size(); ++i) {
        NodeParamsT<T>& node = model.nodes[i];
        const int id = static_cast<int>(i);
        fn(ParamId{id, ParamRole::conv_weight}, std::span<T>(node.conv.weights.data));
        fn(ParamId{id, ParamRole::conv_bias}, std::span<T>(node.conv.bias));
        if (node.has_bn) {
            fn(ParamId{id, ParamRole::bn_gamma}, std::span<T>(node.bn.gamma));
            fn(ParamId{id, ParamRole::bn_beta}, std::span<T>(node.bn.beta));
        }
    }
}

template <std::floating_point T, typename Fn>
void for_each_parameter(const NetworkModelT<T>& model, Fn&& fn) {
    for_each_parameter(const_cast<NetworkModelT<T>&>(model),
                       [&](ParamId id, std::span<T> values) {
                           fn(id, std::span<const T>(values.data(), values.size()));
                       });
}

/// Total learnable element count found by walking an actual model; the
/// brute-force counterpart of count_parameters on the topology.
template <std::floating_point T>
std::int64_t count_model_parameters(const NetworkModelT<T>& model) {
    std::int64_t total = 0;
    for_each_parameter(model, [&](ParamId, std::span<const T> values) {
        total += static_cast<std::int64_t>(values.size());
    });
    return total;
}

/// Fan-in He initialization: conv weights ~ N(0, 2 / (kh*kw*in_channels)),
/// biases 0, batch-norm gamma 1 / beta 0 with fresh running statistics.
/// Deterministic for a given seed.
template <std::floating_point T = float>
NetworkModelT<T> initialize_model(const NetworkTopology& topology, std::uint64_t seed) {
    NetworkModelT<T> model;
    model.topology = topology;
    model.nodes.resize(topology.nodes.size());
    Rng rng(derive_seed(seed, 0x1A77));

    for (const NodeInfo& info : topology.nodes) {
        NodeParamsT<T>& node = model.nodes[static_cast<std::size_t>(info.id)];
        const int k = topology.kernel_size;
        node.conv.weights = TensorT<T>(info.out_channels, info.in_channels, k, k);
        const double stddev = std::sqrt(2.0 / (static_cast<double>(k) * k * info.in_channels));
        for (T& value : node.conv.weights.data) {
            value = static_cast<T>(rng.normal(0.0, stddev));
        }
        node.conv.bias.assign(static_cast<std::size_t>(info.out_channels), T(0));
        node.has_bn = info.has_batch_norm;
        if (node.has_bn) {
            node.bn = BatchNormParamsT<T>::identity(info.out_channels);
        }
    }
    return model;
}

} // namespace lfnet
