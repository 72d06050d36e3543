#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <unordered_set>
#include <vector>

#include "lfnet/model.hpp"

namespace lfnet {

template <std::floating_point T>
struct NodeTrace {
    TensorT<T> input;    // fused input fed to the node's conv
    TensorT<T> conv_out; // batch-norm input
    TensorT<T> bn_out;   // pre-activation
    TensorT<T> output;   // node output consumed by out-edges
    BatchNormCacheT<T> bn_cache;
};

/// Saved activations and statistics from one forward pass, together with the
/// topological order that produced them.
template <std::floating_point T>
struct ComputeTraceT {
    std::vector<int> order;
    std::vector<NodeTrace<T>> nodes; // by node id
    Mode mode = Mode::infer;
    Shape4 input_shape{};
    std::size_t node_count = 0; // for trace/model consistency checks
};

using ComputeTrace = ComputeTraceT<float>;

template <std::floating_point T>
struct ForwardResultT {
    TensorT<T> output;
    ComputeTraceT<T> trace;
};

namespace detail {

/// Fuses the in-edge activations of a node (in the topology's fixed in-edge
/// order) into the tensor its convolution consumes.
template <std::floating_point T>
TensorT<T> fuse_inputs(const NetworkTopology& topo, int node_id, const TensorT<T>& image,
                       const std::vector<NodeTrace<T>>& traces) {
    const auto& in_list = topo.in_edges[static_cast<std::size_t>(node_id)];
    if (in_list.empty()) return image;
    if (in_list.size() == 1) {
        const int src = topo.edges[static_cast<std::size_t>(in_list[0])].src;
        return traces[static_cast<std::size_t>(src)].output;
    }
    if (in_list.size() != 2) {
        throw GraphError("node " + topo.nodes[static_cast<std::size_t>(node_id)].name() +
                         " has in-degree " + std::to_string(in_list.size()) +
                         " (max 2 supported)");
    }
    const int first = topo.edges[static_cast<std::size_t>(in_list[0])].src;
    const int second = topo.edges[static_cast<std::size_t>(in_list[1])].src;
    if (topo.fusion == FusionMode::concat) {
        return concat_channels(traces[static_cast<std::size_t>(first)].output,
                               traces[static_cast<std::size_t>(second)].output);
    }
    return add_tensors(traces[static_cast<std::size_t>(first)].output,
                       traces[static_cast<std::size_t>(second)].output);
}

} // namespace detail

/// Runs the layer graph in topological order: every node computes conv ->
/// batch norm -> ReLU over its fused in-edge activations, except the output
/// node which applies its convolution alone. Train mode folds fresh batch
/// statistics into the model's running averages (inference is unaffected by
/// which topological order was used; sequential execution is bitwise
/// order-independent too).
template <std::floating_point T>
ForwardResultT<T> forward_pass(NetworkModelT<T>& model, const TensorT<T>& input, Mode mode,
                               const std::vector<int>* order_override = nullptr) {
    const NetworkTopology& topo = model.topology;
    validate_topology(topo);
    if (model.nodes.size() != topo.nodes.size()) {
        throw GraphError("model carries " + std::to_string(model.nodes.size()) +
                         " parameter sets for " + std::to_string(topo.nodes.size()) + " nodes");
    }
    if (input.shape.c != topo.image_channels) {
        throw ShapeError("forward: input has " + std::to_string(input.shape.c) +
                         " channels, network expects " + std::to_string(topo.image_channels));
    }

    ComputeTraceT<T> trace;
    trace.mode = mode;
    trace.input_shape = input.shape;
    trace.node_count = topo.nodes.size();
    if (order_override) {
        if (order_override->size() != topo.nodes.size()) {
            throw GraphError("forward: supplied order has wrong length");
        }
        trace.order = *order_override;
    } else {
        trace.order = topological_order(topo);
    }
    trace.nodes.resize(topo.nodes.size());

    for (int node_id : trace.order) {
        NodeTrace<T>& nt = trace.nodes[static_cast<std::size_t>(node_id)];
        NodeParamsT<T>& params = model.nodes[static_cast<std::size_t>(node_id)];
        nt.input = detail::fuse_inputs(topo, node_id, input, trace.nodes);
        nt.conv_out = conv2d_forward(nt.input, params.conv);
        if (params.has_bn) {
            nt.bn_out = batchnorm_forward(nt.conv_out, params.bn, mode, nt.bn_cache);
            nt.output = relu(nt.bn_out);
        } else {
            nt.output = nt.conv_out;
        }
    }
    ForwardResultT<T> result;
    result.output = trace.nodes[static_cast<std::size_t>(topo.output_node)].output;
    result.trace = std::move(trace);
    return result;
}

/// Inference without touching running statistics.
template <std::floating_point T>
TensorT<T> forward_infer(const NetworkModelT<T>& model, const TensorT<T>& input) {
    NetworkModelT<T> scratch = model; // infer mode never writes, copy is belt and braces
    return forward_pass(scratch, input, Mode::infer).output;
}

template <std::floating_point T>
struct NodeGradsT {
    TensorT<T> conv_weights;
    std::vector<T> conv_bias;
    std::vector<T> bn_gamma;
    std::vector<T> bn_beta;
};

/// Gradient for every learnable parameter, addressable by (node, role) and
/// iterable in the same fixed order as for_each_parameter.
template <std::floating_point T>
struct GradientSetT {
    std::vector<NodeGradsT<T>> nodes; // by node id

    [[nodiscard]] std::span<const T> lookup(ParamId id) const {
        const NodeGradsT<T>& g = nodes.at(static_cast<std::size_t>(id.node));
        switch (id.role) {
            case ParamRole::conv_weight: return {g.conv_weights.data};
            case ParamRole::conv_bias: return {g.conv_bias};
            case ParamRole::bn_gamma: return {g.bn_gamma};
            case ParamRole::bn_beta: return {g.bn_beta};
        }
        throw Error("unknown parameter role");
    }

    [[nodiscard]] std::span<T> lookup(ParamId id) {
        auto view = std::as_const(*this).lookup(id);
        return {const_cast<T*>(view.data()), view.size()};
    }
};

using GradientSet = GradientSetT<float>;

/// Edge ids whose cotangent contribution is dropped during backward; used to
/// verify that fan-out gradients are the sum of per-consumer flows.
using EdgeMask = std::unordered_set<int>;

/// Reverse-mode pass over a train-mode trace. Nodes with several consumers
/// receive the sum of their consumers' cotangents; the image itself gets no
/// gradient (nothing upstream is learnable).
template <std::floating_point T>
GradientSetT<T> backward_pass(const NetworkModelT<T>& model, const ComputeTraceT<T>& trace,
                              const TensorT<T>& grad_output,
                              const EdgeMask* severed_edges = nullptr) {
    const NetworkTopology& topo = model.topology;
    if (trace.node_count != topo.nodes.size() || trace.nodes.size() != topo.nodes.size()) {
        throw GraphError("backward: trace does not match the model's topology");
    }
    if (trace.mode != Mode::train) {
        throw GraphError("backward: trace was recorded in inference mode");
    }
    const NodeTrace<T>& out_trace = trace.nodes[static_cast<std::size_t>(topo.output_node)];
    require_same_shape(grad_output, out_trace.output, "backward grad_output");

    GradientSetT<T> grads;
    grads.nodes.resize(topo.nodes.size());

    // Cotangent of each node's output, accumulated from consumers.
    std::vector<TensorT<T>> cotangent(topo.nodes.size());
    cotangent[static_cast<std::size_t>(topo.output_node)] = grad_output;

    std::vector<int> order = trace.order;
    std::reverse(order.begin(), order.end());

    for (int node_id : order) {
        const NodeTrace<T>& nt = trace.nodes[static_cast<std::size_t>(node_id)];
        const NodeParamsT<T>& params = model.nodes[static_cast<std::size_t>(node_id)];
        NodeGradsT<T>& ng = grads.nodes[static_cast<std::size_t>(node_id)];
        TensorT<T>& cot = cotangent[static_cast<std::size_t>(node_id)];
        if (cot.empty()) {
            // No surviving cotangent (all out-edges severed): zero gradients.
            cot = TensorT<T>(nt.output.shape);
        }

        TensorT<T> conv_cot;
        if (params.has_bn) {
            TensorT<T> bn_cot = relu_backward(nt.bn_out, cot);
            BatchNormGradsT<T> bn_grads =
                batchnorm_backward(nt.conv_out, params.bn, nt.bn_cache, bn_cot);
            ng.bn_gamma = std::move(bn_grads.gamma);
            ng.bn_beta = std::move(bn_grads.beta);
            conv_cot = std::move(bn_grads.input);
        } else {
            conv_cot = cot;
        }

        const auto& in_list = topo.in_edges[static_cast<std::size_t>(node_id)];
        const bool need_input_grad = !in_list.empty();
        Conv2dGradsT<T> conv_grads =
            conv2d_backward(nt.input, params.conv, conv_cot, need_input_grad);
        ng.conv_weights = std::move(conv_grads.weights);
        ng.conv_bias = std::move(conv_grads.bias);
        if (!need_input_grad) continue;

        auto deposit = [&](int edge_id, TensorT<T>&& grad) {
            if (severed_edges && severed_edges->contains(edge_id)) return;
            const int src = topo.edges[static_cast<std::size_t>(edge_id)].src;
            TensorT<T>& slot = cotangent[static_cast<std::size_t>(src)];
            if (slot.empty()) {
                slot = std::move(grad);
            } else {
                for (std::size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += grad.data[i];
            }
        };

        if (in_list.size() == 1) {
            deposit(in_list[0], std::move(conv_grads.input));
        } else if (topo.fusion == FusionMode::concat) {
            const int first_src = topo.edges[static_cast<std::size_t>(in_list[0])].src;
            const int split =
                topo.nodes[static_cast<std::size_t>(first_src)].out_channels;
            auto [ga, gb] = split_channels_backward(conv_grads.input, split);
            deposit(in_list[0], std::move(ga));
            deposit(in_list[1], std::move(gb));
        } else {
            TensorT<T> copy = conv_grads.input;
            deposit(in_list[0], std::move(copy));
            deposit(in_list[1], std::move(conv_grads.input));
        }
    }
    return grads;
}

struct GradCheckOptions {
    double step = 1e-5;
    int samples_per_tensor = 32; // 0 = every coordinate
    std::uint64_t seed = 0xC0FFEE;
};

struct GradCheckWorst {
    ParamId param{};
    std::int64_t flat_index = 0;
    double analytic = 0;
    double numeric = 0;
    double rel_error = 0;
};

struct GradCheckReport {
    double max_rel_error = 0;
    GradCheckWorst worst{};
    std::vector<GradCheckWorst> per_group; // worst coordinate of each parameter group
    double tolerance = 0;

    [[nodiscard]] bool passed() const { return max_rel_error <= tolerance; }
};

/// Compares supplied analytic gradients of L = 0.5 * ||forward(x)||^2 (train
/// mode) against central finite differences. Relative error uses a unit
/// floor: |fd - g| / max(|fd|, |g|, 1).
template <std::floating_point T>
GradCheckReport fd_compare(const NetworkModelT<T>& model, const TensorT<T>& input,
                           const GradientSetT<T>& analytic, double tolerance,
                           const GradCheckOptions& opts = {}) {
    NetworkModelT<T> scratch = model; // running-stat updates do not affect the loss
    auto loss_at = [&]() {
        const auto result = forward_pass(scratch, input, Mode::train);
        double acc = 0;
        for (T v : result.output.data) acc += 0.5 * static_cast<double>(v) * v;
        return acc;
    };

    GradCheckReport report;
    report.tolerance = tolerance;
    const T h = static_cast<T>(opts.step);
    Rng rng(derive_seed(opts.seed, 0xFD));

    for_each_parameter(scratch, [&](ParamId id, std::span<T> values) {
        std::span<const T> grads = analytic.lookup(id);
        if (grads.size() != values.size()) {
            throw GraphError("gradient check: " + id.str() + " gradient length " +
                             std::to_string(grads.size()) + " != parameter length " +
                             std::to_string(values.size()));
        }
        std::vector<std::int64_t> coords;
        const auto count = static_cast<std::int64_t>(values.size());
        if (opts.samples_per_tensor <= 0 || count <= opts.samples_per_tensor) {
            coords.resize(static_cast<std::size_t>(count));
            for (std::int64_t i = 0; i < count; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            for (int i = 0; i < opts.samples_per_tensor; ++i) {
                coords.push_back(rng.uniform_int(0, count - 1));
            }
        }

        GradCheckWorst group{id, 0, 0, 0, -1.0};
        for (std::int64_t coord : coords) {
            T& slot = values[static_cast<std::size_t>(coord)];
            const T saved = slot;
            slot = saved + h;
            const double up = loss_at();
            slot = saved - h;
            const double down = loss_at();
            slot = saved;

            const double fd = (up - down) / (2.0 * static_cast<double>(h));
            const double an = static_cast<double>(grads[static_cast<std::size_t>(coord)]);
            const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
            const double rel = std::abs(fd - an) / denom;
            if (rel > group.rel_error) group = {id, coord, an, fd, rel};
        }
        report.per_group.push_back(group);
        if (group.rel_error > report.max_rel_error) {
            report.max_rel_error = group.rel_error;
            report.worst = group;
        }
    });
    return report;
}

/// Whole-network gradient check: runs forward/backward itself and then
/// finite-differences every (sampled) coordinate. Tolerances assume double
/// precision.
template <std::floating_point T>
GradCheckReport grad_check(const NetworkModelT<T>& model, const TensorT<T>& input,
                           double tolerance, const GradCheckOptions& opts = {}) {
    NetworkModelT<T> scratch = model;
    const auto result = forward_pass(scratch, input, Mode::train);
    const GradientSetT<T> grads = backward_pass(scratch, result.trace, result.output);
    return fd_compare(model, input, grads, tolerance, opts);
}

} // namespace lfnet
