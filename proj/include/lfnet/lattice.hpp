#pragma once

#include <algorithm>
#include <deque>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lfnet/error.hpp"

namespace lfnet {

enum class NodeKind { input_conv, fusion_conv, output_conv };
enum class EdgeRole { vertical, horizontal, chain, to_output };
enum class FusionMode { concat, sum };

inline const char* to_string(EdgeRole role) {
    switch (role) {
        case EdgeRole::vertical: return "vertical";
        case EdgeRole::horizontal: return "horizontal";
        case EdgeRole::chain: return "chain";
        case EdgeRole::to_output: return "to-output";
    }
    return "?";
}

inline const char* to_string(FusionMode fusion) {
    return fusion == FusionMode::concat ? "concat" : "sum";
}

/// Declarative description of a serpentine lattice network.
struct LatticeSpec {
    int rows = 4;
    int cols = 5;
    int filters_per_node = 32;
    int kernel_size = 3;
    int in_channels = 1; // 1 gray, 3 color; the output layer emits the same count
    FusionMode fusion = FusionMode::concat;

    void validate() const {
        if (rows < 1 || cols < 1) throw ConfigError("lattice spec: rows/cols must be >= 1");
        if (filters_per_node < 1) throw ConfigError("lattice spec: filters_per_node must be >= 1");
        if (kernel_size < 1 || kernel_size % 2 == 0) {
            throw ConfigError("lattice spec: kernel_size must be odd and >= 1");
        }
        if (in_channels != 1 && in_channels != 3) {
            throw ConfigError("lattice spec: in_channels must be 1 or 3");
        }
    }
};

struct NodeInfo {
    int id = 0;
    NodeKind kind = NodeKind::fusion_conv;
    int row = 0, col = 0; // 1-based grid position; 0 for non-grid nodes
    int in_channels = 0;  // channels fed to this node's convolution
    int out_channels = 0;
    bool has_batch_norm = true;

    [[nodiscard]] std::string name() const {
        if (kind == NodeKind::output_conv) return "output";
        if (row > 0) return "(" + std::to_string(row) + "," + std::to_string(col) + ")";
        return "L" + std::to_string(id + 1);
    }
};

struct Edge {
    int src = 0;
    int dst = 0;
    EdgeRole role = EdgeRole::horizontal;
};

/// Materialized layer graph. Nodes are convolution layers; node id equals the
/// index into `nodes`, and the output conv is always the last node. In-edge
/// lists are kept in fusion order: vertical before horizontal, ties broken by
/// ascending source id. That order fixes the channel layout of concatenation.
struct NetworkTopology {
    std::vector<NodeInfo> nodes;
    std::vector<Edge> edges;
    int input_node = 0;    // where the image enters
    int output_node = 0;   // final plain conv (no BN / ReLU)
    int terminal_node = 0; // last grid/hidden node; the serpentine endpoint
    int image_channels = 1;
    int kernel_size = 3;
    FusionMode fusion = FusionMode::concat;
    std::optional<LatticeSpec> lattice; // set when built from a lattice spec

    std::vector<std::vector<int>> in_edges;  // edge indices per node, fusion order
    std::vector<std::vector<int>> out_edges; // edge indices per node

    [[nodiscard]] int node_count() const { return static_cast<int>(nodes.size()); }

    [[nodiscard]] int grid_node_id(int row, int col) const {
        for (const NodeInfo& node : nodes) {
            if (node.row == row && node.col == col) return node.id;
        }
        throw GraphError("no node at grid position (" + std::to_string(row) + "," +
                         std::to_string(col) + ")");
    }

    void rebuild_adjacency() {
        in_edges.assign(nodes.size(), {});
        out_edges.assign(nodes.size(), {});
        for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
            in_edges[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)].dst)].push_back(e);
            out_edges[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)].src)].push_back(e);
        }
        auto rank = [](EdgeRole r) { return r == EdgeRole::vertical ? 0 : r == EdgeRole::horizontal ? 1 : 2; };
        for (auto& list : in_edges) {
            std::sort(list.begin(), list.end(), [&](int lhs, int rhs) {
                const Edge& a = edges[static_cast<std::size_t>(lhs)];
                const Edge& b = edges[static_cast<std::size_t>(rhs)];
                if (rank(a.role) != rank(b.role)) return rank(a.role) < rank(b.role);
                return a.src < b.src;
            });
        }
    }
};

/// Builds the serpentine lattice: rows 1..n top to bottom, columns 1..m.
/// Odd rows run left to right, even rows right to left, and every column has
/// a downward edge, which yields a Hamiltonian input-to-output route. The
/// image enters (1,1); the output conv reads the serpentine terminal of row n
/// together with that terminal's predecessor.
inline NetworkTopology build_lattice(const LatticeSpec& spec) {
    spec.validate();
    const int n = spec.rows, m = spec.cols, f = spec.filters_per_node;

    NetworkTopology topo;
    topo.image_channels = spec.in_channels;
    topo.kernel_size = spec.kernel_size;
    topo.fusion = spec.fusion;
    topo.lattice = spec;

    auto grid_id = [m](int i, int j) { return (i - 1) * m + (j - 1); };

    for (int i = 1; i <= n; ++i) {
        for (int j = 1; j <= m; ++j) {
            NodeInfo node;
            node.id = grid_id(i, j);
            node.row = i;
            node.col = j;
            node.kind = (i == 1 && j == 1) ? NodeKind::input_conv : NodeKind::fusion_conv;
            node.out_channels = f;
            node.has_batch_norm = true;
            topo.nodes.push_back(node);
        }
    }

    for (int i = 1; i <= n; ++i) {
        if (i % 2 == 1) {
            for (int j = 1; j < m; ++j) {
                topo.edges.push_back({grid_id(i, j), grid_id(i, j + 1), EdgeRole::horizontal});
            }
        } else {
            for (int j = m; j > 1; --j) {
                topo.edges.push_back({grid_id(i, j), grid_id(i, j - 1), EdgeRole::horizontal});
            }
        }
    }
    for (int i = 1; i < n; ++i) {
        for (int j = 1; j <= m; ++j) {
            topo.edges.push_back({grid_id(i, j), grid_id(i + 1, j), EdgeRole::vertical});
        }
    }

    // Serpentine terminal of row n, and the node feeding it within that row.
    const int terminal = (n % 2 == 1) ? grid_id(n, m) : grid_id(n, 1);
    int companion = -1;
    if (m >= 2) {
        companion = (n % 2 == 1) ? grid_id(n, m - 1) : grid_id(n, 2);
    } else if (n >= 2) {
        companion = grid_id(n - 1, 1); // single-column lattice: vertical predecessor
    }

    NodeInfo out;
    out.id = n * m;
    out.kind = NodeKind::output_conv;
    out.out_channels = spec.in_channels;
    out.has_batch_norm = false;
    topo.nodes.push_back(out);
    topo.output_node = out.id;
    topo.terminal_node = terminal;
    topo.input_node = grid_id(1, 1);

    topo.edges.push_back({terminal, out.id, EdgeRole::to_output});
    if (companion >= 0) topo.edges.push_back({companion, out.id, EdgeRole::to_output});

    topo.rebuild_adjacency();

    // Input channel counts follow the in-degree and the fusion mode.
    for (NodeInfo& node : topo.nodes) {
        const int fan_in = static_cast<int>(topo.in_edges[static_cast<std::size_t>(node.id)].size());
        if (node.kind == NodeKind::input_conv) {
            node.in_channels = spec.in_channels;
        } else if (spec.fusion == FusionMode::concat) {
            node.in_channels = f * std::max(1, fan_in);
        } else {
            node.in_channels = f;
        }
    }
    return topo;
}

/// Builds a plain chain: (layers - 1) conv+BN+ReLU stages ending in a plain
/// output conv. The first wide_prefix hidden stages carry wide_filters
/// channels (the paper widens a few initial layers to parameter-match), the
/// rest carry `filters`.
inline NetworkTopology build_plain(int layers, int wide_prefix, int in_channels,
                                   int filters = 32, int wide_filters = 64,
                                   int kernel_size = 3) {
    if (layers < 2) throw ConfigError("plain network needs at least 2 layers");
    if (wide_prefix < 0 || wide_prefix > layers - 1) {
        throw ConfigError("plain network: wide_prefix outside [0, layers-1]");
    }
    NetworkTopology topo;
    topo.image_channels = in_channels;
    topo.kernel_size = kernel_size;
    topo.fusion = FusionMode::concat;

    const int hidden = layers - 1;
    int prev_channels = in_channels;
    for (int i = 0; i < hidden; ++i) {
        NodeInfo node;
        node.id = i;
        node.kind = (i == 0) ? NodeKind::input_conv : NodeKind::fusion_conv;
        node.in_channels = prev_channels;
        node.out_channels = (i < wide_prefix) ? wide_filters : filters;
        node.has_batch_norm = true;
        prev_channels = node.out_channels;
        topo.nodes.push_back(node);
        if (i > 0) topo.edges.push_back({i - 1, i, EdgeRole::chain});
    }
    NodeInfo out;
    out.id = hidden;
    out.kind = NodeKind::output_conv;
    out.in_channels = prev_channels;
    out.out_channels = in_channels;
    out.has_batch_norm = false;
    topo.nodes.push_back(out);
    topo.edges.push_back({hidden - 1, hidden, EdgeRole::to_output});

    topo.input_node = 0;
    topo.output_node = hidden;
    topo.terminal_node = hidden - 1;
    topo.rebuild_adjacency();
    return topo;
}

enum class TieBreak { fifo, lifo };

/// Kahn topological order over all nodes; throws GraphError on a cycle.
/// The tie-break picks among simultaneously ready nodes, giving two distinct
/// valid orders for order-independence checks.
inline std::vector<int> topological_order(const NetworkTopology& topo,
                                          TieBreak tie = TieBreak::fifo) {
    std::vector<int> in_degree(topo.nodes.size(), 0);
    for (const Edge& e : topo.edges) ++in_degree[static_cast<std::size_t>(e.dst)];

    std::deque<int> ready;
    for (const NodeInfo& node : topo.nodes) {
        if (in_degree[static_cast<std::size_t>(node.id)] == 0) ready.push_back(node.id);
    }
    std::vector<int> order;
    order.reserve(topo.nodes.size());
    while (!ready.empty()) {
        int v;
        if (tie == TieBreak::fifo) {
            v = ready.front();
            ready.pop_front();
        } else {
            v = ready.back();
            ready.pop_back();
        }
        order.push_back(v);
        for (int e : topo.out_edges[static_cast<std::size_t>(v)]) {
            const int dst = topo.edges[static_cast<std::size_t>(e)].dst;
            if (--in_degree[static_cast<std::size_t>(dst)] == 0) ready.push_back(dst);
        }
    }
    if (order.size() != topo.nodes.size()) {
        throw GraphError("topology contains a cycle");
    }
    return order;
}

/// Checks that every node lies on some input->output directed path.
inline void validate_topology(const NetworkTopology& topo) {
    const std::vector<int> order = topological_order(topo); // throws on cycles
    const std::size_t count = topo.nodes.size();

    std::vector<char> from_input(count, 0);
    from_input[static_cast<std::size_t>(topo.input_node)] = 1;
    for (int v : order) {
        if (!from_input[static_cast<std::size_t>(v)]) continue;
        for (int e : topo.out_edges[static_cast<std::size_t>(v)]) {
            from_input[static_cast<std::size_t>(topo.edges[static_cast<std::size_t>(e)].dst)] = 1;
        }
    }
    std::vector<char> to_output(count, 0);
    to_output[static_cast<std::size_t>(topo.output_node)] = 1;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (!to_output[static_cast<std::size_t>(*it)]) continue;
        for (int e : topo.in_edges[static_cast<std::size_t>(*it)]) {
            to_output[static_cast<std::size_t>(topo.edges[static_cast<std::size_t>(e)].src)] = 1;
        }
    }
    for (const NodeInfo& node : topo.nodes) {
        if (!from_input[static_cast<std::size_t>(node.id)] ||
            !to_output[static_cast<std::size_t>(node.id)]) {
            throw GraphError("node " + node.name() + " is not on any input->output path");
        }
    }
}

/// Min and max path depth from input to output, counting conv nodes on the
/// path; with include_output the final conv counts as one more layer.
inline std::pair<int, int> min_max_depth(const NetworkTopology& topo, bool include_output) {
    const std::vector<int> order = topological_order(topo);
    constexpr int kUnset = std::numeric_limits<int>::min();
    std::vector<int> shortest(topo.nodes.size(), std::numeric_limits<int>::max());
    std::vector<int> longest(topo.nodes.size(), kUnset);
    shortest[static_cast<std::size_t>(topo.input_node)] = 1;
    longest[static_cast<std::size_t>(topo.input_node)] = 1;

    for (int v : order) {
        if (longest[static_cast<std::size_t>(v)] == kUnset) continue;
        for (int e : topo.out_edges[static_cast<std::size_t>(v)]) {
            const int dst = topo.edges[static_cast<std::size_t>(e)].dst;
            shortest[static_cast<std::size_t>(dst)] =
                std::min(shortest[static_cast<std::size_t>(dst)],
                         shortest[static_cast<std::size_t>(v)] + 1);
            longest[static_cast<std::size_t>(dst)] =
                std::max(longest[static_cast<std::size_t>(dst)],
                         longest[static_cast<std::size_t>(v)] + 1);
        }
    }
    int min_d = shortest[static_cast<std::size_t>(topo.output_node)];
    int max_d = longest[static_cast<std::size_t>(topo.output_node)];
    if (min_d == std::numeric_limits<int>::max() || max_d == kUnset) {
        throw GraphError("output node unreachable from input");
    }
    if (!include_output) {
        --min_d;
        --max_d;
    }
    return {min_d, max_d};
}

/// Conv layers strictly between a grid node and the output layer along the
/// canonical shortest route, i.e. the route entering the output through the
/// serpentine terminal. Equivalently: BFS hop count from the node to the
/// terminal. This is the quantity whose scaling the lattice argument rests
/// on (6 for the corner of a 4x4, 9 after three more columns).
inline int distance_to_output(const NetworkTopology& topo, int node_id) {
    if (node_id < 0 || node_id >= topo.node_count()) {
        throw GraphError("distance_to_output: unknown node id " + std::to_string(node_id));
    }
    if (node_id == topo.output_node) {
        throw GraphError("distance_to_output: defined for grid nodes, not the output conv");
    }
    std::vector<int> dist(topo.nodes.size(), -1);
    std::deque<int> queue{node_id};
    dist[static_cast<std::size_t>(node_id)] = 0;
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        if (v == topo.terminal_node) return dist[static_cast<std::size_t>(v)];
        for (int e : topo.out_edges[static_cast<std::size_t>(v)]) {
            const int dst = topo.edges[static_cast<std::size_t>(e)].dst;
            if (dst == topo.output_node) continue; // stay on grid nodes
            if (dist[static_cast<std::size_t>(dst)] < 0) {
                dist[static_cast<std::size_t>(dst)] = dist[static_cast<std::size_t>(v)] + 1;
                queue.push_back(dst);
            }
        }
    }
    throw GraphError("distance_to_output: node " +
                     topo.nodes[static_cast<std::size_t>(node_id)].name() +
                     " cannot reach the terminal node");
}

inline int distance_to_output(const NetworkTopology& topo, int row, int col) {
    return distance_to_output(topo, topo.grid_node_id(row, col));
}

struct NodeParamCount {
    int node = 0;
    std::int64_t count = 0;
};

struct ParamCount {
    std::int64_t total = 0;
    std::vector<NodeParamCount> per_node;
};

/// Learnable parameters per node: kh*kw*in*out conv weights, out biases, and
/// 2*out batch-norm affine terms for nodes that carry BN. Running statistics
/// are not learnable and are not counted.
inline ParamCount count_parameters(const NetworkTopology& topo) {
    ParamCount result;
    const std::int64_t kk =
        static_cast<std::int64_t>(topo.kernel_size) * topo.kernel_size;
    for (const NodeInfo& node : topo.nodes) {
        std::int64_t count = kk * node.in_channels * node.out_channels + node.out_channels;
        if (node.has_batch_norm) count += 2 * static_cast<std::int64_t>(node.out_channels);
        result.per_node.push_back({node.id, count});
        result.total += count;
    }
    return result;
}

inline std::int64_t count_parameters(const LatticeSpec& spec) {
    return count_parameters(build_lattice(spec)).total;
}

/// Smallest wide prefix whose plain-chain parameter total reaches the
/// reference count; throws if even an all-wide chain falls short.
inline int plain_wide_prefix_for(int layers, std::int64_t reference_count, int in_channels,
                                 int filters = 32, int wide_filters = 64,
                                 int kernel_size = 3) {
    for (int wide = 0; wide <= layers - 1; ++wide) {
        const auto count = count_parameters(
            build_plain(layers, wide, in_channels, filters, wide_filters, kernel_size));
        if (count.total >= reference_count) return wide;
    }
    throw ConfigError("no wide prefix reaches " + std::to_string(reference_count) +
                      " parameters with " + std::to_string(layers) + " layers");
}

/// Receptive-field side length: d * (k - 1) + 1 where d is the maximum depth
/// including the output layer (2d + 1 for the paper's 3x3 filters).
inline int receptive_field(const NetworkTopology& topo) {
    if (topo.kernel_size % 2 == 0) {
        throw ConfigError("receptive field defined for odd kernel sizes only");
    }
    const auto [min_d, max_d] = min_max_depth(topo, /*include_output=*/true);
    (void)min_d;
    return max_d * (topo.kernel_size - 1) + 1;
}

struct GraphAnalysis {
    int min_depth_with_output = 0;
    int max_depth_with_output = 0;
    int min_depth_without_output = 0;
    int max_depth_without_output = 0;
    int max_in_degree = 0;
    int max_out_degree = 0;
    std::int64_t total_parameters = 0;
    int receptive_field_side = 0;
    std::vector<int> distance_to_output; // by node id; -1 for the output conv
    ParamCount parameter_breakdown;
};

inline GraphAnalysis analyze_topology(const NetworkTopology& topo) {
    validate_topology(topo);
    GraphAnalysis a;
    const auto with = min_max_depth(topo, true);
    const auto without = min_max_depth(topo, false);
    a.min_depth_with_output = with.first;
    a.max_depth_with_output = with.second;
    a.min_depth_without_output = without.first;
    a.max_depth_without_output = without.second;
    for (const NodeInfo& node : topo.nodes) {
        a.max_in_degree = std::max(
            a.max_in_degree,
            static_cast<int>(topo.in_edges[static_cast<std::size_t>(node.id)].size()));
        a.max_out_degree = std::max(
            a.max_out_degree,
            static_cast<int>(topo.out_edges[static_cast<std::size_t>(node.id)].size()));
    }
    a.parameter_breakdown = count_parameters(topo);
    a.total_parameters = a.parameter_breakdown.total;
    a.receptive_field_side = receptive_field(topo);
    a.distance_to_output.assign(topo.nodes.size(), -1);
    for (const NodeInfo& node : topo.nodes) {
        if (node.id != topo.output_node) {
            a.distance_to_output[static_cast<std::size_t>(node.id)] =
                lfnet::distance_to_output(topo, node.id);
        }
    }
    return a;
}

/// One edge per line: "src -> dst [role]".
inline std::string format_edge_list(const NetworkTopology& topo) {
    std::ostringstream out;
    for (const Edge& e : topo.edges) {
        out << topo.nodes[static_cast<std::size_t>(e.src)].name() << " -> "
            << topo.nodes[static_cast<std::size_t>(e.dst)].name() << " [" << to_string(e.role)
            << "]\n";
    }
    return out.str();
}

/// Per-node adjacency listing with layer kinds and channel counts.
inline std::string format_adjacency(const NetworkTopology& topo) {
    std::ostringstream out;
    for (const NodeInfo& node : topo.nodes) {
        out << node.name() << " [in=" << node.in_channels << " out=" << node.out_channels
            << (node.has_batch_norm ? " conv+bn+relu" : " conv") << "] ->";
        const auto& outs = topo.out_edges[static_cast<std::size_t>(node.id)];
        if (outs.empty()) out << " (none)";
        for (int e : outs) {
            out << ' ' << topo.nodes[static_cast<std::size_t>(topo.edges[static_cast<std::size_t>(e)].dst)].name();
        }
        out << '\n';
    }
    return out.str();
}

} // namespace lfnet
