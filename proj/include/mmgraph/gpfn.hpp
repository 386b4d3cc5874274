#pragma once

// Graph pooling fusion: stack the three modality graphs, convolve the fused graph, pool it
// with fixed windows and then with a learned link-similarity assignment, and average.

#include <array>

#include "mmgraph/graphconv.hpp"

namespace mmgraph {

/// Fused node set in language, acoustic, visual order with each modality's row span.
struct FusedGraph {
    Tensor nodes;
    Tensor adjacency;
    std::array<Window, 3> ranges;
};

struct LinkSimParams {
    Tensor wz;  // T×T' assignment projection
    Tensor ws;  // d×d' embedding projection
};

struct GpfnParams {
    AdjacencySpec adjacency;
    SageParams conv;
    LinkSimParams link;
};

struct GpfnConfig {
    bool window_pool = true;
    Reduce pool_mode = Reduce::Mean;
    std::size_t pool_size = 4;
    bool link_pool = true;
};

inline FusedGraph node_sort(const GraphState& l, const GraphState& a, const GraphState& v,
                            const AdjacencySpec& spec) {
    std::size_t width = 0;
    bool have = false;
    for (const GraphState* g : {&l, &a, &v}) {
        if (g->nodes.rows() == 0) continue;
        if (have && g->nodes.cols() != width)
            throw ShapeError("node_sort: embedding widths differ (" + std::to_string(g->nodes.cols()) + " vs " +
                             std::to_string(width) + ")");
        width = g->nodes.cols();
        have = true;
    }
    FusedGraph f;
    f.nodes = concat_rows({l.nodes, a.nodes, v.nodes});
    std::size_t off = 0;
    const std::array<std::size_t, 3> lens{l.nodes.rows(), a.nodes.rows(), v.nodes.rows()};
    for (std::size_t m = 0; m < 3; ++m) {
        f.ranges[m] = {off, off + lens[m]};
        off += lens[m];
    }
    f.adjacency = build_adjacency(spec, f.nodes).matrix;
    return f;
}

/// Windows of size s laid out inside each span, so no window mixes two modalities.
inline std::vector<Window> aligned_windows(const std::array<Window, 3>& ranges, std::size_t s) {
    std::vector<Window> out;
    for (const auto& r : ranges)
        for (const auto& w : uniform_windows(r.size(), s)) out.push_back({r.begin + w.begin, r.begin + w.end});
    return out;
}

inline GraphState window_pool(const GraphState& g, const std::vector<Window>& windows, Reduce mode) {
    return {window_reduce_rows(g.nodes, windows, mode), window_reduce_blocks(g.adjacency, windows, mode)};
}

inline GraphState mean_pool(const GraphState& g, std::size_t s) {
    return window_pool(g, uniform_windows(g.nodes.rows(), s), Reduce::Mean);
}

inline GraphState max_pool(const GraphState& g, std::size_t s) {
    return window_pool(g, uniform_windows(g.nodes.rows(), s), Reduce::Max);
}

/// Common-neighbor similarity A·Aᵀ.
inline Tensor link_similarity(const Tensor& adjacency) { return matmul(adjacency, transpose(adjacency)); }

/// Z = relu((AAᵀ + A)W_z), S = relu(N W_s); returns (Zᵀ S, Zᵀ A Z).
inline GraphState link_sim_pool(const GraphState& g, const LinkSimParams& p) {
    const std::size_t t = g.nodes.rows();
    if (g.adjacency.rows() != t || g.adjacency.cols() != t)
        throw ShapeError("link_sim_pool: adjacency " + shape_str(g.adjacency.shape()) + " for " +
                         std::to_string(t) + " nodes");
    if (p.wz.rank() != 2 || p.wz.rows() != t)
        throw ShapeError("link_sim_pool: W_z " + shape_str(p.wz.shape()) + " expects " +
                         std::to_string(p.wz.rank() == 2 ? p.wz.rows() : 0) + " nodes, graph has " +
                         std::to_string(t));
    const Tensor z = relu(matmul(add(link_similarity(g.adjacency), g.adjacency), p.wz));
    const Tensor s = relu(matmul(g.nodes, p.ws));
    const Tensor zt = transpose(z);
    return {matmul(zt, s), matmul(matmul(zt, g.adjacency), z)};
}

/// Graph-level representation (1×d') of the three convolved modality graphs.
inline Tensor gpfn_forward(const GraphState& l, const GraphState& a, const GraphState& v, const GpfnParams& p,
                           const GpfnConfig& cfg) {
    const FusedGraph fused = node_sort(l, a, v, p.adjacency);
    GraphState g{sage_stack(fused.nodes, fused.adjacency, p.conv), fused.adjacency};
    if (cfg.window_pool) g = window_pool(g, aligned_windows(fused.ranges, cfg.pool_size), cfg.pool_mode);
    if (cfg.link_pool) g = link_sim_pool(g, p.link);
    return row_mean(g.nodes);
}

/// Node count reaching link-similarity pooling for the given modality lengths.
inline std::size_t pooled_node_count(const std::array<std::size_t, 3>& lengths, const GpfnConfig& cfg) {
    std::size_t n = 0;
    for (auto len : lengths) n += cfg.window_pool ? (len + cfg.pool_size - 1) / cfg.pool_size : len;
    return n;
}

}  // namespace mmgraph
