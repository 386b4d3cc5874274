#pragma once

#include <string>
#include <vector>

#include "mmgraph/adjacency.hpp"

namespace mmgraph {

enum class Modality { Language, Acoustic, Visual };

inline const char* to_string(Modality m) {
    switch (m) {
        case Modality::Language: return "language";
        case Modality::Acoustic: return "acoustic";
        case Modality::Visual: return "visual";
    }
    return "?";
}

/// One modality's T×d node embeddings.
struct ModalSequence {
    Modality modality = Modality::Language;
    Tensor nodes;

    std::size_t length() const { return nodes.rows(); }
};

struct GraphState {
    Tensor nodes;      // T×d
    Tensor adjacency;  // T×T
};

/// Per-iteration weights W^k plus the projection applied to the concatenated iterations.
struct SageParams {
    std::vector<Tensor> layers;  // W^1: d_in×d, W^k: d×d
    Tensor wo;                   // (l·d)×d_out
    Tensor bo;                   // 1×d_out
};

/// D⁻¹(A+I) with D the degree matrix of A+I; every degree is at least 1.
inline Tensor mean_aggregator(const Tensor& adjacency) { return row_normalize(add_identity(adjacency), 0.0); }

/// One GraphSAGE mean iteration given a precomputed aggregator: relu(agg·N·W), rows L2-normalized.
inline Tensor sage_iteration(const Tensor& aggregator, const Tensor& nodes, const Tensor& w) {
    detail::require_rank2(w, "sage_layer");
    if (nodes.cols() != w.rows())
        throw ShapeError("sage_layer: nodes " + shape_str(nodes.shape()) + " vs weight " + shape_str(w.shape()));
    if (aggregator.rows() != nodes.rows())
        throw ShapeError("sage_layer: adjacency order " + std::to_string(aggregator.rows()) + " vs " +
                         std::to_string(nodes.rows()) + " nodes");
    // Multiply in whichever order keeps the T×T product narrow.
    const Tensor mixed = nodes.cols() <= w.cols() ? matmul(matmul(aggregator, nodes), w)
                                                  : matmul(aggregator, matmul(nodes, w));
    return row_l2_normalize(relu(mixed));
}

inline Tensor sage_layer(const GraphState& g, const Tensor& w) {
    return sage_iteration(mean_aggregator(g.adjacency), g.nodes, w);
}

/// l iterations over a fixed adjacency, per-node concatenation, then relu(W_o N' + b_o).
inline Tensor sage_stack(const Tensor& nodes, const Tensor& adjacency, const SageParams& p) {
    if (p.layers.empty()) throw ShapeError("sage: need at least one iteration");
    const Tensor aggregator = mean_aggregator(adjacency);
    std::vector<Tensor> hidden;
    hidden.reserve(p.layers.size());
    Tensor h = nodes;
    for (const auto& w : p.layers) {
        h = sage_iteration(aggregator, h, w);
        hidden.push_back(h);
    }
    const Tensor joined = hidden.size() == 1 ? hidden.front() : concat_cols(hidden);
    return relu(add_bias(matmul(joined, p.wo), p.bo));
}

/// Builds the adjacency once from the input sequence and runs the encoder over it.
inline GraphState unimodal_encode(const ModalSequence& seq, const AdjacencySpec& spec, const SageParams& p) {
    Adjacency adj = build_adjacency(spec, seq.nodes);
    Tensor out = sage_stack(seq.nodes, adj.matrix, p);
    return {std::move(out), std::move(adj.matrix)};
}

}  // namespace mmgraph
