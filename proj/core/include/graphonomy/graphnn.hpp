#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "graphonomy/segnet.hpp"
#include "graphonomy/taxonomy.hpp"
#include "graphonomy/tensor.hpp"

namespace graphonomy::gnn {

// High-level graph representation of one dataset's labels: N node-feature
// vectors plus the normalized body-structure adjacency.
template <typename S>
struct SemanticGraph {
    num::Tensor<S> node_features; // [N x D]
    tax::AdjacencyMatrix<S> adjacency;
    std::string dataset_id;
};

// Soft pixel-to-node assignment; rows sum to 1.
template <typename S>
struct AssignmentMatrix {
    num::Tensor<S> values; // [HW x N]
};

// Assignment mass below this floor is clamped before node pooling.
inline constexpr double kMassFloor = 1e-6;

// Pixel-to-graph projection for a single image. Pixels are softly assigned to
// nodes (softmax over node scores), each node pools its assigned features
// normalized by total assignment mass, and a linear embedding maps the pooled
// C-vector to node dimension D. Differentiable end to end; the assignment is
// reused for re-projection.
template <typename S>
std::pair<SemanticGraph<S>, AssignmentMatrix<S>> project(const num::Tensor<S>& pixels,
                                                         const num::Tensor<S>& proj_weight,
                                                         const num::Tensor<S>& node_embed,
                                                         const tax::AdjacencyMatrix<S>& adjacency) {
    if (pixels.rank() != 2 || proj_weight.rank() != 2 || pixels.dim(1) != proj_weight.dim(0))
        throw DimensionError("project: pixels " + num::shape_str(pixels.shape()) +
                             " vs proj_weight " + num::shape_str(proj_weight.shape()));
    if (node_embed.rank() != 2 || node_embed.dim(0) != pixels.dim(1))
        throw DimensionError("project: node_embed " + num::shape_str(node_embed.shape()) +
                             " vs " + std::to_string(pixels.dim(1)) + " channels");
    if (proj_weight.dim(1) != adjacency.values.dim(0))
        throw DimensionError("project: proj_weight maps to " + std::to_string(proj_weight.dim(1)) +
                             " nodes but adjacency has " + std::to_string(adjacency.values.dim(0)));

    num::Tensor<S> q = num::softmax(num::matmul(pixels, proj_weight), 1); // [HW x N]
    num::Tensor<S> mass = num::colsum(q);                                 // [N]
    num::Tensor<S> pooled = num::matmul(num::transpose(q), pixels);      // [N x C]
    num::Tensor<S> normalized = num::div_rows_clamped(pooled, mass, static_cast<S>(kMassFloor));
    num::Tensor<S> z = num::matmul(normalized, node_embed); // [N x D]
    return {SemanticGraph<S>{std::move(z), adjacency, adjacency.dataset_id},
            AssignmentMatrix<S>{std::move(q)}};
}

// One graph convolution: relu(A Z W).
template <typename S>
num::Tensor<S> gcn_layer(const num::Tensor<S>& z, const tax::AdjacencyMatrix<S>& adjacency,
                         const num::Tensor<S>& weight) {
    z.ensure_finite("gcn_layer");
    return num::relu(num::matmul(num::matmul(adjacency.values, z), weight));
}

// Re-projection of graph nodes back onto pixels through the assignment, with
// a residual connection onto the original features.
template <typename S>
num::Tensor<S> reproject(const num::Tensor<S>& pixels, const AssignmentMatrix<S>& assignment,
                         const num::Tensor<S>& node_features, const num::Tensor<S>& reproj_weight) {
    return num::add(pixels, num::matmul(assignment.values, num::matmul(node_features, reproj_weight)));
}

template <typename S>
struct IntraGraphParams {
    num::Tensor<S> proj_weight;               // [C x N]
    num::Tensor<S> node_embed;                // [C x D]
    std::vector<num::Tensor<S>> gcn_weights;  // stacked [D x D]
    num::Tensor<S> reproj_weight;             // [D x C]
};

// Full intra-graph reasoning over one image: project, propagate through the
// stacked graph convolutions, re-project with residual. Returns the enhanced
// pixels and the evolved graph (reused by inter-graph transfer).
template <typename S>
std::pair<num::Tensor<S>, SemanticGraph<S>> intra_graph_reasoning(
    const num::Tensor<S>& pixels, const tax::AdjacencyMatrix<S>& adjacency,
    const IntraGraphParams<S>& params) {
    auto [graph, assignment] = project(pixels, params.proj_weight, params.node_embed, adjacency);
    num::Tensor<S> z = graph.node_features;
    for (const auto& w : params.gcn_weights) z = gcn_layer(z, adjacency, w);
    num::Tensor<S> out = reproject(pixels, assignment, z, params.reproj_weight);
    return {std::move(out), SemanticGraph<S>{std::move(z), adjacency, adjacency.dataset_id}};
}

// Dynamic transfer matrix from node-feature similarity:
// a[i][j] = softmax_j cos(target_i, source_j). Recomputed every forward pass;
// gradients flow into both graphs.
template <typename S>
tax::TransferMatrix<S> feature_similarity_transfer(const SemanticGraph<S>& source,
                                                   const SemanticGraph<S>& target) {
    num::Tensor<S> sim = num::cosine_rows(target.node_features, source.node_features);
    return {num::softmax(sim, 1), tax::TransferScheme::feature, source.dataset_id,
            target.dataset_id};
}

// Everything one directed transfer edge (source -> target) needs at forward
// time: the scheme set, one W_tr per scheme, static matrices for the
// handcraft/semantic schemes and the learnable matrix when enabled.
template <typename S>
struct TransferEdge {
    std::vector<tax::TransferScheme> schemes;
    std::map<tax::TransferScheme, num::Tensor<S>> weights;  // W_tr per scheme [D_s x D_t]
    std::map<tax::TransferScheme, num::Tensor<S>> statics;  // A_tr for handcraft/semantic
    num::Tensor<S> learnable;                               // A_tr parameter, when enabled
};

// Z_t + sum over schemes of relu(A_tr Z_s W_tr). The per-scheme messages sum,
// so scheme combination is additive and the zero-weight case is the identity.
template <typename S>
SemanticGraph<S> inter_graph_transfer(const SemanticGraph<S>& target,
                                      const SemanticGraph<S>& source,
                                      const TransferEdge<S>& edge) {
    if (edge.schemes.empty()) throw ConfigError("inter_graph_transfer: empty scheme set");
    num::Tensor<S> z = target.node_features;
    for (const auto scheme : edge.schemes) {
        num::Tensor<S> a_tr;
        switch (scheme) {
        case tax::TransferScheme::feature:
            a_tr = feature_similarity_transfer(source, target).values;
            break;
        case tax::TransferScheme::learnable:
            if (!edge.learnable.defined())
                throw ConfigError("inter_graph_transfer: learnable matrix not initialized");
            a_tr = edge.learnable;
            break;
        default: {
            auto it = edge.statics.find(scheme);
            if (it == edge.statics.end())
                throw ConfigError("inter_graph_transfer: no static matrix for scheme " +
                                  tax::scheme_name(scheme));
            a_tr = it->second;
            break;
        }
        }
        auto wit = edge.weights.find(scheme);
        if (wit == edge.weights.end())
            throw ConfigError("inter_graph_transfer: no W_tr for scheme " + tax::scheme_name(scheme));
        z = num::add(z, num::relu(num::matmul(num::matmul(a_tr, source.node_features), wit->second)));
    }
    return {std::move(z), target.adjacency, target.dataset_id};
}

// Joint transfer of a pair of graphs. Both residual updates are computed from
// the pre-transfer inputs (simultaneous semantics), then each side is
// propagated once more over its own adjacency.
template <typename S>
std::pair<SemanticGraph<S>, SemanticGraph<S>> bidirectional_transfer(
    const SemanticGraph<S>& graph_a, const SemanticGraph<S>& graph_b,
    const TransferEdge<S>& a_to_b, const TransferEdge<S>& b_to_a,
    const num::Tensor<S>& post_gcn_weight) {
    SemanticGraph<S> b_mid = inter_graph_transfer(graph_b, graph_a, a_to_b);
    SemanticGraph<S> a_mid = inter_graph_transfer(graph_a, graph_b, b_to_a);
    SemanticGraph<S> a_out{gcn_layer(a_mid.node_features, graph_a.adjacency, post_gcn_weight),
                           graph_a.adjacency, graph_a.dataset_id};
    SemanticGraph<S> b_out{gcn_layer(b_mid.node_features, graph_b.adjacency, post_gcn_weight),
                           graph_b.adjacency, graph_b.dataset_id};
    return {std::move(a_out), std::move(b_out)};
}

} // namespace graphonomy::gnn
