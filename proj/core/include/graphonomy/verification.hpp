#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "graphonomy/graphnn.hpp"
#include "graphonomy/model.hpp"
#include "graphonomy/optim.hpp"
#include "graphonomy/trainer.hpp"

namespace graphonomy::verify {

// The numeric verification suite: every differentiable operation and the
// end-to-end head compared against central finite differences in 64-bit.
// Shared by the gradcheck CLI subcommand and the acceptance tests.

struct CheckResult {
    std::string name;
    bool pass = false;
    double max_rel_error = 0.0;
};

namespace detail {

inline num::Tensor<double> rand_t(num::Shape shape, rng::Stream& s, double lo = -1.0,
                                  double hi = 1.0) {
    std::vector<double> data(static_cast<std::size_t>(num::shape_numel(shape)));
    for (auto& v : data) v = s.uniform(lo, hi);
    return num::Tensor<double>::from(std::move(shape), std::move(data));
}

inline tax::AdjacencyMatrix<double> chain_adjacency(int n, const std::string& id) {
    tax::LabelTaxonomy t;
    tax::LabelTaxonomy::Dataset ds;
    ds.id = id;
    ds.labels.push_back("background");
    ds.tokens.push_back({"background"});
    for (int i = 1; i < n; ++i) {
        ds.labels.push_back("l" + std::to_string(i));
        ds.tokens.push_back({ds.labels.back()});
    }
    t.datasets.push_back(ds);
    auto& edges = t.connectivity[id];
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    return tax::build_adjacency<double>(t, id);
}

} // namespace detail

// Runs `make_objective` for `seeds` seeds; each invocation registers its
// parameters in a fresh store and returns the scalar objective closure.
inline CheckResult run_check(
    const std::string& name, std::uint64_t seeds, double tolerance,
    const std::function<std::function<num::Tensor<double>()>(num::ParameterStore<double>&,
                                                             rng::Stream&)>& make_objective,
    std::int64_t max_coords = 120) {
    CheckResult result{name, true, 0.0};
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        num::ParameterStore<double> store;
        rng::Stream stream(seed, "verify/" + name);
        auto objective = make_objective(store, stream);
        auto report = num::grad_check<double>(objective, store, 1e-5, tolerance, max_coords);
        result.max_rel_error = std::max(result.max_rel_error, report.max_rel_error());
        result.pass = result.pass && report.pass;
    }
    return result;
}

inline std::vector<CheckResult> run_gradient_suite(std::uint64_t seeds, double tolerance) {
    std::vector<CheckResult> results;
    auto add = [&](const std::string& name,
                   std::function<std::function<num::Tensor<double>()>(
                       num::ParameterStore<double>&, rng::Stream&)> make,
                   std::int64_t max_coords = 120) {
        results.push_back(run_check(name, seeds, tolerance, make, max_coords));
    };

    add("matmul", [](auto& store, auto& s) {
        auto& a = store.add("a", detail::rand_t({4, 6}, s));
        auto& b = store.add("b", detail::rand_t({6, 3}, s));
        auto w = detail::rand_t({4, 3}, s);
        return [&a, &b, w]() { return num::sum(num::mul(num::matmul(a, b), w)); };
    });

    add("softmax", [](auto& store, auto& s) {
        auto& x = store.add("x", detail::rand_t({5, 7}, s));
        auto w = detail::rand_t({5, 7}, s);
        return [&x, w]() { return num::sum(num::mul(num::softmax(x, 1), w)); };
    });

    add("activation", [](auto& store, auto& s) {
        auto& x = store.add("x", detail::rand_t({6, 6}, s));
        auto w = detail::rand_t({6, 6}, s);
        return [&x, w]() { return num::sum(num::mul(num::relu(x), w)); };
    });

    add("cross_entropy", [](auto& store, auto& s) {
        auto& x = store.add("logits", detail::rand_t({8, 5}, s));
        std::vector<std::int64_t> labels(8);
        for (auto& l : labels) l = static_cast<std::int64_t>(s.next_below(5));
        return [&x, labels]() { return num::cross_entropy(x, labels); };
    });

    add("conv2d", [](auto& store, auto& s) {
        auto& x = store.add("x", detail::rand_t({20, 3}, s)); // 4x5
        auto& k = store.add("k", detail::rand_t({27, 4}, s));
        auto& b = store.add("b", detail::rand_t({4}, s));
        auto w = detail::rand_t({20, 4}, s);
        return [&x, &k, &b, w]() {
            return num::sum(num::mul(num::conv2d(x, std::int64_t{1}, 4, 5, k, 3, 3, b, 1, 1), w));
        };
    });

    add("upsample", [](auto& store, auto& s) {
        auto& x = store.add("x", detail::rand_t({12, 3}, s)); // 3x4
        auto w = detail::rand_t({48, 3}, s);
        return [&x, w]() {
            return num::sum(num::mul(num::upsample_bilinear(x, std::int64_t{1}, 3, 4, 6, 8), w));
        };
    });

    add("project", [](auto& store, auto& s) {
        static const auto adj = detail::chain_adjacency(7, "p");
        auto& x = store.add("x", detail::rand_t({16, 4}, s));
        auto& pw = store.add("proj", detail::rand_t({4, 7}, s));
        auto& em = store.add("embed", detail::rand_t({4, 8}, s));
        auto w = detail::rand_t({7, 8}, s);
        return [&x, &pw, &em, w]() {
            auto [graph, q] = gnn::project(x, pw, em, adj);
            (void)q;
            return num::sum(num::mul(graph.node_features, w));
        };
    });

    add("gcn_layer", [](auto& store, auto& s) {
        static const auto adj = detail::chain_adjacency(9, "g");
        auto& z = store.add("z", detail::rand_t({9, 6}, s));
        auto& w = store.add("w", detail::rand_t({6, 6}, s));
        auto ws = detail::rand_t({9, 6}, s);
        return [&z, &w, ws]() { return num::sum(num::mul(gnn::gcn_layer(z, adj, w), ws)); };
    });

    add("intra_graph_reasoning", [](auto& store, auto& s) {
        static const auto adj = detail::chain_adjacency(7, "i");
        auto& x = store.add("x", detail::rand_t({64, 4}, s)); // 8x8x4 features
        gnn::IntraGraphParams<double> params{
            store.add("proj", detail::rand_t({4, 7}, s)),
            store.add("embed", detail::rand_t({4, 16}, s)),
            {store.add("gcn0", detail::rand_t({16, 16}, s)),
             store.add("gcn1", detail::rand_t({16, 16}, s)),
             store.add("gcn2", detail::rand_t({16, 16}, s))},
            store.add("reproj", detail::rand_t({16, 4}, s))};
        auto w = detail::rand_t({64, 4}, s);
        return [&x, params, w]() {
            auto [out, graph] = gnn::intra_graph_reasoning(x, adj, params);
            (void)graph;
            return num::sum(num::mul(out, w));
        };
    }, 60);

    add("feature_similarity_transfer", [](auto& store, auto& s) {
        static const auto adj_s = detail::chain_adjacency(8, "fs");
        static const auto adj_t = detail::chain_adjacency(5, "ft");
        auto& zs = store.add("zs", detail::rand_t({8, 6}, s));
        auto& zt = store.add("zt", detail::rand_t({5, 6}, s));
        auto w = detail::rand_t({5, 8}, s);
        return [&zs, &zt, w]() {
            gnn::SemanticGraph<double> src{zs, adj_s, "fs"};
            gnn::SemanticGraph<double> tgt{zt, adj_t, "ft"};
            return num::sum(num::mul(gnn::feature_similarity_transfer(src, tgt).values, w));
        };
    });

    add("inter_graph_transfer", [](auto& store, auto& s) {
        static const auto adj_s = detail::chain_adjacency(8, "is");
        static const auto adj_t = detail::chain_adjacency(5, "it");
        auto& zs = store.add("zs", detail::rand_t({8, 6}, s));
        auto& zt = store.add("zt", detail::rand_t({5, 6}, s));
        auto& wf = store.add("wf", detail::rand_t({6, 6}, s));
        auto& wsem = store.add("wsem", detail::rand_t({6, 6}, s));
        auto& learn = store.add("learnable", detail::rand_t({5, 8}, s));
        auto& wl = store.add("wl", detail::rand_t({6, 6}, s));
        auto sem_static = num::softmax(detail::rand_t({5, 8}, s), 1);
        auto w = detail::rand_t({5, 6}, s);
        return [&zs, &zt, &wf, &wsem, &learn, &wl, sem_static, w]() {
            gnn::SemanticGraph<double> src{zs, adj_s, "is"};
            gnn::SemanticGraph<double> tgt{zt, adj_t, "it"};
            gnn::TransferEdge<double> edge;
            edge.schemes = {tax::TransferScheme::feature, tax::TransferScheme::semantic,
                            tax::TransferScheme::learnable};
            edge.weights[tax::TransferScheme::feature] = wf;
            edge.weights[tax::TransferScheme::semantic] = wsem;
            edge.weights[tax::TransferScheme::learnable] = wl;
            edge.statics[tax::TransferScheme::semantic] = sem_static;
            edge.learnable = learn;
            return num::sum(num::mul(gnn::inter_graph_transfer(tgt, src, edge).node_features, w));
        };
    });

    add("bidirectional_transfer", [](auto& store, auto& s) {
        static const auto adj_a = detail::chain_adjacency(5, "ba");
        static const auto adj_b = detail::chain_adjacency(7, "bb");
        auto& za = store.add("za", detail::rand_t({5, 4}, s));
        auto& zb = store.add("zb", detail::rand_t({7, 4}, s));
        auto& wab = store.add("wab", detail::rand_t({4, 4}, s));
        auto& wba = store.add("wba", detail::rand_t({4, 4}, s));
        auto& post = store.add("post", detail::rand_t({4, 4}, s));
        auto wa = detail::rand_t({5, 4}, s);
        auto wb = detail::rand_t({7, 4}, s);
        return [&za, &zb, &wab, &wba, &post, wa, wb]() {
            gnn::SemanticGraph<double> a{za, adj_a, "ba"};
            gnn::SemanticGraph<double> b{zb, adj_b, "bb"};
            gnn::TransferEdge<double> edge_ab, edge_ba;
            edge_ab.schemes = edge_ba.schemes = {tax::TransferScheme::feature};
            edge_ab.weights[tax::TransferScheme::feature] = wab;
            edge_ba.weights[tax::TransferScheme::feature] = wba;
            auto [oa, ob] = gnn::bidirectional_transfer(a, b, edge_ab, edge_ba, post);
            return num::add(num::sum(num::mul(oa.node_features, wa)),
                            num::sum(num::mul(ob.node_features, wb)));
        };
    });

    add("classify", [](auto& store, auto& s) {
        auto& x = store.add("x", detail::rand_t({12, 6}, s));
        auto& w = store.add("w", detail::rand_t({6, 5}, s));
        auto& b = store.add("b", detail::rand_t({5}, s));
        std::vector<std::int64_t> labels(12);
        for (auto& l : labels) l = static_cast<std::int64_t>(s.next_below(5));
        return [&x, &w, &b, labels]() {
            return num::cross_entropy(num::add_rowvec(num::matmul(x, w), b), labels);
        };
    });

    return results;
}

// Gradient check of the full head on an 8x8 image: backbone, projection,
// intra reasoning, inter transfer, re-projection, classification, upsampling
// and the loss, differentiated with respect to every model parameter.
inline CheckResult run_end_to_end_check(const tax::LabelTaxonomy& taxonomy,
                                        const tax::WordEmbeddingTable& embeddings,
                                        std::uint64_t seeds, double tolerance) {
    CheckResult result{"end_to_end_head", true, 0.0};
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        model::ModelConfig config;
        config.backbone.widths = {3, 4, 5};
        config.backbone.output_stride = 4;
        config.node_dim = 8;
        config.gcn_layers = 3;
        config.graph_mode = model::GraphMode::transfer;
        config.datasets = {"coarse7", "mid18"};
        config.transfer_pairs = {{"coarse7", "mid18"}};
        config.schemes = {tax::TransferScheme::feature, tax::TransferScheme::semantic};
        config.seed = seed + 1000;
        model::ParsingModel<double> m(taxonomy, config, &embeddings);

        rng::Stream s(seed, "verify/e2e");
        std::vector<double> pixels(8 * 8 * 3);
        for (auto& v : pixels) v = s.uniform(0.0, 1.0);
        auto image = seg::make_feature_map(
            num::Tensor<double>::from({64, 3}, std::move(pixels)), 1, 8, 8);
        std::vector<std::int64_t> labels(64);
        for (auto& l : labels) l = static_cast<std::int64_t>(s.next_below(7));

        auto objective = [&]() {
            auto logits = m.forward(image, "coarse7");
            return num::cross_entropy(logits.values, labels);
        };
        auto report = num::grad_check<double>(objective, m.params(), 1e-5, tolerance, 25);
        result.max_rel_error = std::max(result.max_rel_error, report.max_rel_error());
        result.pass = result.pass && report.pass;
    }
    return result;
}

} // namespace graphonomy::verify
