#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "graphonomy/graphnn.hpp"
#include "graphonomy/segnet.hpp"
#include "graphonomy/taxonomy.hpp"

namespace graphonomy::model {

enum class GraphMode { none, intra, transfer };

inline std::string graph_mode_name(GraphMode m) {
    switch (m) {
    case GraphMode::none: return "none";
    case GraphMode::intra: return "intra";
    case GraphMode::transfer: return "transfer";
    }
    return "?";
}

inline GraphMode graph_mode_from_name(const std::string& name) {
    if (name == "none") return GraphMode::none;
    if (name == "intra") return GraphMode::intra;
    if (name == "transfer") return GraphMode::transfer;
    throw ConfigError("unknown graph mode '" + name + "'");
}

struct ModelConfig {
    seg::BackboneConfig backbone;
    int node_dim = 128;
    int gcn_layers = 3;
    GraphMode graph_mode = GraphMode::intra;
    std::vector<std::string> datasets; // datasets with a head and a graph
    // Bidirectional transfer edges; only consulted in transfer mode.
    std::vector<std::pair<std::string, std::string>> transfer_pairs;
    std::vector<tax::TransferScheme> schemes{tax::TransferScheme::feature,
                                             tax::TransferScheme::semantic};
    std::uint64_t seed = 0;
};

// The full parsing network: shared convolutional backbone, shared graph
// machinery (node embedding, stacked GCN weights, re-projection), per-dataset
// projection scores and classifiers, and per directed pair transfer weights.
template <typename S>
class ParsingModel {
public:
    ParsingModel(const tax::LabelTaxonomy& taxonomy, ModelConfig config,
                 const tax::WordEmbeddingTable* embeddings = nullptr)
        : taxonomy_(taxonomy), config_(std::move(config)) {
        if (config_.datasets.empty()) throw ConfigError("model: no datasets configured");
        const std::uint64_t seed = config_.seed;
        backbone_ = seg::init_backbone(config_.backbone, store_, seed);
        const std::int64_t c = config_.backbone.feature_channels();
        const std::int64_t d = config_.node_dim;

        for (const auto& ds : config_.datasets) {
            const std::int64_t n = taxonomy_.label_count(ds);
            adjacency_[ds] = tax::build_adjacency<S>(taxonomy_, ds);
            classify_[ds] = seg::init_classify<S>(ds, c, n, store_, seed);
            if (config_.graph_mode != GraphMode::none) {
                const std::string name = "head/" + ds + "/proj";
                proj_[ds] = store_.add(name, num::uniform_init<S>({c, n}, c, seed, name));
            }
        }

        if (config_.graph_mode != GraphMode::none) {
            node_embed_ = store_.add("head/shared/node_embed",
                                     num::uniform_init<S>({c, d}, c, seed, "head/shared/node_embed"));
            for (int i = 0; i < config_.gcn_layers; ++i) {
                const std::string name = "head/shared/gcn" + std::to_string(i);
                gcn_weights_.push_back(store_.add(name, num::uniform_init<S>({d, d}, d, seed, name)));
            }
            reproj_ = store_.add("head/shared/reproj",
                                 num::uniform_init<S>({d, c}, d, seed, "head/shared/reproj"));
        }

        if (config_.graph_mode == GraphMode::transfer) {
            if (config_.transfer_pairs.empty())
                throw ConfigError("model: transfer mode needs at least one transfer pair");
            if (config_.schemes.empty()) throw ConfigError("model: transfer mode needs schemes");
            post_gcn_ = store_.add("head/shared/post_transfer_gcn",
                                   num::uniform_init<S>({d, d}, d, seed,
                                                        "head/shared/post_transfer_gcn"));
            for (const auto& [a, b] : config_.transfer_pairs) {
                init_edge(a, b, embeddings);
                init_edge(b, a, embeddings);
            }
        }
    }

    const ModelConfig& config() const { return config_; }
    const tax::LabelTaxonomy& taxonomy() const { return taxonomy_; }
    num::ParameterStore<S>& params() { return store_; }
    const num::ParameterStore<S>& params() const { return store_; }
    const tax::AdjacencyMatrix<S>& adjacency(const std::string& ds) const {
        return adjacency_.at(ds);
    }

    gnn::IntraGraphParams<S> intra_params(const std::string& ds) const {
        return {proj_.at(ds), node_embed_, gcn_weights_, reproj_};
    }

    // Logits at full input resolution for one same-dataset batch.
    seg::FeatureMap<S> forward(const seg::FeatureMap<S>& image, const std::string& dataset_id) {
        if (!classify_.count(dataset_id))
            throw ConfigError("model: dataset '" + dataset_id + "' has no head");
        seg::FeatureMap<S> features = seg::backbone_forward(image, config_.backbone, backbone_);
        seg::FeatureMap<S> enhanced = enhance(features, dataset_id);
        seg::FeatureMap<S> logits = seg::classify(enhanced, classify_.at(dataset_id));
        return seg::upsample_bilinear(logits, image.height, image.width);
    }

private:
    void init_edge(const std::string& src, const std::string& tgt,
                   const tax::WordEmbeddingTable* embeddings) {
        const std::string key = src + "->" + tgt;
        gnn::TransferEdge<S> edge;
        edge.schemes = config_.schemes;
        const std::int64_t d = config_.node_dim;
        const std::int64_t ns = taxonomy_.label_count(src);
        const std::int64_t nt = taxonomy_.label_count(tgt);
        for (const auto scheme : config_.schemes) {
            const std::string wname = "transfer/" + key + "/" + tax::scheme_name(scheme) + "/w_tr";
            edge.weights[scheme] = store_.add(wname, num::uniform_init<S>({d, d}, d, config_.seed, wname));
            switch (scheme) {
            case tax::TransferScheme::handcraft:
                edge.statics[scheme] = tax::handcraft_transfer<S>(taxonomy_, src, tgt).values;
                break;
            case tax::TransferScheme::semantic:
                if (!embeddings)
                    throw ConfigError("model: semantic scheme needs a word embedding table");
                edge.statics[scheme] = tax::semantic_transfer<S>(taxonomy_, *embeddings, src, tgt).values;
                break;
            case tax::TransferScheme::learnable: {
                const std::string aname = "transfer/" + key + "/learnable/a_tr";
                edge.learnable = store_.add(aname, num::uniform_init<S>({nt, ns}, ns, config_.seed, aname));
                break;
            }
            case tax::TransferScheme::feature:
                break; // computed per forward pass
            }
        }
        edges_[{src, tgt}] = std::move(edge);
    }

    // Graph enhancement of backbone features, image by image. The assignment
    // is per image, so graphs are built and transferred per image as well.
    seg::FeatureMap<S> enhance(const seg::FeatureMap<S>& features, const std::string& dataset_id) {
        if (config_.graph_mode == GraphMode::none) return features;
        const std::int64_t hw = features.height * features.width;
        std::vector<num::Tensor<S>> rows;
        rows.reserve(static_cast<std::size_t>(features.batch));

        // Datasets whose graphs feed this head through a transfer pair.
        std::vector<std::pair<std::string, bool>> sources; // (other dataset, pair order a==target)
        if (config_.graph_mode == GraphMode::transfer) {
            for (const auto& [a, b] : config_.transfer_pairs) {
                if (a == dataset_id) sources.emplace_back(b, true);
                else if (b == dataset_id) sources.emplace_back(a, true);
            }
        }

        for (std::int64_t i = 0; i < features.batch; ++i) {
            num::Tensor<S> pixels = num::slice_rows(features.values, i * hw, (i + 1) * hw);
            auto [graph, assignment] =
                gnn::project(pixels, proj_.at(dataset_id), node_embed_, adjacency_.at(dataset_id));
            num::Tensor<S> z = graph.node_features;
            for (const auto& w : gcn_weights_) z = gnn::gcn_layer(z, graph.adjacency, w);

            if (!sources.empty()) {
                gnn::SemanticGraph<S> target{z, graph.adjacency, dataset_id};
                for (const auto& [src_ds, unused] : sources) {
                    (void)unused;
                    auto [src_graph, src_assign] = gnn::project(
                        pixels, proj_.at(src_ds), node_embed_, adjacency_.at(src_ds));
                    (void)src_assign;
                    num::Tensor<S> sz = src_graph.node_features;
                    for (const auto& w : gcn_weights_) sz = gnn::gcn_layer(sz, src_graph.adjacency, w);
                    gnn::SemanticGraph<S> evolved_src{sz, src_graph.adjacency, src_ds};
                    target = gnn::inter_graph_transfer(target, evolved_src, edges_.at({src_ds, dataset_id}));
                }
                z = gnn::gcn_layer(target.node_features, graph.adjacency, post_gcn_);
            }

            rows.push_back(gnn::reproject(pixels, assignment, z, reproj_));
        }
        return seg::make_feature_map(num::concat_rows(rows), features.batch, features.height,
                                     features.width);
    }

    tax::LabelTaxonomy taxonomy_;
    ModelConfig config_;
    num::ParameterStore<S> store_;
    seg::BackboneParams<S> backbone_;
    std::map<std::string, tax::AdjacencyMatrix<S>> adjacency_;
    std::map<std::string, seg::ClassifyParams<S>> classify_;
    std::map<std::string, num::Tensor<S>> proj_;
    num::Tensor<S> node_embed_;
    std::vector<num::Tensor<S>> gcn_weights_;
    num::Tensor<S> reproj_;
    num::Tensor<S> post_gcn_;
    std::map<std::pair<std::string, std::string>, gnn::TransferEdge<S>> edges_;
};

} // namespace graphonomy::model
