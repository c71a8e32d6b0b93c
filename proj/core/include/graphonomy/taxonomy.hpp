#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "graphonomy/tensor.hpp"

namespace graphonomy::tax {

// Label vocabularies of the shipped datasets, their cross-granularity
// hierarchy and per-dataset body-structure connectivity. Datasets are ordered
// coarse to fine as declared in the taxonomy file.
struct LabelTaxonomy {
    struct Dataset {
        std::string id;
        std::vector<std::string> labels;               // labels[0] is background
        std::vector<std::vector<std::string>> tokens;  // word tokens per label
    };

    std::vector<Dataset> datasets;
    // (coarse_dataset, fine_dataset) -> (coarse_label_idx, fine_label_idx) pairs
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<int, int>>> hierarchy;
    // dataset -> unordered label-index pairs (no self loops stored)
    std::map<std::string, std::vector<std::pair<int, int>>> connectivity;

    int dataset_index(const std::string& id) const {
        for (std::size_t i = 0; i < datasets.size(); ++i)
            if (datasets[i].id == id) return static_cast<int>(i);
        return -1;
    }

    const Dataset& dataset(const std::string& id) const {
        const int i = dataset_index(id);
        if (i < 0) throw ConfigError("unknown dataset '" + id + "'");
        return datasets[static_cast<std::size_t>(i)];
    }

    int label_count(const std::string& id) const {
        return static_cast<int>(dataset(id).labels.size());
    }

    int label_index(const std::string& ds, const std::string& label) const {
        const auto& d = dataset(ds);
        for (std::size_t i = 0; i < d.labels.size(); ++i)
            if (d.labels[i] == label) return static_cast<int>(i);
        return -1;
    }
};

LabelTaxonomy parse_taxonomy(std::istream& in, const std::string& origin);
LabelTaxonomy load_taxonomy(const std::string& path);
void validate_taxonomy(const LabelTaxonomy& tax);

// Unique word tokens over all datasets, sorted.
std::vector<std::string> unique_tokens(const LabelTaxonomy& tax);

// --- word embeddings -----------------------------------------------------------

struct WordEmbeddingTable {
    int dimension = 0;
    std::map<std::string, std::vector<double>> entries;
};

WordEmbeddingTable parse_embeddings(std::istream& in, const std::string& origin);
WordEmbeddingTable load_embeddings(const std::string& path);

// Mean of the label's token vectors; DataError names the label when a token
// is missing from the table.
std::vector<double> label_embedding(const WordEmbeddingTable& table,
                                    const std::vector<std::string>& tokens,
                                    const std::string& label);

// --- derived matrices ----------------------------------------------------------

enum class TransferScheme { handcraft, learnable, feature, semantic };

std::string scheme_name(TransferScheme s);
TransferScheme scheme_from_name(const std::string& name);

template <typename S>
struct AdjacencyMatrix {
    num::Tensor<S> values; // [N x N], normalized symmetric
    std::string dataset_id;
};

template <typename S>
struct TransferMatrix {
    num::Tensor<S> values; // [N_t x N_s]
    TransferScheme scheme = TransferScheme::handcraft;
    std::string source_dataset;
    std::string target_dataset;
};

// D^{-1/2} (A + I) D^{-1/2} over the dataset's 0/1 connectivity. Isolated
// nodes are legal; the self loop keeps them alive.
template <typename S>
AdjacencyMatrix<S> build_adjacency(const LabelTaxonomy& tax, const std::string& dataset_id) {
    const auto& ds = tax.dataset(dataset_id);
    const std::int64_t n = static_cast<std::int64_t>(ds.labels.size());
    std::vector<double> a(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) a[static_cast<std::size_t>(i * n + i)] = 1.0;
    auto conn = tax.connectivity.find(dataset_id);
    if (conn != tax.connectivity.end()) {
        for (const auto& [u, v] : conn->second) {
            a[static_cast<std::size_t>(u * n + v)] = 1.0;
            a[static_cast<std::size_t>(v * n + u)] = 1.0;
        }
    }
    std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::int64_t j = 0; j < n; ++j) deg += a[static_cast<std::size_t>(i * n + j)];
        inv_sqrt_deg[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(deg);
    }
    std::vector<S> out(static_cast<std::size_t>(n * n));
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            out[static_cast<std::size_t>(i * n + j)] = static_cast<S>(
                inv_sqrt_deg[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i * n + j)] *
                inv_sqrt_deg[static_cast<std::size_t>(j)]);
    return {num::Tensor<S>::from({n, n}, std::move(out)), dataset_id};
}

namespace detail {

// Hierarchy pairs between two datasets regardless of which one is coarser,
// returned as (src_label, tgt_label).
inline std::vector<std::pair<int, int>> linked_pairs(const LabelTaxonomy& tax,
                                                     const std::string& src,
                                                     const std::string& tgt) {
    std::vector<std::pair<int, int>> out;
    auto fwd = tax.hierarchy.find({src, tgt});
    if (fwd != tax.hierarchy.end())
        for (const auto& [s, t] : fwd->second) out.emplace_back(s, t);
    auto rev = tax.hierarchy.find({tgt, src});
    if (rev != tax.hierarchy.end())
        for (const auto& [t, s] : rev->second) out.emplace_back(s, t);
    return out;
}

} // namespace detail

// Hard {0,1} transfer weights from the label hierarchy; subordinate relations
// count in either direction, and background maps to background.
template <typename S>
TransferMatrix<S> handcraft_transfer(const LabelTaxonomy& tax, const std::string& src_dataset,
                                     const std::string& tgt_dataset) {
    const std::int64_t ns = tax.label_count(src_dataset);
    const std::int64_t nt = tax.label_count(tgt_dataset);
    const auto pairs = detail::linked_pairs(tax, src_dataset, tgt_dataset);
    if (pairs.empty())
        throw ConfigError("no hierarchy between '" + src_dataset + "' and '" + tgt_dataset + "'");
    std::vector<S> out(static_cast<std::size_t>(nt * ns), S(0));
    out[0] = S(1); // background <-> background
    for (const auto& [s, t] : pairs) out[static_cast<std::size_t>(t * ns + s)] = S(1);
    return {num::Tensor<S>::from({nt, ns}, std::move(out)), TransferScheme::handcraft, src_dataset,
            tgt_dataset};
}

// Row-stochastic transfer weights from word-embedding cosine similarity:
// row i = softmax_j cos(embed(target_i), embed(source_j)).
template <typename S>
TransferMatrix<S> semantic_transfer(const LabelTaxonomy& tax, const WordEmbeddingTable& table,
                                    const std::string& src_dataset, const std::string& tgt_dataset) {
    const auto& src = tax.dataset(src_dataset);
    const auto& tgt = tax.dataset(tgt_dataset);
    const std::int64_t ns = static_cast<std::int64_t>(src.labels.size());
    const std::int64_t nt = static_cast<std::int64_t>(tgt.labels.size());

    auto embed_all = [&](const LabelTaxonomy::Dataset& ds) {
        std::vector<std::vector<double>> vecs;
        vecs.reserve(ds.labels.size());
        for (std::size_t i = 0; i < ds.labels.size(); ++i)
            vecs.push_back(label_embedding(table, ds.tokens[i], ds.id + "/" + ds.labels[i]));
        return vecs;
    };
    const auto es = embed_all(src);
    const auto et = embed_all(tgt);

    auto cosine = [](const std::vector<double>& x, const std::vector<double>& y) {
        double dot = 0.0, nx = 0.0, ny = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            dot += x[k] * y[k];
            nx += x[k] * x[k];
            ny += y[k] * y[k];
        }
        const double denom = std::sqrt(nx) * std::sqrt(ny);
        return denom == 0.0 ? 0.0 : dot / denom;
    };

    std::vector<S> out(static_cast<std::size_t>(nt * ns));
    std::vector<double> row(static_cast<std::size_t>(ns));
    for (std::int64_t i = 0; i < nt; ++i) {
        double mx = -2.0;
        for (std::int64_t j = 0; j < ns; ++j) {
            row[static_cast<std::size_t>(j)] = cosine(et[static_cast<std::size_t>(i)], es[static_cast<std::size_t>(j)]);
            mx = std::max(mx, row[static_cast<std::size_t>(j)]);
        }
        double total = 0.0;
        for (std::int64_t j = 0; j < ns; ++j) {
            row[static_cast<std::size_t>(j)] = std::exp(row[static_cast<std::size_t>(j)] - mx);
            total += row[static_cast<std::size_t>(j)];
        }
        for (std::int64_t j = 0; j < ns; ++j)
            out[static_cast<std::size_t>(i * ns + j)] = static_cast<S>(row[static_cast<std::size_t>(j)] / total);
    }
    return {num::Tensor<S>::from({nt, ns}, std::move(out)), TransferScheme::semantic, src_dataset,
            tgt_dataset};
}

// Total mapping fine label index -> coarse label index (background included).
// Requires each non-background fine label to have exactly one parent between
// these two datasets.
std::vector<int> hierarchy_projection(const LabelTaxonomy& tax, const std::string& fine_dataset,
                                      const std::string& coarse_dataset);

} // namespace graphonomy::tax
