#include "graphonomy/taxonomy.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace graphonomy::tax {

namespace {

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

} // namespace

LabelTaxonomy parse_taxonomy(std::istream& in, const std::string& origin) {
    LabelTaxonomy tax;
    enum class Section { none, labels, edges, hierarchy };
    Section section = Section::none;
    std::string cur_dataset, cur_coarse, cur_fine;
    std::string line;
    int line_no = 0;

    auto fail = [&](const std::string& msg) {
        throw ParseError(origin + ":" + std::to_string(line_no) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') fail("unterminated section header");
            const auto parts = split_ws(line.substr(1, line.size() - 2));
            if (parts.size() != 2) fail("section header needs a kind and an argument");
            if (parts[0] == "labels") {
                if (tax.dataset_index(parts[1]) >= 0) fail("dataset '" + parts[1] + "' declared twice");
                tax.datasets.push_back({parts[1], {}, {}});
                cur_dataset = parts[1];
                section = Section::labels;
            } else if (parts[0] == "edges") {
                if (tax.dataset_index(parts[1]) < 0) fail("edges for unknown dataset '" + parts[1] + "'");
                cur_dataset = parts[1];
                section = Section::edges;
            } else if (parts[0] == "hierarchy") {
                const auto pair = split_on(parts[1], ':');
                if (pair.size() != 2) fail("hierarchy header must be <coarse>:<fine>");
                if (tax.dataset_index(pair[0]) < 0) fail("unknown dataset '" + pair[0] + "'");
                if (tax.dataset_index(pair[1]) < 0) fail("unknown dataset '" + pair[1] + "'");
                cur_coarse = pair[0];
                cur_fine = pair[1];
                section = Section::hierarchy;
            } else {
                fail("unknown section kind '" + parts[0] + "'");
            }
            continue;
        }

        switch (section) {
        case Section::none:
            fail("content before any section header");
            break;
        case Section::labels: {
            const auto words = split_ws(line);
            auto& ds = tax.datasets.back();
            const std::string& name = words[0];
            for (const auto& existing : ds.labels)
                if (existing == name) fail("duplicate label '" + name + "'");
            ds.labels.push_back(name);
            // Tokens: explicit words after the name, else the name split on '_'.
            if (words.size() > 1)
                ds.tokens.push_back({words.begin() + 1, words.end()});
            else
                ds.tokens.push_back(split_on(name, '_'));
            break;
        }
        case Section::edges: {
            const auto words = split_ws(line);
            if (words.size() != 2) fail("edge line needs exactly two labels");
            const int u = tax.label_index(cur_dataset, words[0]);
            const int v = tax.label_index(cur_dataset, words[1]);
            if (u < 0) fail("unknown label '" + words[0] + "' in dataset '" + cur_dataset + "'");
            if (v < 0) fail("unknown label '" + words[1] + "' in dataset '" + cur_dataset + "'");
            if (u == v) fail("self loop on '" + words[0] + "'");
            tax.connectivity[cur_dataset].emplace_back(u, v);
            break;
        }
        case Section::hierarchy: {
            const auto words = split_ws(line);
            if (words.size() != 2) fail("hierarchy line needs <coarse_label> <fine_label>");
            const int c = tax.label_index(cur_coarse, words[0]);
            const int f = tax.label_index(cur_fine, words[1]);
            if (c < 0) fail("unknown label '" + words[0] + "' in dataset '" + cur_coarse + "'");
            if (f < 0) fail("unknown label '" + words[1] + "' in dataset '" + cur_fine + "'");
            tax.hierarchy[{cur_coarse, cur_fine}].emplace_back(c, f);
            break;
        }
        }
    }
    if (tax.datasets.empty()) throw ParseError(origin + ": no datasets declared");
    validate_taxonomy(tax);
    return tax;
}

LabelTaxonomy load_taxonomy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open taxonomy file '" + path + "'");
    return parse_taxonomy(in, path);
}

void validate_taxonomy(const LabelTaxonomy& tax) {
    for (const auto& ds : tax.datasets) {
        if (ds.labels.empty()) throw TaxonomyError("dataset '" + ds.id + "' has no labels");
        if (ds.labels[0] != "background")
            throw TaxonomyError("dataset '" + ds.id + "' must list background first, got '" +
                                ds.labels[0] + "'");
        for (const auto& toks : ds.tokens)
            if (toks.empty()) throw TaxonomyError("dataset '" + ds.id + "' has a label without tokens");
    }
    // Every non-background label of a finer dataset needs at least one parent
    // in the next-coarser dataset (declaration order is coarse to fine).
    for (std::size_t di = 1; di < tax.datasets.size(); ++di) {
        const auto& coarse = tax.datasets[di - 1];
        const auto& fine = tax.datasets[di];
        auto it = tax.hierarchy.find({coarse.id, fine.id});
        if (it == tax.hierarchy.end())
            throw TaxonomyError("no hierarchy between '" + coarse.id + "' and '" + fine.id + "'");
        std::vector<int> parents(fine.labels.size(), 0);
        for (const auto& [c, f] : it->second) {
            (void)c;
            parents[static_cast<std::size_t>(f)]++;
        }
        for (std::size_t li = 1; li < fine.labels.size(); ++li)
            if (parents[li] == 0)
                throw TaxonomyError("label '" + fine.labels[li] + "' of '" + fine.id +
                                    "' has no parent in '" + coarse.id + "'");
    }
    for (const auto& [ds_id, edges] : tax.connectivity) {
        const int n = tax.label_count(ds_id);
        for (const auto& [u, v] : edges)
            if (u < 0 || v < 0 || u >= n || v >= n)
                throw TaxonomyError("connectivity edge out of range in '" + ds_id + "'");
    }
}

std::vector<std::string> unique_tokens(const LabelTaxonomy& tax) {
    std::set<std::string> seen;
    for (const auto& ds : tax.datasets)
        for (const auto& toks : ds.tokens) seen.insert(toks.begin(), toks.end());
    return {seen.begin(), seen.end()};
}

WordEmbeddingTable parse_embeddings(std::istream& in, const std::string& origin) {
    WordEmbeddingTable table;
    std::string line;
    int line_no = 0;

    auto fail = [&](const std::string& msg) {
        throw ParseError(origin + ":" + std::to_string(line_no) + ": " + msg);
    };

    ++line_no;
    if (!std::getline(in, line)) fail("missing header line");
    std::istringstream header(line);
    long long count = -1;
    int dim = -1;
    if (!(header >> count >> dim) || count < 0 || dim <= 0) fail("header must be '<count> <dim>'");
    table.dimension = dim;

    for (long long i = 0; i < count; ++i) {
        ++line_no;
        if (!std::getline(in, line)) fail("expected " + std::to_string(count) + " entries, file ended");
        std::istringstream is(line);
        std::string token;
        if (!(is >> token)) fail("empty entry line");
        std::vector<double> vec(static_cast<std::size_t>(dim));
        for (int k = 0; k < dim; ++k)
            if (!(is >> vec[static_cast<std::size_t>(k)]))
                fail("entry '" + token + "' has fewer than " + std::to_string(dim) + " values");
        double extra;
        if (is >> extra) fail("entry '" + token + "' has more than " + std::to_string(dim) + " values");
        if (table.entries.count(token)) throw DataError(origin + ":" + std::to_string(line_no) +
                                                        ": duplicate token '" + token + "'");
        table.entries.emplace(std::move(token), std::move(vec));
    }
    return table;
}

WordEmbeddingTable load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file '" + path + "'");
    return parse_embeddings(in, path);
}

std::vector<double> label_embedding(const WordEmbeddingTable& table,
                                    const std::vector<std::string>& tokens,
                                    const std::string& label) {
    std::vector<double> acc(static_cast<std::size_t>(table.dimension), 0.0);
    for (const auto& tok : tokens) {
        auto it = table.entries.find(tok);
        if (it == table.entries.end())
            throw DataError("label '" + label + "': no embedding for token '" + tok + "'");
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += it->second[k];
    }
    for (auto& v : acc) v /= static_cast<double>(tokens.size());
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    if (norm == 0.0) throw DataError("label '" + label + "': zero-norm embedding");
    return acc;
}

std::string scheme_name(TransferScheme s) {
    switch (s) {
    case TransferScheme::handcraft: return "handcraft";
    case TransferScheme::learnable: return "learnable";
    case TransferScheme::feature: return "feature";
    case TransferScheme::semantic: return "semantic";
    }
    return "?";
}

TransferScheme scheme_from_name(const std::string& name) {
    if (name == "handcraft") return TransferScheme::handcraft;
    if (name == "learnable") return TransferScheme::learnable;
    if (name == "feature") return TransferScheme::feature;
    if (name == "semantic") return TransferScheme::semantic;
    throw ConfigError("unknown transfer scheme '" + name + "'");
}

std::vector<int> hierarchy_projection(const LabelTaxonomy& tax, const std::string& fine_dataset,
                                      const std::string& coarse_dataset) {
    const auto& fine = tax.dataset(fine_dataset);
    auto it = tax.hierarchy.find({coarse_dataset, fine_dataset});
    if (it == tax.hierarchy.end())
        throw TaxonomyError("no hierarchy from '" + coarse_dataset + "' to '" + fine_dataset + "'");
    std::vector<int> mapping(fine.labels.size(), -1);
    mapping[0] = 0; // background -> background
    for (const auto& [c, f] : it->second) {
        if (f == 0) continue;
        if (mapping[static_cast<std::size_t>(f)] >= 0 && mapping[static_cast<std::size_t>(f)] != c)
            throw TaxonomyError("label '" + fine.labels[static_cast<std::size_t>(f)] + "' of '" +
                                fine_dataset + "' has multiple parents in '" + coarse_dataset + "'");
        mapping[static_cast<std::size_t>(f)] = c;
    }
    for (std::size_t i = 1; i < mapping.size(); ++i)
        if (mapping[i] < 0)
            throw TaxonomyError("label '" + fine.labels[i] + "' of '" + fine_dataset +
                                "' has no parent in '" + coarse_dataset + "'");
    return mapping;
}

} // namespace graphonomy::tax
