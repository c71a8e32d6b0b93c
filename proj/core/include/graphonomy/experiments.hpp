#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "graphonomy/model.hpp"
#include "graphonomy/trainer.hpp"

namespace graphonomy::experiments {

// In-memory synthetic corpora. Each dataset draws its own disjoint seed
// stream, so the three granularities see different images, mirroring
// separately collected datasets.
struct DataBundle {
    std::map<std::string, std::vector<train::LoadedSample>> train;
    std::map<std::string, std::vector<train::LoadedSample>> test;
};

inline DataBundle make_synthetic_bundle(const tax::LabelTaxonomy& taxonomy, std::uint64_t seed,
                                        int train_count, int test_count,
                                        const synth::SceneConfig& scene) {
    DataBundle bundle;
    for (const auto& ds : taxonomy.datasets) {
        rng::Stream train_seeds(seed, "data/" + ds.id + "/train");
        rng::Stream test_seeds(seed, "data/" + ds.id + "/test");
        for (int i = 0; i < train_count; ++i)
            bundle.train[ds.id].push_back(
                {synth::generate_scene(train_seeds.next_u64(), scene, taxonomy), ds.id});
        for (int i = 0; i < test_count; ++i)
            bundle.test[ds.id].push_back(
                {synth::generate_scene(test_seeds.next_u64(), scene, taxonomy), ds.id});
    }
    return bundle;
}

struct RunSpec {
    model::ModelConfig model;
    train::TrainConfig training;
    std::map<std::string, std::vector<train::LoadedSample>> train_data;
    const train::CheckpointData* init = nullptr;
};

// Builds, optionally warm-starts, and trains one model.
template <typename S>
model::ParsingModel<S> run_training(const tax::LabelTaxonomy& taxonomy,
                                    const tax::WordEmbeddingTable* embeddings, const RunSpec& spec,
                                    std::ostream* log = nullptr) {
    model::ParsingModel<S> m(taxonomy, spec.model, embeddings);
    if (spec.init) train::apply_checkpoint(m.params(), *spec.init);
    train::train_loop(m, spec.train_data, spec.training, log);
    return m;
}

struct AblationRow {
    double baseline = 0.0;       // convolutional network alone
    double intra = 0.0;          // + intra-graph reasoning
    double transfer = 0.0;       // + inter-graph transfer (feature + semantic), warm-started
};

// Table-style component ablation on one target dataset. The transfer arm
// first trains a source model with intra-graph reasoning, then joint-trains
// target plus source graphs with feature+semantic transfer on the target
// data, mirroring the pretrain-then-transfer protocol.
template <typename S>
AblationRow run_ablation(const tax::LabelTaxonomy& taxonomy,
                         const tax::WordEmbeddingTable& embeddings, const DataBundle& bundle,
                         const std::string& target, const std::string& source,
                         const model::ModelConfig& base_model, const train::TrainConfig& base_train,
                         std::uint64_t run_seed, std::ostream* log = nullptr) {
    AblationRow row;
    const metrics::MetricsOptions options{};

    auto spec_for = [&](model::GraphMode mode, std::vector<std::string> datasets,
                        std::vector<std::pair<std::string, std::string>> pairs) {
        RunSpec spec;
        spec.model = base_model;
        spec.model.graph_mode = mode;
        spec.model.datasets = std::move(datasets);
        spec.model.transfer_pairs = std::move(pairs);
        spec.model.seed = run_seed;
        spec.training = base_train;
        spec.training.seed = run_seed;
        return spec;
    };

    {
        auto spec = spec_for(model::GraphMode::none, {target}, {});
        spec.train_data = {{target, bundle.train.at(target)}};
        auto m = run_training<S>(taxonomy, &embeddings, spec, log);
        row.baseline = train::evaluate(m, bundle.test.at(target), target, options).mean_iou;
    }
    {
        auto spec = spec_for(model::GraphMode::intra, {target}, {});
        spec.train_data = {{target, bundle.train.at(target)}};
        auto m = run_training<S>(taxonomy, &embeddings, spec, log);
        row.intra = train::evaluate(m, bundle.test.at(target), target, options).mean_iou;
    }
    {
        auto pretrain = spec_for(model::GraphMode::intra, {source}, {});
        pretrain.train_data = {{source, bundle.train.at(source)}};
        auto source_model = run_training<S>(taxonomy, &embeddings, pretrain, log);
        const auto warm = train::build_checkpoint(source_model.params(), 0, "");

        auto spec = spec_for(model::GraphMode::transfer, {source, target}, {{source, target}});
        spec.train_data = {{target, bundle.train.at(target)}};
        spec.init = &warm;
        auto m = run_training<S>(taxonomy, &embeddings, spec, log);
        row.transfer = train::evaluate(m, bundle.test.at(target), target, options).mean_iou;
    }
    return row;
}

} // namespace graphonomy::experiments
