#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "graphonomy/trainer.hpp"
#include "test_support.hpp"

using namespace graphonomy;

namespace {

const tax::LabelTaxonomy& taxonomy() {
    static tax::LabelTaxonomy t =
        tax::load_taxonomy(GRAPHONOMY_SOURCE_DIR "/data/taxonomy_human.txt");
    return t;
}

model::ModelConfig tiny_model_config(std::vector<std::string> datasets,
                                     model::GraphMode mode = model::GraphMode::intra,
                                     std::uint64_t seed = 5) {
    model::ModelConfig config;
    config.backbone.widths = {4, 6, 8};
    config.backbone.output_stride = 4;
    config.node_dim = 8;
    config.gcn_layers = 3;
    config.graph_mode = mode;
    config.datasets = std::move(datasets);
    config.schemes = {tax::TransferScheme::feature};
    config.seed = seed;
    return config;
}

train::TrainConfig tiny_train_config() {
    train::TrainConfig config;
    config.batch_size = 2;
    config.resolution = 32;
    config.max_steps = 5;
    config.augment = true;
    config.seed = 9;
    return config;
}

std::map<std::string, std::vector<train::LoadedSample>> tiny_data(const std::string& ds, int count,
                                                                  int resolution = 32) {
    synth::SceneConfig scene;
    scene.resolution = resolution;
    std::map<std::string, std::vector<train::LoadedSample>> data;
    for (int i = 0; i < count; ++i)
        data[ds].push_back({synth::generate_scene(static_cast<std::uint64_t>(100 + i), scene,
                                                  taxonomy()),
                            ds});
    return data;
}

} // namespace

TEST_CASE("poly learning rate schedule") {
    train::TrainConfig config;
    CHECK(train::poly_lr(0, 100, config) == doctest::Approx(0.007).epsilon(1e-15));
    CHECK(train::poly_lr(100, 100, config) == 0.0);
    CHECK(train::poly_lr(50, 100, config) ==
          doctest::Approx(0.007 * std::pow(0.5, 0.9)).epsilon(1e-12));
    CHECK_THROWS_AS(train::poly_lr(101, 100, config), UsageError);
    CHECK_THROWS_AS(train::poly_lr(-1, 100, config), UsageError);
    double prev = 1.0;
    for (int s = 0; s <= 100; ++s) {
        const double lr = train::poly_lr(s, 100, config);
        CHECK(lr < prev);
        prev = lr;
    }
}

TEST_CASE("augment: double flip is the identity") {
    synth::SceneConfig scene;
    scene.resolution = 32;
    auto sample = synth::generate_scene(77, scene, taxonomy());
    auto twice = train::flip_horizontal(train::flip_horizontal(sample));
    CHECK(twice.image == sample.image);
    CHECK(twice.masks == sample.masks);
}

TEST_CASE("augment: unit scale, zero offsets and no flip is the identity") {
    synth::SceneConfig scene;
    scene.resolution = 32;
    auto sample = synth::generate_scene(78, scene, taxonomy());
    train::TrainConfig config;
    config.resolution = 32;
    config.scale_min = config.scale_max = 1.0;
    config.flip_prob = 0.0;
    rng::Stream stream(1, "test/augid");
    auto out = train::augment(sample, config, stream, taxonomy());
    CHECK(out.image == sample.image);
    CHECK(out.masks == sample.masks);
}

TEST_CASE("augment keeps masks hierarchy-consistent over 100 samples") {
    synth::SceneConfig scene;
    scene.resolution = 32;
    train::TrainConfig config;
    config.resolution = 32;
    const auto fine_to_mid = tax::hierarchy_projection(taxonomy(), "fine20", "mid18");
    const auto fine_to_coarse = tax::hierarchy_projection(taxonomy(), "fine20", "coarse7");
    for (std::uint64_t i = 0; i < 100; ++i) {
        auto sample = synth::generate_scene(i, scene, taxonomy());
        rng::Stream stream(i, "test/aug");
        auto out = train::augment(sample, config, stream, taxonomy());
        const auto& fine = out.masks.at("fine20");
        const auto& mid = out.masks.at("mid18");
        const auto& coarse = out.masks.at("coarse7");
        for (std::size_t p = 0; p < fine.size(); ++p) {
            REQUIRE(mid[p] == fine_to_mid[fine[p]]);
            REQUIRE(coarse[p] == fine_to_coarse[fine[p]]);
        }
    }
}

TEST_CASE("universal_schedule basics") {
    auto single = train::universal_schedule({{"only", 10}}, 3, 20);
    for (const auto& ds : single) CHECK(ds == "only");

    auto a = train::universal_schedule({{"x", 5}, {"y", 3}}, 3, 50);
    auto b = train::universal_schedule({{"x", 5}, {"y", 3}}, 3, 50);
    CHECK(a == b);
    auto c = train::universal_schedule({{"x", 5}, {"y", 3}}, 4, 50);
    CHECK(a != c);

    CHECK_THROWS_AS(train::universal_schedule({}, 1, 5), ConfigError);
    CHECK_THROWS_AS(train::universal_schedule({{"x", 0}}, 1, 5), ConfigError);
}

TEST_CASE("universal_schedule long-run frequencies follow dataset sizes") {
    auto schedule = train::universal_schedule({{"a", 100}, {"b", 100}, {"c", 200}}, 11, 10000);
    std::map<std::string, int> counts;
    for (const auto& ds : schedule) counts[ds]++;
    CHECK(counts["a"] / 10000.0 == doctest::Approx(0.25).epsilon(0.08));
    CHECK(std::abs(counts["a"] / 10000.0 - 0.25) <= 0.02);
    CHECK(std::abs(counts["b"] / 10000.0 - 0.25) <= 0.02);
    CHECK(std::abs(counts["c"] / 10000.0 - 0.50) <= 0.02);
}

TEST_CASE("sample cursor visits every index once per epoch") {
    train::SampleCursor cursor("ds", 7, 3);
    std::set<std::size_t> seen;
    for (int i = 0; i < 7; ++i) seen.insert(cursor.next());
    CHECK(seen.size() == 7);
    std::set<std::size_t> second;
    for (int i = 0; i < 7; ++i) second.insert(cursor.next());
    CHECK(second.size() == 7);
}

TEST_CASE("train_step produces a positive finite loss and learns nothing at lr zero") {
    auto m = model::ParsingModel<double>(taxonomy(), tiny_model_config({"coarse7"}));
    auto data = tiny_data("coarse7", 2);
    std::vector<const train::LoadedSample*> ptrs{&data["coarse7"][0], &data["coarse7"][1]};
    auto batch = train::make_batch<double>(ptrs);
    auto config = tiny_train_config();

    std::vector<std::vector<double>> before;
    for (std::size_t i = 0; i < m.params().count(); ++i) before.push_back(m.params()[i].value.values());
    // step == max_steps gives poly rate 0: parameters must stay bitwise identical
    const double loss = train::train_step(m, batch, config, 5, 5);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
    for (std::size_t i = 0; i < m.params().count(); ++i)
        CHECK(m.params()[i].value.values() == before[i]);

    // a real step changes parameters
    const double loss2 = train::train_step(m, batch, config, 0, 5);
    CHECK(std::isfinite(loss2));
    bool changed = false;
    for (std::size_t i = 0; i < m.params().count(); ++i)
        changed = changed || m.params()[i].value.values() != before[i];
    CHECK(changed);
}

TEST_CASE("mixed-dataset batches are rejected") {
    auto data_a = tiny_data("coarse7", 1);
    auto data_b = tiny_data("mid18", 1);
    std::vector<const train::LoadedSample*> mixed{&data_a["coarse7"][0], &data_b["mid18"][0]};
    CHECK_THROWS_AS(train::make_batch<double>(mixed), UsageError);
}

TEST_CASE("frozen zero graph equals the plain backbone baseline bitwise") {
    auto data = tiny_data("coarse7", 4);
    auto config = tiny_train_config();

    auto baseline = model::ParsingModel<double>(taxonomy(),
                                                tiny_model_config({"coarse7"}, model::GraphMode::none));
    auto frozen = model::ParsingModel<double>(taxonomy(),
                                              tiny_model_config({"coarse7"}, model::GraphMode::intra));
    for (std::size_t i = 0; i < frozen.params().count(); ++i) {
        auto& p = frozen.params()[i];
        if (p.name.rfind("head/shared/", 0) == 0 || p.name == "head/coarse7/proj") {
            for (auto& v : p.value.mutable_values()) v = 0.0;
            p.trainable = false;
        }
    }
    // Only the re-projection weight must be zero for the identity; zeroing the
    // whole graph stack freezes it entirely.
    std::ostringstream log_a, log_b;
    auto r1 = train::train_loop(baseline, data, config, &log_a);
    auto r2 = train::train_loop(frozen, data, config, &log_b);
    REQUIRE(r1.losses.size() == r2.losses.size());
    for (std::size_t i = 0; i < r1.losses.size(); ++i) CHECK(r1.losses[i] == r2.losses[i]);
}

TEST_CASE("two identical runs give bitwise-identical checkpoints") {
    auto data = tiny_data("coarse7", 4);
    auto config = tiny_train_config();
    config.max_steps = 6;

    std::string bytes[2];
    for (int run = 0; run < 2; ++run) {
        auto m = model::ParsingModel<double>(taxonomy(), tiny_model_config({"coarse7"}));
        train::train_loop(m, data, config, nullptr);
        bytes[run] = train::serialize_checkpoint(
            train::build_checkpoint(m.params(), config.max_steps, "echo"));
    }
    CHECK(bytes[0] == bytes[1]);
}

TEST_CASE("checkpoint save/load/save round trip is byte-identical") {
    auto m = model::ParsingModel<double>(taxonomy(), tiny_model_config({"coarse7"}));
    const std::string first =
        train::serialize_checkpoint(train::build_checkpoint(m.params(), 17, "config text"));

    auto parsed = train::parse_checkpoint(std::vector<std::uint8_t>(first.begin(), first.end()));
    auto m2 = model::ParsingModel<double>(taxonomy(), tiny_model_config({"coarse7"}, model::GraphMode::intra, 999));
    auto report = train::apply_checkpoint(m2.params(), parsed);
    CHECK(report.fresh.empty());
    CHECK(report.unused.empty());
    CHECK(report.step == 17);
    CHECK(report.config_echo == "config text");

    const std::string second =
        train::serialize_checkpoint(train::build_checkpoint(m2.params(), 17, "config text"));
    CHECK(first == second);
}

TEST_CASE("loading a coarse checkpoint into an extended model reports the new graph as fresh") {
    auto coarse_only = model::ParsingModel<double>(taxonomy(), tiny_model_config({"coarse7"}));
    const std::string bytes =
        train::serialize_checkpoint(train::build_checkpoint(coarse_only.params(), 3, ""));

    auto extended = model::ParsingModel<double>(taxonomy(),
                                                tiny_model_config({"coarse7", "fine20"}));
    auto report = train::apply_checkpoint(
        extended.params(), train::parse_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.end())));
    const std::set<std::string> fresh(report.fresh.begin(), report.fresh.end());
    const std::set<std::string> expected{"head/fine20/classify/weight", "head/fine20/classify/bias",
                                         "head/fine20/proj"};
    CHECK(fresh == expected);
    CHECK(report.unused.empty());
}

TEST_CASE("checkpoint corruption and mismatch errors") {
    auto m = model::ParsingModel<double>(taxonomy(), tiny_model_config({"coarse7"}));
    const std::string good =
        train::serialize_checkpoint(train::build_checkpoint(m.params(), 0, ""));

    SUBCASE("corrupting magic byte 3 fails with bad magic") {
        std::vector<std::uint8_t> bad(good.begin(), good.end());
        bad[3] ^= 0xFF;
        try {
            train::parse_checkpoint(bad);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
        }
    }
    SUBCASE("truncation is detected") {
        std::vector<std::uint8_t> bad(good.begin(), good.end() - 5);
        CHECK_THROWS_AS(train::parse_checkpoint(bad), ParseError);
    }
    SUBCASE("version mismatch is detected") {
        std::vector<std::uint8_t> bad(good.begin(), good.end());
        bad[4] = 9;
        try {
            train::parse_checkpoint(bad);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SUBCASE("shape conflicts are reported by name") {
        auto parsed = train::parse_checkpoint(std::vector<std::uint8_t>(good.begin(), good.end()));
        auto wider = tiny_model_config({"coarse7"});
        wider.backbone.widths = {5, 6, 8};
        auto m2 = model::ParsingModel<double>(taxonomy(), wider);
        CHECK_THROWS_AS(train::apply_checkpoint(m2.params(), parsed), DataError);
    }
}

TEST_CASE("training log lines carry step, dataset, rate and loss") {
    auto data = tiny_data("coarse7", 2);
    auto config = tiny_train_config();
    config.max_steps = 2;
    auto m = model::ParsingModel<double>(taxonomy(), tiny_model_config({"coarse7"}));
    std::ostringstream log;
    train::train_loop(m, data, config, &log);
    std::istringstream lines(log.str());
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) {
        CHECK(std::count(line.begin(), line.end(), '\t') == 3);
        CHECK(line.find("coarse7") != std::string::npos);
        ++rows;
    }
    CHECK(rows == 2);
}
