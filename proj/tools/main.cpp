#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "graphonomy/errors.hpp"
#include "graphonomy/experiments.hpp"
#include "graphonomy/metrics.hpp"
#include "graphonomy/model.hpp"
#include "graphonomy/runconfig.hpp"
#include "graphonomy/synthdata.hpp"
#include "graphonomy/trainer.hpp"
#include "graphonomy/verification.hpp"

namespace fs = std::filesystem;
using namespace graphonomy;

namespace {

const char* kUsage = R"(usage: graphonomy <subcommand> [--config=FILE] [--key=value ...]

subcommands:
  synth      generate synthetic datasets, manifests and embeddings
  train      train a model (single-dataset, transfer, or universal)
  eval       evaluate a checkpoint against a manifest
  infer      predict masks for one image
  gradcheck  run the numeric verification suite
  ablate     run the component-ablation grid and print a comparison table

Keys use dotted names (e.g. train.base_lr); flags override the environment
(GRAPHONOMY_SEED), which overrides the config file.
)";

cli::RunConfig parse_args(int argc, char** argv) {
    cli::RunConfig config;
    std::vector<std::pair<std::string, std::string>> overrides;
    for (int i = 2; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg.rfind("--", 0) != 0)
            throw UsageError("unexpected argument '" + arg + "', flags look like --key=value");
        arg = arg.substr(2);
        const auto eq = arg.find('=');
        if (eq == std::string::npos) throw UsageError("flag '--" + arg + "' needs =value");
        const std::string key = arg.substr(0, eq);
        const std::string value = arg.substr(eq + 1);
        if (key == "config")
            config.load_file(value);
        else
            overrides.emplace_back(key, value);
    }
    config.apply_environment();
    for (const auto& [k, v] : overrides) config.set(k, v);
    return config;
}

void log_config(const cli::RunConfig& config, const std::string& subcommand) {
    std::cout << "# graphonomy " << subcommand << "\n";
    for (const auto& line : config.resolved()) std::cout << "# " << line << "\n";
}

synth::SceneConfig scene_config(const cli::RunConfig& config) {
    synth::SceneConfig scene;
    scene.resolution = static_cast<int>(config.get_int("synth.resolution"));
    scene.figure_count = static_cast<int>(config.get_int("synth.figures"));
    scene.occlusion = config.get_bool("synth.occlusion");
    scene.noise_level = config.get_double("synth.noise");
    return scene;
}

model::ModelConfig model_config(const cli::RunConfig& config) {
    model::ModelConfig mc;
    mc.backbone.widths.clear();
    for (const auto& w : config.get_list("model.widths"))
        mc.backbone.widths.push_back(std::stoi(w));
    mc.backbone.output_stride = static_cast<int>(config.get_int("model.output_stride"));
    mc.backbone.kernel = static_cast<int>(config.get_int("model.kernel"));
    mc.node_dim = static_cast<int>(config.get_int("model.node_dim"));
    mc.gcn_layers = static_cast<int>(config.get_int("model.gcn_layers"));
    mc.graph_mode = model::graph_mode_from_name(config.get("train.mode"));
    mc.datasets = config.get_list("train.datasets");
    mc.schemes.clear();
    for (const auto& s : config.get_list("train.schemes"))
        mc.schemes.push_back(tax::scheme_from_name(s));
    mc.transfer_pairs.clear();
    for (const auto& pair : config.get_list("train.pairs")) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos)
            throw ConfigError("train.pairs entries look like 'src:dst', got '" + pair + "'");
        mc.transfer_pairs.emplace_back(pair.substr(0, colon), pair.substr(colon + 1));
    }
    mc.seed = config.get_seed();
    return mc;
}

train::TrainConfig train_config(const cli::RunConfig& config) {
    train::TrainConfig tc;
    tc.base_lr = config.get_double("train.base_lr");
    tc.momentum = config.get_double("train.momentum");
    tc.weight_decay = config.get_double("train.weight_decay");
    tc.poly_power = config.get_double("train.poly_power");
    tc.batch_size = static_cast<int>(config.get_int("train.batch_size"));
    tc.epochs = static_cast<int>(config.get_int("train.epochs"));
    tc.max_steps = config.get_int("train.max_steps");
    tc.scale_min = config.get_double("train.scale_min");
    tc.scale_max = config.get_double("train.scale_max");
    tc.flip_prob = config.get_double("train.flip_prob");
    tc.augment = config.get_bool("train.augment");
    tc.resolution = static_cast<int>(config.get_int("train.resolution"));
    tc.seed = config.get_seed();
    tc.validate();
    return tc;
}

// The semantic scheme needs token embeddings; take the configured file or
// derive the synthetic table from the taxonomy.
tax::WordEmbeddingTable embeddings_for(const cli::RunConfig& config,
                                       const tax::LabelTaxonomy& taxonomy) {
    if (config.has("embeddings")) return tax::load_embeddings(config.get("embeddings"));
    std::istringstream in(synth::render_embeddings(
        taxonomy, config.get_seed(), static_cast<int>(config.get_int("synth.embedding_dim"))));
    return tax::parse_embeddings(in, "<synthetic>");
}

train::LoadedSample load_record(const synth::ManifestRecord& record) {
    synth::Sample sample;
    auto image = synth::decode_p6(synth::read_binary_file(record.image_path));
    auto mask = synth::decode_p5(synth::read_binary_file(record.mask_path));
    if (image.height != mask.height || image.width != mask.width)
        throw DataError("image '" + record.image_path + "' and mask '" + record.mask_path +
                        "' disagree on resolution");
    sample.height = image.height;
    sample.width = image.width;
    sample.image = std::move(image.pixels);
    sample.masks[record.dataset_id] = std::move(mask.values);
    return {std::move(sample), record.dataset_id};
}

std::map<std::string, std::vector<train::LoadedSample>> load_manifest_grouped(
    const std::string& path, const tax::LabelTaxonomy& taxonomy) {
    auto manifest = synth::load_manifest(path, taxonomy, &std::cerr);
    std::map<std::string, std::vector<train::LoadedSample>> grouped;
    for (const auto& record : manifest.records)
        grouped[record.dataset_id].push_back(load_record(record));
    return grouped;
}

std::string config_echo(const cli::RunConfig& config) {
    std::ostringstream os;
    for (const auto& line : config.resolved()) os << line << "\n";
    return os.str();
}

int cmd_synth(const cli::RunConfig& config) {
    const auto taxonomy = tax::load_taxonomy(config.get("taxonomy"));
    const auto scene = scene_config(config);
    const fs::path out(config.get("out.dir"));
    fs::create_directories(out / "images");
    fs::create_directories(out / "masks");
    fs::create_directories(out / "manifests");

    synth::emit_embeddings(taxonomy, config.get_seed(),
                           static_cast<int>(config.get_int("synth.embedding_dim")),
                           (out / "embeddings.txt").string());

    const int counts[2] = {static_cast<int>(config.get_int("synth.train_count")),
                           static_cast<int>(config.get_int("synth.test_count"))};
    const char* splits[2] = {"train", "test"};
    for (const auto& ds : taxonomy.datasets) {
        for (int split = 0; split < 2; ++split) {
            rng::Stream seeds(config.get_seed(), "data/" + ds.id + "/" + splits[split]);
            synth::DatasetManifest manifest;
            manifest.split = splits[split];
            for (int i = 0; i < counts[split]; ++i) {
                const auto sample = synth::generate_scene(seeds.next_u64(), scene, taxonomy);
                std::ostringstream stem;
                stem << ds.id << "_" << splits[split] << "_" << std::setw(5) << std::setfill('0')
                     << i;
                const std::string image_path = (out / "images" / (stem.str() + ".ppm")).string();
                const std::string mask_path = (out / "masks" / (stem.str() + ".pgm")).string();
                synth::write_binary_file(
                    image_path, synth::encode_p6(sample.image, sample.height, sample.width));
                synth::write_binary_file(
                    mask_path,
                    synth::encode_p5(sample.masks.at(ds.id), sample.height, sample.width));
                manifest.records.push_back({image_path, mask_path, ds.id});
            }
            synth::save_manifest(
                (out / "manifests" / (ds.id + "_" + splits[split] + ".tsv")).string(), manifest);
        }
    }
    std::cout << "# wrote " << taxonomy.datasets.size() << " datasets under " << out.string()
              << "\n";
    return 0;
}

int cmd_train(const cli::RunConfig& config) {
    const auto taxonomy = tax::load_taxonomy(config.get("taxonomy"));
    auto mc = model_config(config);
    const auto tc = train_config(config);
    const auto embeddings = embeddings_for(config, taxonomy);
    model::ParsingModel<float> m(taxonomy, mc, &embeddings);

    if (config.has("train.init_checkpoint")) {
        const auto report = train::apply_checkpoint(
            m.params(), train::read_checkpoint(config.get("train.init_checkpoint")));
        for (const auto& name : report.fresh) std::cout << "# fresh parameter: " << name << "\n";
        for (const auto& name : report.unused) std::cout << "# unused tensor: " << name << "\n";
    }

    if (!config.has("train.manifest_dir"))
        throw ConfigError("train needs train.manifest_dir (from the synth subcommand)");
    const fs::path dir(config.get("train.manifest_dir"));
    std::map<std::string, std::vector<train::LoadedSample>> data;
    for (const auto& ds : mc.datasets) {
        auto grouped = load_manifest_grouped((dir / (ds + "_train.tsv")).string(), taxonomy);
        auto it = grouped.find(ds);
        if (it == grouped.end() || it->second.empty())
            throw DataError("manifest for '" + ds + "' contains no usable records");
        data[ds] = std::move(it->second);
    }

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (config.has("train.log")) {
        log_file.open(config.get("train.log"));
        if (!log_file) throw DataError("cannot write log '" + config.get("train.log") + "'");
        log = &log_file;
    }
    const auto result = train::train_loop(m, data, tc, log);

    if (!config.has("out.checkpoint")) throw ConfigError("train needs out.checkpoint");
    train::save_checkpoint(m.params(), result.steps, config_echo(config),
                           config.get("out.checkpoint"));
    std::cout << "# saved checkpoint " << config.get("out.checkpoint") << " after " << result.steps
              << " steps, final loss " << result.losses.back() << "\n";
    return 0;
}

int cmd_eval(const cli::RunConfig& config) {
    const auto taxonomy = tax::load_taxonomy(config.get("taxonomy"));
    auto mc = model_config(config);
    const auto embeddings = embeddings_for(config, taxonomy);
    model::ParsingModel<float> m(taxonomy, mc, &embeddings);
    if (!config.has("eval.checkpoint")) throw ConfigError("eval needs eval.checkpoint");
    train::apply_checkpoint(m.params(), train::read_checkpoint(config.get("eval.checkpoint")));

    if (!config.has("eval.manifest")) throw ConfigError("eval needs eval.manifest");
    auto grouped = load_manifest_grouped(config.get("eval.manifest"), taxonomy);
    const metrics::MetricsOptions options{config.get_bool("metrics.iou_background"),
                                          config.get_bool("metrics.f1_foreground_only")};
    for (const auto& [ds, samples] : grouped) {
        const auto report = train::evaluate(m, samples, ds, options);
        std::cout << "== " << ds << " (" << samples.size() << " images) ==\n";
        if (config.get_bool("eval.machine_readable"))
            metrics::write_report_machine(std::cout, report, taxonomy.dataset(ds).labels);
        else
            metrics::write_report_table(std::cout, report, taxonomy.dataset(ds).labels);
    }
    return 0;
}

int cmd_infer(const cli::RunConfig& config) {
    const auto taxonomy = tax::load_taxonomy(config.get("taxonomy"));
    auto mc = model_config(config);
    const auto embeddings = embeddings_for(config, taxonomy);
    model::ParsingModel<float> m(taxonomy, mc, &embeddings);
    if (!config.has("infer.checkpoint")) throw ConfigError("infer needs infer.checkpoint");
    train::apply_checkpoint(m.params(), train::read_checkpoint(config.get("infer.checkpoint")));

    if (!config.has("infer.image")) throw ConfigError("infer needs infer.image");
    auto image = synth::decode_p6(synth::read_binary_file(config.get("infer.image")));
    synth::Sample sample;
    sample.height = image.height;
    sample.width = image.width;
    sample.image = std::move(image.pixels);

    const auto palette = synth::load_palette(config.get("palette"), taxonomy);
    std::vector<std::string> targets = mc.datasets;
    if (config.has("infer.dataset")) targets = {config.get("infer.dataset")};
    const std::string prefix = config.get("infer.out_prefix");
    for (const auto& ds : targets) {
        const auto mask = train::predict_mask(m, sample, ds);
        synth::write_binary_file(prefix + "_" + ds + ".pgm",
                                 synth::encode_p5(mask, sample.height, sample.width));
        synth::write_binary_file(
            prefix + "_" + ds + ".ppm",
            synth::encode_p6(synth::colorize_mask(mask, ds, taxonomy, palette), sample.height,
                             sample.width));
        std::cout << "# wrote " << prefix << "_" << ds << ".pgm and .ppm\n";
    }
    return 0;
}

int cmd_gradcheck(const cli::RunConfig& config) {
    const auto taxonomy = tax::load_taxonomy(config.get("taxonomy"));
    const auto embeddings = embeddings_for(config, taxonomy);
    const auto seeds = static_cast<std::uint64_t>(config.get_int("gradcheck.seeds"));
    const double tolerance = config.get_double("gradcheck.tolerance");

    auto results = verify::run_gradient_suite(seeds, tolerance);
    results.push_back(verify::run_end_to_end_check(taxonomy, embeddings, seeds, tolerance));
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << " " << r.name << " (max rel err "
                  << std::scientific << std::setprecision(3) << r.max_rel_error << ")\n"
                  << std::defaultfloat;
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 3;
}

int cmd_ablate(const cli::RunConfig& config) {
    const auto taxonomy = tax::load_taxonomy(config.get("taxonomy"));
    const auto embeddings = embeddings_for(config, taxonomy);
    auto scene = scene_config(config);
    scene.resolution = static_cast<int>(config.get_int("train.resolution"));
    const auto bundle = experiments::make_synthetic_bundle(
        taxonomy, config.get_seed(), static_cast<int>(config.get_int("synth.train_count")),
        static_cast<int>(config.get_int("synth.test_count")), scene);

    auto mc = model_config(config);
    auto tc = train_config(config);
    tc.max_steps = config.get_int("ablate.steps");
    const auto target = config.get("ablate.target");
    const auto source = config.get("ablate.source");
    const auto seeds = config.get_int("ablate.seeds");

    std::cout << "component ablation (target " << target << ", source " << source << ", "
              << tc.max_steps << " steps, test mIoU)\n";
    std::cout << "seed   baseline   +intra     +transfer\n";
    experiments::AblationRow mean;
    for (std::int64_t s = 0; s < seeds; ++s) {
        const auto row = experiments::run_ablation<float>(
            taxonomy, embeddings, bundle, target, source, mc, tc,
            config.get_seed() + static_cast<std::uint64_t>(s));
        std::cout << std::left << std::setw(7) << s << std::fixed << std::setprecision(4)
                  << std::setw(11) << row.baseline << std::setw(11) << row.intra << std::setw(11)
                  << row.transfer << "\n"
                  << std::defaultfloat;
        mean.baseline += row.baseline;
        mean.intra += row.intra;
        mean.transfer += row.transfer;
    }
    mean.baseline /= static_cast<double>(seeds);
    mean.intra /= static_cast<double>(seeds);
    mean.transfer /= static_cast<double>(seeds);
    std::cout << std::left << std::setw(7) << "mean" << std::fixed << std::setprecision(4)
              << std::setw(11) << mean.baseline << std::setw(11) << mean.intra << std::setw(11)
              << mean.transfer << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << kUsage;
        return 1;
    }
    const std::string subcommand = argv[1];
    try {
        if (subcommand == "--help" || subcommand == "help") {
            std::cout << kUsage;
            return 0;
        }
        const auto config = parse_args(argc, argv);
        log_config(config, subcommand);
        if (subcommand == "synth") return cmd_synth(config);
        if (subcommand == "train") return cmd_train(config);
        if (subcommand == "eval") return cmd_eval(config);
        if (subcommand == "infer") return cmd_infer(config);
        if (subcommand == "gradcheck") return cmd_gradcheck(config);
        if (subcommand == "ablate") return cmd_ablate(config);
        std::cerr << "unknown subcommand '" << subcommand << "'\n" << kUsage;
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
