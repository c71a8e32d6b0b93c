#include "graphonomy/runconfig.hpp"

#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "graphonomy/errors.hpp"

namespace graphonomy::cli {

namespace {

// Every addressable knob with its default. Paths default empty and are
// validated by the subcommands that need them.
const std::map<std::string, std::string>& registry() {
    static const std::map<std::string, std::string> defaults = {
        {"seed", "1"},
        {"taxonomy", "data/taxonomy_human.txt"},
        {"embeddings", ""},
        {"palette", "data/palette.txt"},
        {"out.dir", "out"},
        {"out.checkpoint", ""},

        {"synth.train_count", "1000"},
        {"synth.test_count", "200"},
        {"synth.resolution", "64"},
        {"synth.figures", "2"},
        {"synth.occlusion", "false"},
        {"synth.noise", "0.05"},
        {"synth.embedding_dim", "16"},

        {"model.node_dim", "128"},
        {"model.gcn_layers", "3"},
        {"model.widths", "16,32,64"},
        {"model.output_stride", "4"},
        {"model.kernel", "3"},

        {"train.base_lr", "0.007"},
        {"train.momentum", "0.9"},
        {"train.weight_decay", "0.0005"},
        {"train.poly_power", "0.9"},
        {"train.batch_size", "8"},
        {"train.epochs", "4"},
        {"train.max_steps", "0"},
        {"train.scale_min", "0.5"},
        {"train.scale_max", "2.0"},
        {"train.flip_prob", "0.5"},
        {"train.augment", "true"},
        {"train.resolution", "64"},
        {"train.datasets", "coarse7,mid18,fine20"},
        {"train.mode", "transfer"},
        {"train.schemes", "feature,semantic"},
        {"train.pairs", "coarse7:mid18,mid18:fine20"},
        {"train.init_checkpoint", ""},
        {"train.manifest_dir", ""},
        {"train.log", ""},

        {"eval.checkpoint", ""},
        {"eval.manifest", ""},
        {"eval.machine_readable", "false"},
        {"metrics.iou_background", "true"},
        {"metrics.f1_foreground_only", "true"},

        {"infer.checkpoint", ""},
        {"infer.image", ""},
        {"infer.dataset", ""},
        {"infer.out_prefix", "infer"},

        {"gradcheck.seeds", "5"},
        {"gradcheck.tolerance", "1e-6"},

        {"ablate.steps", "400"},
        {"ablate.seeds", "3"},
        {"ablate.data_dir", ""},
        {"ablate.target", "coarse7"},
        {"ablate.source", "fine20"},
    };
    return defaults;
}

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

RunConfig::RunConfig() : values_(registry()) {}

void RunConfig::check_known(const std::string& key) const {
    if (!registry().count(key)) throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        check_known(key);
        values_[key] = value;
    }
}

void RunConfig::apply_environment() {
    if (const char* env = std::getenv("GRAPHONOMY_SEED")) values_["seed"] = env;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    check_known(key);
    values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
    auto it = values_.find(key);
    return it != values_.end() && !it->second.empty();
}

const std::string& RunConfig::get(const std::string& key) const {
    check_known(key);
    return values_.at(key);
}

std::int64_t RunConfig::get_int(const std::string& key) const {
    try {
        return std::stoll(get(key));
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not an integer: '" + get(key) + "'");
    }
}

double RunConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: '" + get(key) + "'");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::uint64_t RunConfig::get_seed() const {
    try {
        return std::stoull(get("seed"));
    } catch (const std::exception&) {
        throw ConfigError("seed is not an unsigned integer: '" + get("seed") + "'");
    }
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
    const std::string& v = get(key);
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<std::string> RunConfig::resolved() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [k, v] : values_) out.push_back(k + "=" + v);
    return out;
}

} // namespace graphonomy::cli
