#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace graphonomy::cli {

// Flat key=value run configuration. Values merge in precedence order
// file < environment (GRAPHONOMY_SEED) < command-line flags; unknown keys are
// rejected against a fixed registry. Every run logs the fully resolved set.
class RunConfig {
public:
    RunConfig(); // registry defaults

    void load_file(const std::string& path);
    void apply_environment(); // GRAPHONOMY_SEED -> seed
    void set(const std::string& key, const std::string& value); // flag override

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::uint64_t get_seed() const;
    std::vector<std::string> get_list(const std::string& key) const; // comma separated

    // Sorted "key=value" lines of the resolved configuration.
    std::vector<std::string> resolved() const;

private:
    void check_known(const std::string& key) const;
    std::map<std::string, std::string> values_;
};

} // namespace graphonomy::cli
