#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace depbounds {

// Flat key = value settings. Keys use underscores; "n-boot" and "n_boot" are
// the same key. Later layers overwrite earlier ones: defaults, config file,
// environment, command-line flags.
class Settings {
public:
    void set(const std::string& key, const std::string& value, const std::string& source);
    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    std::string source(const std::string& key) const;

    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;  // comma separated
    std::optional<std::string> find(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    // Throws std::invalid_argument naming the first key outside allowed.
    void check_keys(const std::set<std::string>& allowed) const;

    // Layers other on top of this.
    void merge(const Settings& other);

    static std::string normalize_key(std::string_view key);

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, std::string> sources_;
};

// INI ("[section]" headers are grouping only, keys must be unique) or, when
// the text starts with '{', a JSON object whose nested objects are flattened
// the same way. Arrays become comma-separated lists.
Settings parse_settings(std::string_view text, const std::string& source = "file");
Settings load_settings(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

// DEPBOUNDS_THREADS -> threads, DEPBOUNDS_SEED -> seed.
Settings env_settings(const EnvLookup& env);

}  // namespace depbounds
