#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace subtune::harness {

/// Bad config text, key or value. Maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ValueType { integer, real, text, boolean, int_list, real_list };

struct KeySpec {
    std::string key;
    ValueType type;
    std::string default_value;
    std::string doc;
};

/// Every accepted key with its default.
const std::vector<KeySpec>& config_schema();

/// Flat `key = value` settings with dotted namespaces. Values are checked
/// against the schema on insertion; unknown keys are rejected with the
/// nearest valid key as a hint.
class Config {
public:
    /// All schema keys at their defaults.
    Config();

    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    /// Applies one `key=value` override.
    void set(const std::string& key, const std::string& value);

    std::int64_t get_int(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    const std::string& get_text(const std::string& key) const;
    std::vector<std::int64_t> get_int_list(const std::string& key) const;
    std::vector<double> get_real_list(const std::string& key) const;

    /// Sorted `key = value` lines with canonical value spellings.
    std::string normalized() const;
    /// FNV-1a of normalized(), as 16 hex digits.
    std::string hash() const;

private:
    const KeySpec& spec(const std::string& key) const;
    std::map<std::string, std::string> values_;
};

/// Closest schema key by edit distance.
std::string nearest_key(const std::string& key);

}  // namespace subtune::harness
