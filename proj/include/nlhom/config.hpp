#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nlhom/types.hpp"

namespace nlhom {

/// Flat `key = value` experiment configuration.  Lines starting with '#' and blank lines are ignored.
class Config {
public:
    Config() = default;

    /// Throws ConfigurationError on malformed lines or duplicate keys.
    static Config parse(const std::string& text);
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& entries() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;
    Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;

    /// Throws ConfigurationError naming the first key not in `known`.
    void require_known(const std::vector<std::string>& known) const;

    /// Canonical text: sorted `key = value` lines.
    std::string canonical() const;
    /// FNV-1a 64-bit hash of the canonical text, as 16 hex digits.
    std::string hash() const;

private:
    std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& data);

/// Parses a comma-separated list of numbers.
std::vector<double> parse_number_list(const std::string& text);

} // namespace nlhom
