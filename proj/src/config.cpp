#include "nlhom/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nlhom/errors.hpp"

namespace nlhom {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ConfigurationError("config key '" + key + "': '" + text + "' is not a number");
    }
    if (used != text.size())
        throw ConfigurationError("config key '" + key + "': '" + text + "' is not a number");
    return v;
}

} // namespace

Config Config::parse(const std::string& text)
{
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigurationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigurationError("config line " + std::to_string(lineno) + ": empty key");
        if (cfg.values_.count(key))
            throw ConfigurationError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigurationError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const
{
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const
{
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : to_double(key, it->second);
}

int Config::get_int(const std::string& key, int fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    const double v = to_double(key, it->second);
    if (v != static_cast<int>(v))
        throw ConfigurationError("config key '" + key + "' must be an integer");
    return static_cast<int>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    if (it->second == "true" || it->second == "1")
        return true;
    if (it->second == "false" || it->second == "0")
        return false;
    throw ConfigurationError("config key '" + key + "' must be true or false");
}

std::vector<double> parse_number_list(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(to_double("list", trim(item)));
    return out;
}

std::vector<double> Config::get_list(const std::string& key, const std::vector<double>& fallback) const
{
    const auto it = values_.find(key);
    if (it == values_.end())
        return fallback;
    try {
        auto v = parse_number_list(it->second);
        if (v.empty())
            throw ConfigurationError("empty");
        return v;
    } catch (const ConfigurationError&) {
        throw ConfigurationError("config key '" + key + "' must be a nonempty comma-separated list of numbers");
    }
}

Vec3 Config::get_vec3(const std::string& key, const Vec3& fallback) const
{
    if (!has(key))
        return fallback;
    const auto v = get_list(key, {});
    if (v.size() != 3)
        throw ConfigurationError("config key '" + key + "' needs three components");
    return {v[0], v[1], v[2]};
}

void Config::require_known(const std::vector<std::string>& known) const
{
    for (const auto& [key, value] : values_)
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigurationError("unknown config key '" + key + "'");
}

std::string Config::canonical() const
{
    std::string out;
    for (const auto& [key, value] : values_)
        out += key + " = " + value + "\n";
    return out;
}

std::uint64_t fnv1a64(const std::string& data)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string Config::hash() const
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

} // namespace nlhom
