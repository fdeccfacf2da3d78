#include "depbounds/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace depbounds {

namespace {

std::string trim(std::string_view s)
{
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::string json_scalar(const nlohmann::json& v)
{
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return v.dump();
    throw std::invalid_argument("unsupported JSON value " + v.dump());
}

void flatten(const nlohmann::json& obj, Settings& out, const std::string& source)
{
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const auto& v = it.value();
        if (v.is_object()) {
            flatten(v, out, source);
            continue;
        }
        std::string key = Settings::normalize_key(it.key());
        if (out.has(key)) throw std::invalid_argument("duplicate setting '" + key + "'");
        if (v.is_array()) {
            std::string joined;
            for (std::size_t i = 0; i < v.size(); ++i) joined += (i ? "," : "") + json_scalar(v[i]);
            out.set(key, joined, source);
        } else {
            out.set(key, json_scalar(v), source);
        }
    }
}

}  // namespace

std::string Settings::normalize_key(std::string_view key)
{
    std::string k = trim(key);
    while (!k.empty() && k.front() == '-') k.erase(k.begin());
    std::replace(k.begin(), k.end(), '-', '_');
    return k;
}

void Settings::set(const std::string& key, const std::string& value, const std::string& source)
{
    std::string k = normalize_key(key);
    if (k.empty()) throw std::invalid_argument("empty setting name");
    values_[k] = value;
    sources_[k] = source;
}

bool Settings::has(const std::string& key) const { return values_.count(normalize_key(key)) > 0; }

const std::string& Settings::get(const std::string& key) const
{
    auto it = values_.find(normalize_key(key));
    if (it == values_.end()) throw std::invalid_argument("missing setting '" + key + "'");
    return it->second;
}

std::optional<std::string> Settings::find(const std::string& key) const
{
    auto it = values_.find(normalize_key(key));
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Settings::source(const std::string& key) const
{
    auto it = sources_.find(normalize_key(key));
    return it == sources_.end() ? std::string() : it->second;
}

double Settings::get_double(const std::string& key) const
{
    std::string s = trim(get(key));
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw std::invalid_argument("setting '" + key + "' is not a number: '" + s + "'");
    }
    return v;
}

long long Settings::get_int(const std::string& key) const
{
    std::string s = trim(get(key));
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw std::invalid_argument("setting '" + key + "' is not an integer: '" + s + "'");
    }
    return v;
}

bool Settings::get_bool(const std::string& key) const
{
    std::string s = trim(get(key));
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument("setting '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<double> Settings::get_doubles(const std::string& key) const
{
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::string s = trim(item);
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
            throw std::invalid_argument("setting '" + key + "' has a non-numeric entry '" + s + "'");
        }
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("setting '" + key + "' is empty");
    return out;
}

void Settings::check_keys(const std::set<std::string>& allowed) const
{
    for (const auto& [k, v] : values_) {
        if (!allowed.count(k)) throw std::invalid_argument("unknown setting '" + k + "' (from " + source(k) + ")");
    }
}

void Settings::merge(const Settings& other)
{
    for (const auto& [k, v] : other.values_) set(k, v, other.source(k));
}

Settings parse_settings(std::string_view text, const std::string& source)
{
    Settings out;
    std::string body = trim(text);
    if (!body.empty() && body.front() == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument(source + ": " + e.what());
        }
        flatten(j, out, source);
        return out;
    }
    boost::property_tree::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw std::invalid_argument(source + ": " + e.message() + " at line " + std::to_string(e.line()));
    }
    for (const auto& [name, node] : tree) {
        if (node.empty()) {
            out.set(name, trim(node.data()), source);
            continue;
        }
        for (const auto& [key, leaf] : node) {
            std::string k = Settings::normalize_key(key);
            if (out.has(k)) throw std::invalid_argument(source + ": duplicate setting '" + k + "'");
            out.set(k, trim(leaf.data()), source);
        }
    }
    return out;
}

Settings load_settings(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_settings(ss.str(), path.string());
}

EnvLookup process_env()
{
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v) return std::nullopt;
        return std::string(v);
    };
}

Settings env_settings(const EnvLookup& env)
{
    Settings out;
    if (auto v = env("DEPBOUNDS_THREADS")) out.set("threads", *v, "env");
    if (auto v = env("DEPBOUNDS_SEED")) out.set("seed", *v, "env");
    return out;
}

}  // namespace depbounds
