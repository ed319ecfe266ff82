#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace chmc {

// One registered config key: every key the INI file or --set may mention is
// declared here, which keeps --help and the manifest exhaustive.
struct ConfigKey {
    std::string section;
    std::string key;
    std::string default_value;
    std::string description;
};

const std::vector<ConfigKey>& config_registry();

// INI-style config: [section] blocks of key = value lines, '#' or ';'
// comments. Unknown section.key pairs are rejected.
class Config {
public:
    Config();  // all defaults

    static Config parse_ini_text(const std::string& text);
    static Config load(const std::string& path);

    // "section.key=value" override from the CLI.
    void set_override(const std::string& assignment);
    void set(const std::string& section, const std::string& key, const std::string& value);

    const std::string& get(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    long get_int(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key) const;

    // Full resolved view (defaults plus overrides), deterministic order.
    nlohmann::ordered_json to_json() const;
    std::string canonical_text() const;
    std::string hash() const;

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace chmc
