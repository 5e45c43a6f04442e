#ifndef CHIRPSCATTER_CONFIG_HPP
#define CHIRPSCATTER_CONFIG_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace chirpscatter::cfg {

/// Validation failure naming the offending field; the CLI maps it to exit 2.
struct ConfigError : std::runtime_error {
    std::string field;
    ConfigError(std::string field_, const std::string& message)
        : std::runtime_error(field_.empty() ? message : field_ + ": " + message),
          field(std::move(field_)) {}
};

/** @brief Flat, line-oriented `section.key = value` configuration.
 *
 * No nesting, no quoting; `#` starts a comment. Keys read through the typed
 * getters are tracked so a run can reject unknown (misspelled) keys.
 */
class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "<stream>") {
        Config c;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("", origin + ":" + std::to_string(lineno) +
                                          ": expected `key = value`");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError("", origin + ":" + std::to_string(lineno) + ": empty key");
            c.values_[key] = value;
        }
        return c;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("", "cannot open config file " + path);
        return parse(in, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(key, "required key missing");
        touched_.insert(key);
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        touched_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }
    double get_double(const std::string& key, double fallback) const {
        touched_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    long long get_int(const std::string& key) const { return to_int(key, get_string(key)); }
    long long get_int(const std::string& key, long long fallback) const {
        touched_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : to_int(key, it->second);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        touched_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError(key, "expected a boolean, got `" + it->second + "`");
    }

    /// Keys present in the file that no getter ever looked at.
    std::vector<std::string> unknown_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!touched_.count(k)) out.push_back(k);
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static double to_double(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError(key, "expected a number, got `" + v + "`");
        }
    }

    static long long to_int(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            const long long i = std::stoll(v, &used, 0);
            if (used != v.size()) throw std::invalid_argument(v);
            return i;
        } catch (const std::exception&) {
            throw ConfigError(key, "expected an integer, got `" + v + "`");
        }
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> touched_;
};

}  // namespace chirpscatter::cfg

#endif
