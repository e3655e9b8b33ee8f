#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tttlab/common.hpp"

namespace tttlab {

// Line-oriented key-value document with nested [section] headers,
// `key = value` pairs and `#` comments. Errors carry file/line/field
// diagnostics and surface as ConfigError.
class ConfigDoc {
public:
    static ConfigDoc parse_file(const std::string& path);
    static ConfigDoc parse_string(const std::string& text, const std::string& origin);

    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    int64_t get_int(const std::string& section, const std::string& key) const;
    uint64_t get_u64(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    // comma-separated list
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

    template <typename F>
    auto get_or(const std::string& section, const std::string& key, F&& getter,
                decltype(getter(section, key)) fallback) const {
        return has(section, key) ? getter(section, key) : fallback;
    }

    std::string origin() const { return origin_; }

    // All (section, key) pairs present, for unknown-key detection.
    std::vector<std::pair<std::string, std::string>> entries() const;
    int line_of(const std::string& section, const std::string& key) const;

    [[noreturn]] void fail(const std::string& section, const std::string& key,
                           const std::string& why) const;

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    std::map<std::string, std::map<std::string, Entry>> sections_;
    std::string origin_;

    const Entry& require(const std::string& section, const std::string& key) const;
};

}  // namespace tttlab
