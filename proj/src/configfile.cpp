#include "tttlab/configfile.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tttlab {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_string(ss.str(), path);
}

ConfigDoc ConfigDoc::parse_string(const std::string& text, const std::string& origin) {
    ConfigDoc doc;
    doc.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
            doc.sections_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        auto& sec = doc.sections_[section];
        if (sec.count(key))
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" +
                              key + "' in [" + section + "]");
        sec[key] = Entry{value, line_no};
    }
    return doc;
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) != 0;
}

const ConfigDoc::Entry& ConfigDoc::require(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end() || !s->second.count(key))
        throw ConfigError(origin_ + ": missing required field [" + section + "] " + key);
    return s->second.at(key);
}

void ConfigDoc::fail(const std::string& section, const std::string& key,
                     const std::string& why) const {
    const auto s = sections_.find(section);
    int line = 0;
    if (s != sections_.end()) {
        const auto k = s->second.find(key);
        if (k != s->second.end()) line = k->second.line;
    }
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": field [" + section + "] " + key +
                      ": " + why);
}

std::string ConfigDoc::get_string(const std::string& section, const std::string& key) const {
    return require(section, key).value;
}

int64_t ConfigDoc::get_int(const std::string& section, const std::string& key) const {
    const auto& e = require(section, key);
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        fail(section, key, "expected an integer, got '" + e.value + "'");
    }
}

uint64_t ConfigDoc::get_u64(const std::string& section, const std::string& key) const {
    const auto& e = require(section, key);
    try {
        size_t pos = 0;
        const uint64_t v = std::stoull(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        fail(section, key, "expected a non-negative integer, got '" + e.value + "'");
    }
}

double ConfigDoc::get_double(const std::string& section, const std::string& key) const {
    const auto& e = require(section, key);
    try {
        size_t pos = 0;
        const double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        fail(section, key, "expected a number, got '" + e.value + "'");
    }
}

bool ConfigDoc::get_bool(const std::string& section, const std::string& key) const {
    const auto& e = require(section, key);
    std::string v = e.value;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "off" || v == "no" || v == "0") return false;
    fail(section, key, "expected a boolean, got '" + e.value + "'");
}

std::vector<std::string> ConfigDoc::get_list(const std::string& section,
                                             const std::string& key) const {
    const auto& e = require(section, key);
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(e.value);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> ConfigDoc::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [sec, kv] : sections_)
        for (const auto& [key, e] : kv) out.emplace_back(sec, key);
    return out;
}

int ConfigDoc::line_of(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return 0;
    const auto k = s->second.find(key);
    return k == s->second.end() ? 0 : k->second.line;
}

}  // namespace tttlab
