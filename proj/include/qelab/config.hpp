#pragma once

// Flat INI-style experiment configuration: [section] headers, key = value
// lines, '#'/';' comments.  Keys are stored as "section.key".  The canonical
// serialization (sorted keys) feeds a 64-bit FNV-1a hash used to detect
// config drift on resume.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qelab/errors.hpp"
#include "qelab/io.hpp"

namespace qelab::runner {

class ConfigMap {
public:
    static ConfigMap parse_text(const std::string& text) {
        ConfigMap cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = io::trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw validation_error("config line " + std::to_string(lineno) + ": bad section header");
                section = io::trim(t.substr(1, t.size() - 2));
                continue;
            }
            std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw validation_error("config line " + std::to_string(lineno) + ": expected key = value");
            std::string key = io::trim(t.substr(0, eq));
            std::string value = io::trim(t.substr(eq + 1));
            if (key.empty()) throw validation_error("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[section.empty() ? key : section + "." + key] = value;
        }
        return cfg;
    }

    static ConfigMap parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw validation_error("config: cannot open " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse_text(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw validation_error("config: missing key '" + key + "'");
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const {
        try {
            return io::parse_double(get(key));
        } catch (const numeric_error&) {
            throw validation_error("config: key '" + key + "' is not a number");
        }
    }

    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    long long get_int(const std::string& key) const {
        try {
            return io::parse_int(get(key));
        } catch (const numeric_error&) {
            throw validation_error("config: key '" + key + "' is not an integer");
        }
    }

    long long get_int_or(const std::string& key, long long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::vector<long long> get_int_list(const std::string& key) const {
        std::vector<long long> out;
        for (const auto& part : io::split(get(key), ',')) {
            std::string t = io::trim(part);
            if (t.empty()) continue;
            try {
                out.push_back(io::parse_int(t));
            } catch (const numeric_error&) {
                throw validation_error("config: key '" + key + "' has a non-integer entry '" + t + "'");
            }
        }
        if (out.empty()) throw validation_error("config: key '" + key + "' is an empty list");
        return out;
    }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& part : io::split(get(key), ',')) {
            std::string t = io::trim(part);
            if (t.empty()) continue;
            try {
                out.push_back(io::parse_double(t));
            } catch (const numeric_error&) {
                throw validation_error("config: key '" + key + "' has a non-numeric entry '" + t + "'");
            }
        }
        if (out.empty()) throw validation_error("config: key '" + key + "' is an empty list");
        return out;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    // Deterministic text form: sorted "section.key = value" lines.
    std::string canonical_text() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
        return out.str();
    }

    std::string hash_hex() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (char c : canonical_text()) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace qelab::runner
