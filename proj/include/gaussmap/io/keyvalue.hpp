#pragma once

// Minimal TOML-style reader: [section] headers, key = value lines, '#'
// comments. Values are numbers, true/false, "strings" or [a, b, c] number
// lists. Keys are addressed as "section.key".

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gaussmap/error.hpp"

namespace gaussmap {

class KeyValueFile {
public:
    static KeyValueFile parse(std::istream &in, const std::string &src) {
        KeyValueFile kv;
        kv.src_ = src;
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            line = strip(strip_comment(line));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ParseError(src, line_no, 0, "unterminated section header");
                section = strip(line.substr(1, line.size() - 2));
                if (section.empty()) throw ParseError(src, line_no, 0, "empty section name");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError(src, line_no, 0, "expected key = value");
            const std::string key = strip(line.substr(0, eq));
            const std::string value = strip(line.substr(eq + 1));
            if (key.empty() || value.empty()) throw ParseError(src, line_no, 0, "empty key or value");
            const std::string full = section.empty() ? key : section + "." + key;
            if (kv.entries_.count(full)) throw ParseError(src, line_no, 0, "duplicate key '" + full + "'");
            kv.entries_[full] = {value, line_no, false};
        }
        return kv;
    }

    static KeyValueFile load(const std::string &path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open '" + path + "'");
        return parse(in, path);
    }

    bool has(const std::string &key) const { return entries_.count(key) != 0; }

    double get_double(const std::string &key, double def) const {
        const Entry *e = find(key);
        return e ? to_double(*e, key) : def;
    }

    long long get_int(const std::string &key, long long def) const {
        const Entry *e = find(key);
        if (!e) return def;
        const double d = to_double(*e, key);
        if (d != static_cast<double>(static_cast<long long>(d))) fail(*e, key, "expected an integer");
        return static_cast<long long>(d);
    }

    bool get_bool(const std::string &key, bool def) const {
        const Entry *e = find(key);
        if (!e) return def;
        if (e->raw == "true") return true;
        if (e->raw == "false") return false;
        fail(*e, key, "expected true or false");
    }

    std::string get_string(const std::string &key, const std::string &def) const {
        const Entry *e = find(key);
        if (!e) return def;
        if (e->raw.size() >= 2 && e->raw.front() == '"' && e->raw.back() == '"') return e->raw.substr(1, e->raw.size() - 2);
        return e->raw; // bare words are accepted for enum-like values
    }

    std::vector<double> get_list(const std::string &key, const std::vector<double> &def) const {
        const Entry *e = find(key);
        if (!e) return def;
        if (e->raw.size() < 2 || e->raw.front() != '[' || e->raw.back() != ']') fail(*e, key, "expected [a, b, ...]");
        std::vector<double> out;
        std::stringstream ss(e->raw.substr(1, e->raw.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = strip(item);
            if (item.empty()) continue;
            out.push_back(number(item, *e, key));
        }
        return out;
    }

    /// Throws on any key never read, catching typos.
    void require_all_used() const {
        for (const auto &[k, e] : entries_)
            if (!e.used) throw ParseError(src_, e.line, 0, "unknown key '" + k + "'");
    }

private:
    struct Entry {
        std::string raw;
        std::size_t line = 0;
        mutable bool used = false;
    };

    const Entry *find(const std::string &key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return nullptr;
        it->second.used = true;
        return &it->second;
    }

    [[noreturn]] void fail(const Entry &e, const std::string &key, const std::string &what) const {
        throw ParseError(src_, e.line, 0, key + ": " + what);
    }

    double number(const std::string &s, const Entry &e, const std::string &key) const {
        try {
            std::size_t used = 0;
            const double d = std::stod(s, &used);
            if (used == s.size()) return d;
        } catch (const std::exception &) {
        }
        fail(e, key, "bad number '" + s + "'");
    }

    double to_double(const Entry &e, const std::string &key) const { return number(e.raw, e, key); }

    static std::string strip_comment(const std::string &s) {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') quoted = !quoted;
            if (s[i] == '#' && !quoted) return s.substr(0, i);
        }
        return s;
    }

    static std::string strip(const std::string &s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::string src_;
    std::map<std::string, Entry> entries_;
};

} // namespace gaussmap
