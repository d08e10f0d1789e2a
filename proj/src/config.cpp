#include "ctxot/config.hpp"

#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctxot/errors.hpp"

namespace ctxot {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw FormatError("config: line " + std::to_string(lineno) + " has no '='");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw FormatError("config: line " + std::to_string(lineno) + " has an empty key");
        }
        cfg.set(key, value);
    }
    return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string KvConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : items_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

void KvConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("config: cannot write " + path);
    out << serialize();
    if (!out) throw IoError("config: write failed for " + path);
}

const std::string* KvConfig::find(const std::string& key) const {
    for (const auto& [k, v] : items_) {
        if (k == key) return &v;
    }
    return nullptr;
}

bool KvConfig::has(const std::string& key) const { return find(key) != nullptr; }

void KvConfig::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : items_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    items_.emplace_back(key, value);
}

void KvConfig::set_double(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    set(key, buf);
}

void KvConfig::set_int(const std::string& key, int64_t value) { set(key, std::to_string(value)); }

void KvConfig::set_u64(const std::string& key, uint64_t value) { set(key, std::to_string(value)); }

void KvConfig::set_bool(const std::string& key, bool value) { set(key, value ? "true" : "false"); }

const std::string& KvConfig::get(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw ArgumentError("config: missing key '" + key + "'");
    return *v;
}

std::string KvConfig::get_or(const std::string& key, const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

double KvConfig::get_double(const std::string& key) const {
    const std::string& s = get(key);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
        throw FormatError("config: key '" + key + "' is not a number: " + s);
    }
    return v;
}

double KvConfig::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

int64_t KvConfig::get_int(const std::string& key) const {
    const std::string& s = get(key);
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') {
        throw FormatError("config: key '" + key + "' is not an integer: " + s);
    }
    return static_cast<int64_t>(v);
}

int64_t KvConfig::get_int_or(const std::string& key, int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

uint64_t KvConfig::get_u64(const std::string& key) const {
    const std::string& s = get(key);
    char* end = nullptr;
    unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') {
        throw FormatError("config: key '" + key + "' is not an unsigned integer: " + s);
    }
    return static_cast<uint64_t>(v);
}

uint64_t KvConfig::get_u64_or(const std::string& key, uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
}

bool KvConfig::get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw FormatError("config: key '" + key + "' is not a boolean: " + s);
}

bool KvConfig::get_bool_or(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

}  // namespace ctxot
