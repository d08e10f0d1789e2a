#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ctxot {

// Flat `key = value` text config with `#` comments. Keys keep insertion
// order so serialization is stable; doubles round-trip losslessly.
class KvConfig {
  public:
    KvConfig() = default;

    static KvConfig parse(const std::string& text);
    static KvConfig load(const std::string& path);

    std::string serialize() const;
    void save(const std::string& path) const;

    bool has(const std::string& key) const;
    size_t size() const { return items_.size(); }
    const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

    void set(const std::string& key, const std::string& value);
    void set_double(const std::string& key, double value);
    void set_int(const std::string& key, int64_t value);
    void set_u64(const std::string& key, uint64_t value);
    void set_bool(const std::string& key, bool value);

    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    int64_t get_int(const std::string& key) const;
    int64_t get_int_or(const std::string& key, int64_t fallback) const;
    uint64_t get_u64(const std::string& key) const;
    uint64_t get_u64_or(const std::string& key, uint64_t fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool_or(const std::string& key, bool fallback) const;

  private:
    std::vector<std::pair<std::string, std::string>> items_;
    const std::string* find(const std::string& key) const;
};

}  // namespace ctxot
