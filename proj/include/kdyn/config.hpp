#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kdyn/errors.hpp"

namespace kdyn {

// Insertion-ordered key=value bag. Text form is one `key=value` per line,
// with '#' comments and blank lines ignored. Later sets overwrite.
struct KvMap {
  std::vector<std::pair<std::string, std::string>> items;

  void set(const std::string& key, const std::string& value) {
    for (auto& kv : items)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    items.push_back({key, value});
  }

  const std::string* find(const std::string& key) const {
    for (const auto& kv : items)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::string to_text() const {
    std::string out;
    for (const auto& kv : items) {
      out += kv.first;
      out += '=';
      out += kv.second;
      out += '\n';
    }
    return out;
  }

  static KvMap from_text(const std::string& text) {
    KvMap kv;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) +
                          ": expected key=value, got '" + line + "'");
      const auto key = trim(line.substr(0, eq));
      const auto val = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      kv.set(key, val);
    }
    return kv;
  }

  static KvMap from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_text(ss.str());
  }
};

inline std::string format_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Typed view over a KvMap. Every key that is read gets marked; finish()
// rejects leftovers so a typo in a config file fails loudly instead of
// silently using the default.
class ConfigReader {
 public:
  explicit ConfigReader(const KvMap& kv) : kv_(kv) {}

  std::string get_str(const std::string& key, const std::string& dflt) {
    const auto* v = take(key);
    return v ? *v : dflt;
  }

  double get_f64(const std::string& key, double dflt) {
    const auto* v = take(key);
    if (!v) return dflt;
    try {
      std::size_t used = 0;
      const double x = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + *v +
                        "' is not a number");
    }
  }

  long long get_i64(const std::string& key, long long dflt) {
    const auto* v = take(key);
    if (!v) return dflt;
    try {
      std::size_t used = 0;
      const long long x = std::stoll(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + *v +
                        "' is not an integer");
    }
  }

  std::size_t get_size(const std::string& key, std::size_t dflt) {
    const long long x = get_i64(key, (long long)dflt);
    if (x < 0)
      throw ConfigError("config key '" + key + "' must be non-negative");
    return std::size_t(x);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) {
    const auto* v = take(key);
    if (!v) return dflt;
    try {
      std::size_t used = 0;
      const unsigned long long x = std::stoull(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + *v +
                        "' is not an unsigned integer");
    }
  }

  bool get_bool(const std::string& key, bool dflt) {
    const auto* v = take(key);
    if (!v) return dflt;
    if (*v == "1" || *v == "true") return true;
    if (*v == "0" || *v == "false") return false;
    throw ConfigError("config key '" + key + "': '" + *v +
                      "' is not a boolean (use true/false)");
  }

  // comma-separated size list; empty string means an empty list
  std::vector<std::size_t> get_dims(const std::string& key,
                                    std::vector<std::size_t> dflt) {
    const auto* v = take(key);
    if (!v) return dflt;
    std::vector<std::size_t> out;
    if (v->empty()) return out;
    std::istringstream ss(*v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        const long long x = std::stoll(tok, &used);
        if (used != tok.size() || x < 0) throw std::invalid_argument("");
        out.push_back(std::size_t(x));
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad list entry '" + tok +
                          "'");
      }
    }
    return out;
  }

  void finish() const {
    for (const auto& kv : kv_.items)
      if (!seen_.count(kv.first))
        throw ConfigError("unknown config key '" + kv.first + "'");
  }

 private:
  const std::string* take(const std::string& key) {
    seen_.insert(key);
    return kv_.find(key);
  }
  const KvMap& kv_;
  std::set<std::string> seen_;
};

inline std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(dims[i]);
  }
  return s;
}

}  // namespace kdyn
