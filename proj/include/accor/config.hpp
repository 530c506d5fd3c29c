#pragma once

// Flat "key = value" files with optional [section] headers. Keys are
// addressed as "section.key"; keys before the first section have no prefix.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace accor {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>") {
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
      boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    KeyValueConfig cfg;
    for (const auto& [key, node] : tree) {
      if (node.empty()) {
        cfg.set(key, node.data());
        continue;
      }
      for (const auto& [sub, leaf] : node) cfg.set(key + "." + sub, leaf.data());
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  void erase(const std::string& key) { entries_.erase(key); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing required key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? to_double(key, require(key)) : fallback;
  }

  template <typename Int>
  Int get_int(const std::string& key, Int fallback) const {
    if (!has(key)) return fallback;
    const std::string v = trim(require(key));
    Int out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError("key '" + key + "': not an integer: " + v);
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = trim(require(key));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': not a boolean: " + v);
  }

  /// Throws naming the first key that is neither listed nor under a listed
  /// section prefix ("template.*").
  void check_keys(const std::set<std::string>& allowed, const std::set<std::string>& allowed_prefixes = {}) const {
    for (const auto& [key, value] : entries_) {
      if (allowed.count(key)) continue;
      bool ok = false;
      for (const auto& p : allowed_prefixes) ok = ok || key.rfind(p, 0) == 0;
      if (!ok) throw ConfigError("unknown config key '" + key + "'");
    }
  }

  /// Serialises with sections in sorted order; parse(to_string()) round-trips.
  std::string to_string() const {
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    std::ostringstream os;
    for (const auto& [key, value] : entries_) {
      const auto dot = key.find('.');
      if (dot == std::string::npos) {
        os << key << " = " << value << '\n';
      } else {
        sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), value);
      }
    }
    for (const auto& [name, kv] : sections) {
      os << '[' << name << "]\n";
      for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
    }
    return os.str();
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double to_double(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': not a number: " + v);
    }
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> entries_;
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace accor
