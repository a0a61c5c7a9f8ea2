#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace sfc {

// Flat `key = value` text. `#include <path>` splices another file (relative to
// the including file); other lines starting with '#' are comments. A later
// assignment overrides an earlier one but keeps the first position, so
// ordered keys (schema feature types) stay in declaration order.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig load(const std::filesystem::path& path) {
    KeyValueConfig cfg;
    std::vector<std::filesystem::path> stack;
    cfg.load_into(path, stack);
    return cfg;
  }

  static KeyValueConfig parse(std::string_view text) {
    KeyValueConfig cfg;
    std::vector<std::filesystem::path> stack;
    cfg.parse_into(text, "<string>", std::filesystem::current_path(), stack);
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    auto it = index_.find(key);
    if (it == index_.end()) {
      index_.emplace(key, entries_.size());
      entries_.emplace_back(key, value);
    } else {
      entries_[it->second].second = value;
    }
  }

  bool has(const std::string& key) const { return index_.count(key) != 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second].second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v) throw ConfigError("missing config key '" + key + "'");
    return *v;
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    double out;
    if (!try_parse_double(*v, out)) throw ConfigError("config key '" + key + "': not a number: " + *v);
    return out;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::int64_t out;
    if (!try_parse_int(*v, out)) throw ConfigError("config key '" + key + "': not an integer: " + *v);
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "on" || *v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "off" || *v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError("config key '" + key + "': not a boolean: " + *v);
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    auto v = get(key);
    if (!v || trim(*v).empty()) return out;
    for (auto part : split(*v, ',')) out.emplace_back(trim(part));
    return out;
  }

  std::vector<double> get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_list(key)) {
      double d;
      if (!try_parse_double(s, d)) throw ConfigError("config key '" + key + "': not a number: " + s);
      out.push_back(d);
    }
    return out;
  }

  // Keys under `prefix.` in declaration order, with the prefix stripped.
  std::vector<std::pair<std::string, std::string>> with_prefix(const std::string& prefix) const {
    std::vector<std::pair<std::string, std::string>> out;
    const std::string p = prefix + ".";
    for (const auto& [k, v] : entries_) {
      if (k.compare(0, p.size(), p) == 0) {
        out.emplace_back(k.substr(p.size()), v);
      }
    }
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  // Canonical text form: one `key = value` per line in declaration order.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  void load_into(const std::filesystem::path& path, std::vector<std::filesystem::path>& stack) {
    std::error_code ec;
    auto canon = std::filesystem::weakly_canonical(path, ec);
    for (const auto& p : stack)
      if (p == canon) throw ConfigError("config include cycle at " + path.string());
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    stack.push_back(canon);
    parse_into(ss.str(), path.string(), path.parent_path(), stack);
    stack.pop_back();
  }

  void parse_into(std::string_view text, const std::string& origin, const std::filesystem::path& dir,
                  std::vector<std::filesystem::path>& stack) {
    std::size_t line_no = 0;
    for (auto raw : split(text, '\n')) {
      ++line_no;
      auto line = trim(raw);
      if (line.empty()) continue;
      if (line.rfind("#include", 0) == 0) {
        auto target = trim(line.substr(8));
        if (target.size() >= 2 && (target.front() == '"' || target.front() == '<'))
          target = target.substr(1, target.size() - 2);
        std::filesystem::path p(target);
        if (p.is_relative()) p = dir / p;
        load_into(p, stack);
        continue;
      }
      if (line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
      auto key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      set(std::string(key), std::string(trim(line.substr(eq + 1))));
    }
  }

  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace sfc
