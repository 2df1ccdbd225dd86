#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ff {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key-value configuration parsed from INI-style text: [section] headers
// prefix the keys inside them ("section.key"), blank lines and lines starting
// with '#' or ';' are skipped. Lookups record which keys were consumed so
// unknown keys can be rejected after a scenario is built.
class Config {
public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  long get_int(const std::string& key) const;
  long get_int(const std::string& key, long dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<double> get_list(const std::string& key) const;
  std::vector<long> get_int_list(const std::string& key) const;

  // All stored keys beginning with `prefix`, marked as consumed.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  // Keys never consumed by any lookup.
  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& entries() const { return kv_; }

private:
  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> used_;
};

}  // namespace ff
