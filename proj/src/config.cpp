#include "fieldflow/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace ff {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (cfg.kv_.count(key))
      throw ConfigError("config: duplicate key " + key);
    cfg.kv_[key] = value;
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

bool Config::has(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return false;
  used_.insert(key);
  return true;
}

std::string Config::get_string(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("config: missing key " + key);
  used_.insert(key);
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  used_.insert(key);
  return it->second;
}

double Config::get_double(const std::string& key) const {
  std::string v = get_string(key);
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: key " + key + " is not a number: " + v);
  }
}

double Config::get_double(const std::string& key, double dflt) const {
  return kv_.count(key) ? get_double(key) : dflt;
}

long Config::get_int(const std::string& key) const {
  std::string v = get_string(key);
  try {
    size_t used = 0;
    long d = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: key " + key + " is not an integer: " + v);
  }
}

long Config::get_int(const std::string& key, long dflt) const {
  return kv_.count(key) ? get_int(key) : dflt;
}

bool Config::get_bool(const std::string& key, bool dflt) const {
  if (!kv_.count(key)) return dflt;
  std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: key " + key + " is not a boolean: " + v);
}

std::vector<double> Config::get_list(const std::string& key) const {
  std::string v = get_string(key);
  std::vector<double> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("config: key " + key + " has a bad list entry: " + item);
    }
  }
  if (out.empty()) throw ConfigError("config: key " + key + " is an empty list");
  return out;
}

std::vector<long> Config::get_int_list(const std::string& key) const {
  std::vector<double> d = get_list(key);
  std::vector<long> out;
  for (double v : d) {
    long l = static_cast<long>(v);
    if (static_cast<double>(l) != v)
      throw ConfigError("config: key " + key + " needs integer entries");
    out.push_back(l);
  }
  return out;
}

std::vector<std::string> Config::keys_with_prefix(
    const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& kv : kv_)
    if (kv.first.rfind(prefix, 0) == 0) {
      out.push_back(kv.first);
      used_.insert(kv.first);
    }
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& kv : kv_)
    if (!used_.count(kv.first)) out.push_back(kv.first);
  return out;
}

}  // namespace ff
