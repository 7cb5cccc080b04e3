#include "neurocodec/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "neurocodec/errors.hpp"

namespace neurocodec {

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str(), std::filesystem::path(path).parent_path().string());
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& base_dir) {
  RunConfig cfg;
  cfg.base_dir = base_dir;
  cfg.raw_text = text;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    // trim
    const size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " has no '=': " + line);
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    const size_t ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke + 1);
    const size_t vb = val.find_first_not_of(" \t");
    val = vb == std::string::npos ? "" : val.substr(vb);
    if (cfg.kv.count(key)) throw ConfigError("duplicate config key: " + key);
    cfg.kv[key] = val;
  }
  return cfg;
}

std::string RunConfig::get_str(const std::string& key, const std::string& dflt) const {
  const auto it = kv.find(key);
  return it == kv.end() ? dflt : it->second;
}

double RunConfig::get_double(const std::string& key, double dflt) const {
  const auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not a number: " + it->second);
  }
}

int RunConfig::get_int(const std::string& key, int dflt) const {
  return static_cast<int>(get_i64(key, dflt));
}

int64_t RunConfig::get_i64(const std::string& key, int64_t dflt) const {
  const auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an integer: " + it->second);
  }
}

uint64_t RunConfig::get_u64(const std::string& key, uint64_t dflt) const {
  const auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an integer: " + it->second);
  }
}

bool RunConfig::get_bool(const std::string& key, bool dflt) const {
  const auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  if (it->second == "1" || it->second == "true" || it->second == "on") return true;
  if (it->second == "0" || it->second == "false" || it->second == "off") return false;
  throw ConfigError("config key " + key + " is not a boolean: " + it->second);
}

std::string RunConfig::get_path(const std::string& key, const std::string& dflt) const {
  const std::string v = get_str(key, dflt);
  if (v.empty()) return v;
  const std::filesystem::path p(v);
  if (p.is_absolute() || base_dir.empty()) return v;
  return (std::filesystem::path(base_dir) / p).string();
}

std::vector<int> RunConfig::get_int_list(const std::string& key,
                                         const std::vector<int>& dflt) const {
  const auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  std::vector<int> out;
  std::istringstream ss(it->second);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " has a non-integer entry: " + part);
    }
  }
  if (out.empty()) throw ConfigError("config key " + key + " is an empty list");
  return out;
}

void RunConfig::check_known(const std::set<std::string>& known) const {
  for (const auto& [key, val] : kv)
    if (!known.count(key)) throw ConfigError("unknown config key: " + key);
}

}  // namespace neurocodec
