#ifndef NEUROCODEC_CONFIG_HPP
#define NEUROCODEC_CONFIG_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

namespace neurocodec {

// Flat key=value configuration ('#' comments, blank lines allowed). Unknown
// keys are hard errors; relative paths resolve against the config file's
// directory.
struct RunConfig {
  std::map<std::string, std::string> kv;
  std::string base_dir;
  std::string raw_text;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text, const std::string& base_dir);

  bool has(const std::string& key) const { return kv.count(key) != 0; }
  std::string get_str(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key, double dflt) const;
  int get_int(const std::string& key, int dflt) const;
  int64_t get_i64(const std::string& key, int64_t dflt) const;
  uint64_t get_u64(const std::string& key, uint64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::string get_path(const std::string& key, const std::string& dflt) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& dflt) const;

  // Throws ConfigError naming the first key outside `known`.
  void check_known(const std::set<std::string>& known) const;
};

}  // namespace neurocodec

#endif
