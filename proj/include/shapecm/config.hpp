#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace shapecm {

/// Flat `key = value` experiment configuration ('#' comments, blank lines
/// ignored). Values are strings on disk; typed getters parse on access.
/// SNR grids accept "lo:hi:step" ranges or comma-separated lists.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  /// Applies a "key=value" override (CLI flags).
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  double get_num(const std::string& key, double dflt) const;
  double get_num(const std::string& key) const;
  long get_int(const std::string& key, long dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<double> get_grid(const std::string& key) const;
  std::vector<std::uint64_t> get_seed_list(const std::string& key,
                                           std::vector<std::uint64_t> dflt) const;

  /// Sorted "key = value" lines; stable fingerprint input.
  std::string canonical_string() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace shapecm
