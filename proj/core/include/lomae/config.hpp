#pragma once

#include <map>
#include <string>
#include <vector>

namespace lomae {

// Flat `key = value` config file. Lines starting with '#' and blank lines are
// ignored. Unknown keys are kept so callers can round-trip files.
class FlatConfig {
 public:
  FlatConfig() = default;
  static FlatConfig load(const std::string& path);
  static FlatConfig parse(const std::string& text);
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated integer list, e.g. "4,4,4,4".
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;
  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace lomae
