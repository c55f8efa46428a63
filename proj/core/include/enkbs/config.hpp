#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace enkbs {

// Flat key-value configuration. File grammar: one `key = value` pair per
// line, `#` starts a comment, blank lines ignored. CLI `--set key=value`
// entries override file values.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  void apply_override(const std::string& key_equals_value);  // "key=value"

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const;

  // Keys actually read; unknown leftovers are reported as errors so typos in
  // configs do not silently become defaults.
  std::vector<std::string> unused_keys() const;

  // Canonical serialization (sorted keys) and its FNV-1a hash, used in CSV
  // metadata so identical configs produce identical files.
  std::string canonical() const;
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> touched_;
};

}  // namespace enkbs
