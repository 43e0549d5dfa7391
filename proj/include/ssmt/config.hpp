#pragma once

// Flat, typed run configuration. Every tunable of the pipeline is a key in
// one registry; config files hold `key = value` lines and command-line flags
// override them. The canonical snapshot is embedded in every output tree.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ssmt::config {

enum class KeyType { Int, Real, Bool, String, IntList, RealList, StringList };

struct KeyDef {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
};

/// The five target tasks, in head order.
const std::vector<std::string>& known_tasks();

const std::vector<KeyDef>& registry();
const KeyDef* find_key(const std::string& name);

class RunConfig {
 public:
  RunConfig();

  /// Applies `key = value` lines from a file on top of the current values.
  void merge_file(const std::filesystem::path& path);
  void merge_text(const std::string& text);
  void set(const std::string& key, const std::string& value);

  std::int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<std::int64_t> get_ints(const std::string& key) const;
  std::vector<double> get_reals(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  /// Canonical `key = value` text, one line per key in sorted order.
  std::string snapshot() const;
  /// FNV-1a 64 of the snapshot.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  static RunConfig from_snapshot(const std::string& text);

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

 private:
  const std::string& raw(const std::string& key, KeyType expected) const;

  std::map<std::string, std::string> values_;
};

/// Every key with its type, default and description.
std::string help_text();

std::string format_real(double v);

}  // namespace ssmt::config
