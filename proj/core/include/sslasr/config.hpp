// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_CONFIG_HPP
#define SSLASR_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sslasr {

/// Plain-text key=value configuration ('#' starts a comment). CLI
/// overrides are applied with set(); items() is sorted, which makes the
/// resolved-config echo diff-able across runs.
class KvConfig {
 public:
  KvConfig() = default;
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  /// Applies a "key=value" override string.
  void set_pair(const std::string& pair);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  std::string require_str(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& dflt) const;

  const std::map<std::string, std::string>& items() const { return kv_; }
  std::string dump() const;  // "key = value" lines, sorted

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace sslasr

#endif  // SSLASR_CONFIG_HPP
