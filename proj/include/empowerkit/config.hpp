#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace empowerkit {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key = value configuration. Commands seed a RunConfig with their full
// default set, then overlay file values and flag overrides; overlaying an
// unknown key is an error, and the resolved config is echoed into the run
// directory so a run can be reproduced from its echo alone.
class RunConfig {
 public:
  static RunConfig parse_file(const std::string& path);

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  // overlay, rejecting keys not already present in the defaults
  void merge_checked(const RunConfig& overrides);

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  // sorted "key = value" lines
  std::string echo() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace empowerkit
