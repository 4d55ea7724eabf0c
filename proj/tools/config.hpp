#pragma once

#include "lts/simulation.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltscli {

/// Config problem; `field()` is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& why)
      : std::runtime_error(field.empty() ? why : field + ": " + why), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Applies `key=value` assignments (dotted keys) to a JSON document. The value
/// is taken as JSON when it parses, otherwise as a string.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

/// Strict conversion: unknown keys and wrong types throw ConfigError naming the
/// path, as do violated McConfig invariants. Missing keys keep their defaults;
/// population fields default to the standard values of the chosen kind.
lts::McConfig config_from_json(const nlohmann::json& doc);

/// Every field of the effective configuration, in schema layout.
nlohmann::json config_to_json(const lts::McConfig& config);

/// Reads, overrides and converts. Throws ConfigError (schema or JSON syntax)
/// or std::ios_base::failure-like IoError when the file cannot be read.
lts::McConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

/// Canonical bytes of the effective configuration: sorted keys, shortest
/// round-trip numbers, worker count left out since it cannot change results.
std::string canonical_config(const lts::McConfig& config);

/// 64-bit FNV-1a, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path);

}  // namespace ltscli
