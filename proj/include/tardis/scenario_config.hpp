#pragma once

#include <filesystem>
#include <string>

#include "tardis/error.hpp"
#include "tardis/sim_orchestrator.hpp"

namespace tardis {

/// A configuration file that cannot be read, parsed or validated. The
/// message names the file or key at fault.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Parses a JSON scenario. Omitted keys keep their defaults, unknown keys
/// are rejected, and a relative trace path resolves against `base_dir`.
/// Checks that a named trace file exists.
ScenarioConfig parse_config(const std::string& text,
                            const std::filesystem::path& base_dir = {});
ScenarioConfig load_config(const std::filesystem::path& path);

/// Every field, defaults included, as indented JSON.
std::string config_to_json(const ScenarioConfig& config);

}  // namespace tardis
