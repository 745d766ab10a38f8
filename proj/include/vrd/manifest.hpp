#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vrd {

/// Version string of this build.
std::string_view tool_version();

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Record of one artifact-producing CLI invocation.
struct RunManifest {
  std::string subcommand;
  /// Effective configuration after config file and flag merging.
  std::map<std::string, std::string> config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string tool_version;
  double duration_seconds = 0.0;

  /// Hash over the sorted `key=value` lines of `config` and the subcommand.
  std::string config_hash() const;
  /// JSON text; keys in fixed order.
  std::string to_json() const;
};

void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace vrd
