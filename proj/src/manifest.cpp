#include "vrd/manifest.hpp"

#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "vrd/error.hpp"

namespace vrd {

std::string_view tool_version() { return VRD_VERSION; }

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

std::string RunManifest::config_hash() const {
  std::string text = "subcommand=" + subcommand + "\n";
  for (const auto& [k, v] : config) text += k + "=" + v + "\n";
  return hex64(fnv1a64(text));
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json doc;
  doc["subcommand"] = subcommand;
  doc["config_hash"] = config_hash();
  doc["config"] = config;
  doc["inputs"] = inputs;
  doc["outputs"] = outputs;
  doc["seed"] = seed;
  doc["tool_version"] = tool_version;
  doc["duration_seconds"] = duration_seconds;
  return doc.dump(2) + "\n";
}

void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << manifest.to_json();
  if (!out) throw Error(fmt::format("failed writing {}", path.string()));
}

}  // namespace vrd
