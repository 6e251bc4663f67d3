#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace tagcc {

struct ArtifactRef {
  std::string path;
  std::string fnv64;
};

// Everything needed to reproduce a run: the full config snapshot, the input
// files with content hashes, and every produced artifact with its hash.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::string schema_fingerprint;
  std::string anchor_source;       // llm | fallback | unknown
  std::string embedding_provider;
  std::uint64_t seed = 0;
  std::vector<ArtifactRef> inputs;
  std::vector<ArtifactRef> artifacts;
  nlohmann::json metrics;  // eval/perturb results, empty otherwise

  void add_input(const std::filesystem::path& path);
  void add_artifact(const std::filesystem::path& path);
};

std::string file_fnv64(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
nlohmann::json manifest_to_json(const RunManifest& manifest);

}  // namespace tagcc
