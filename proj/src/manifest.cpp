#include "tagcc/manifest.hpp"

#include "tagcc/common.hpp"

namespace tagcc {

std::string file_fnv64(const std::filesystem::path& path) {
  return hash_hex(read_text_file(path));
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({path.string(), file_fnv64(path)});
}

void RunManifest::add_artifact(const std::filesystem::path& path) {
  artifacts.push_back({path.string(), file_fnv64(path)});
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json doc;
  doc["command"] = m.command;
  doc["config"] = m.config;
  doc["schema_fingerprint"] = m.schema_fingerprint;
  doc["anchor_source"] = m.anchor_source;
  doc["embedding_provider"] = m.embedding_provider;
  doc["seed"] = m.seed;
  doc["inputs"] = nlohmann::json::array();
  for (const ArtifactRef& a : m.inputs) {
    doc["inputs"].push_back({{"path", a.path}, {"fnv64", a.fnv64}});
  }
  doc["artifacts"] = nlohmann::json::array();
  for (const ArtifactRef& a : m.artifacts) {
    doc["artifacts"].push_back({{"path", a.path}, {"fnv64", a.fnv64}});
  }
  if (!m.metrics.is_null()) doc["metrics"] = m.metrics;
  return doc;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  write_text_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

}  // namespace tagcc
