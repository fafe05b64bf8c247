#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "emucal/pipeline.hpp"

namespace emucal {

inline constexpr const char* kToolVersion = "0.1.0";

// Parses a config document, applying the documented defaults to every absent
// field. Field errors carry the offending field path.
ExperimentConfig config_from_json(const nlohmann::json& j);

// Full resolved echo: every field explicit, derived ns seeds frozen. A config
// obtained by re-parsing this echo resolves to the same JSON again.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Loads and parses a config file; parse errors include line context.
ExperimentConfig load_config(const std::string& path);

struct RunManifest {
  std::string config_path;
  nlohmann::json resolved_config;
  std::string output_dir;
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;  // empty until the run completes
};

std::string now_iso8601();

void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace emucal
