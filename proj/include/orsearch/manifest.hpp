#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orsearch/core.hpp"

namespace orsearch {

/// Provenance record for one CLI run. Every output directory contains
/// exactly one of these, named run_manifest.json.
struct RunManifest {
  std::string command;
  std::string tool_version = kVersion;
  std::uint64_t config_hash = 0;   // FNV-1a over the resolved flag string
  std::uint64_t dataset_hash = 0;  // FNV-1a over the input dataset files
  std::vector<std::uint64_t> seeds;
  double wall_time_seconds = 0.0;

  nlohmann::json to_json() const {
    return {{"command", command},
            {"tool_version", tool_version},
            {"config_hash", config_hash},
            {"dataset_hash", dataset_hash},
            {"seeds", seeds},
            {"wall_time_seconds", wall_time_seconds}};
  }
};

inline void write_manifest(const std::filesystem::path& dir,
                           const RunManifest& manifest) {
  const std::filesystem::path path = dir / "run_manifest.json";
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    fail(ErrorCode::IoError, "cannot write " + path.string());
  }
  os << manifest.to_json().dump(2) << '\n';
}

}  // namespace orsearch
