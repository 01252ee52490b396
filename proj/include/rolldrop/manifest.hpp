#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "rolldrop/config.hpp"

namespace rolldrop {

std::string version_string();  // "<semver> (<git rev>)"

struct Manifest {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::string command;  // e.g. "train"
  std::string code_version;
  std::string created_utc;
  std::map<std::string, std::string> outputs;  // name -> path relative to the run directory
};

Manifest make_manifest(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& command);
nlohmann::json to_json(const Manifest& m);
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace rolldrop
