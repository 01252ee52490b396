#include "rolldrop/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "rolldrop/errors.hpp"

#ifndef ROLLDROP_VERSION
#define ROLLDROP_VERSION "0.0.0"
#endif
#ifndef ROLLDROP_GIT_REV
#define ROLLDROP_GIT_REV "unknown"
#endif

namespace rolldrop {

namespace {
constexpr const char* kManifestFormat = "rolldrop-manifest";
constexpr int kManifestVersion = 1;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}
}  // namespace

std::string version_string() { return std::string(ROLLDROP_VERSION) + " (" + ROLLDROP_GIT_REV + ")"; }

Manifest make_manifest(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& command) {
  Manifest m;
  m.config = cfg;
  m.seed = seed;
  m.command = command;
  m.code_version = version_string();
  m.created_utc = utc_now();
  return m;
}

nlohmann::json to_json(const Manifest& m) {
  return nlohmann::json{{"format", kManifestFormat},
                        {"format_version", kManifestVersion},
                        {"command", m.command},
                        {"seed", m.seed},
                        {"preset", m.config.preset},
                        {"code_version", m.code_version},
                        {"created_utc", m.created_utc},
                        {"outputs", m.outputs},
                        {"config", to_json(m.config)}};
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << dump_json(to_json(m));
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kManifestFormat)
    throw ConfigError(path.string() + ": not a rolldrop manifest");
  if (doc.value("format_version", 0) != kManifestVersion)
    throw ConfigError(path.string() + ": unsupported manifest version");
  Manifest m;
  try {
    m.config = config_from_json(doc.at("config"));
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.command = doc.value("command", "");
    m.code_version = doc.value("code_version", "");
    m.created_utc = doc.value("created_utc", "");
    if (doc.contains("outputs")) m.outputs = doc["outputs"].get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace rolldrop
