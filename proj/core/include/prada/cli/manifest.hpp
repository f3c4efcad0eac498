#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace prada::cli {

inline constexpr const char* kToolVersion = "prada 0.3.0";

struct FileDigest {
  std::string path;  // as given on the command line or relative to the output directory
  std::string sha256;
};

// Everything needed to re-run one command and check its outputs.
struct RunManifest {
  std::string command;
  std::string cwd;                // relative paths in args resolve here
  std::vector<std::string> args;  // arguments after the program name, as invoked
  std::uint64_t seed = 0;
  std::string seed_source;  // "flag", "env" or "drawn"
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> artifacts;
  std::string tool_version = kToolVersion;
  nlohmann::ordered_json stage_seconds = nlohmann::ordered_json::object();
};

FileDigest digest_of(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

// Paths whose current digest differs from the recorded one (or that vanished).
std::vector<std::string> changed_files(const std::vector<FileDigest>& recorded);

// Seed precedence: explicit flag, then the PRADA_SEED environment variable,
// then a freshly drawn value. The source is reported so it can be recorded.
struct SeedChoice {
  std::uint64_t seed = 0;
  std::string source;
};
SeedChoice resolve_seed(const std::optional<std::uint64_t>& flag);

// Exclusive writer lock on an output directory, held for the object's
// lifetime. Throws DataError when another process holds it.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Refuses (ConfigError) to overwrite existing files unless force is set.
void check_overwrite(const std::vector<std::filesystem::path>& outputs, bool force);

}  // namespace prada::cli
