#include "prada/cli/manifest.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdlib>
#include <random>

#include "prada/model/checkpoint.hpp"
#include "prada/util/digest.hpp"
#include "prada/util/error.hpp"

namespace prada::cli {

FileDigest digest_of(const std::filesystem::path& path) { return {path.string(), sha256_file(path)}; }

namespace {

nlohmann::ordered_json digests_json(const std::vector<FileDigest>& files) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
  return arr;
}

std::vector<FileDigest> digests_from(const nlohmann::json& arr) {
  std::vector<FileDigest> out;
  for (const auto& e : arr) out.push_back({e.at("path").get<std::string>(), e.at("sha256").get<std::string>()});
  return out;
}

}  // namespace

nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "prada-manifest";
  j["tool_version"] = m.tool_version;
  j["command"] = m.command;
  j["cwd"] = m.cwd;
  j["args"] = m.args;
  j["seed"] = m.seed;
  j["seed_source"] = m.seed_source;
  j["config"] = m.config;
  j["inputs"] = digests_json(m.inputs);
  j["artifacts"] = digests_json(m.artifacts);
  j["stage_seconds"] = m.stage_seconds;
  return j;
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "prada-manifest") throw DataError("not a prada manifest");
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.cwd = j.at("cwd").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.seed_source = j.at("seed_source").get<std::string>();
    m.config = nlohmann::ordered_json::parse(j.at("config").dump());
    m.inputs = digests_from(j.at("inputs"));
    m.artifacts = digests_from(j.at("artifacts"));
    m.stage_seconds = nlohmann::ordered_json::parse(j.at("stage_seconds").dump());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  model::write_file_atomic(path, to_json(m).dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(nlohmann::json::parse(model::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> changed_files(const std::vector<FileDigest>& recorded) {
  std::vector<std::string> out;
  for (const auto& f : recorded) {
    if (!std::filesystem::exists(f.path) || sha256_file(f.path) != f.sha256) out.push_back(f.path);
  }
  return out;
}

SeedChoice resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return {*flag, "flag"};
  if (const char* env = std::getenv("PRADA_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return {static_cast<std::uint64_t>(v), "env"};
    } catch (const std::exception&) {
      throw ConfigError(std::string("PRADA_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  std::random_device rd;
  const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  return {v, "drawn"};
}

OutputLock::OutputLock(const std::filesystem::path& dir) : path_(dir / ".prada.lock") {
  std::filesystem::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw DataError("output directory " + dir.string() + " is locked by another process (remove " + path_.string() +
                    " if that process is gone)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

void check_overwrite(const std::vector<std::filesystem::path>& outputs, bool force) {
  if (force) return;
  for (const auto& p : outputs) {
    if (std::filesystem::exists(p)) {
      throw ConfigError("refusing to overwrite " + p.string() + " (pass --force)");
    }
  }
}

}  // namespace prada::cli
