#include "restorerid/run_manifest.h"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>

#include "json.hpp"
#include "restorerid/errors.h"

using nlohmann::json;

namespace rid {

void RunManifest::save(const std::string& path) const {
  json j;
  j["subcommand"] = subcommand;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["checkpoint_hashes"] = checkpoint_hashes;
  j["seed"] = seed;
  j["duration_seconds"] = duration_seconds;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write run manifest " + path);
  out << j.dump(2) << "\n";
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read run manifest " + path);
  json j = json::parse(in);
  RunManifest m;
  m.subcommand = j.at("subcommand").get<std::string>();
  m.config = j.at("config").get<std::map<std::string, std::string>>();
  m.inputs = j.at("inputs").get<std::vector<std::string>>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.checkpoint_hashes = j.at("checkpoint_hashes").get<std::map<std::string, std::string>>();
  m.seed = j.at("seed").get<uint64_t>();
  m.duration_seconds = j.at("duration_seconds").get<double>();
  return m;
}

DirLock::DirLock(const std::string& dir) : path_(dir + "/.restorerid.lock") {
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw StateError("output directory locked by another run: " + dir);
    throw IoError("cannot create lockfile in " + dir);
  }
  ::close(fd);
}

DirLock::~DirLock() { ::unlink(path_.c_str()); }

}  // namespace rid
