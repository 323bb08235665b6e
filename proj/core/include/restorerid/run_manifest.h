#pragma once

#include <map>
#include <string>
#include <vector>

namespace rid {

// Provenance record written next to every artifact-producing run's outputs.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;  // resolved flag+file snapshot
  std::vector<std::string> inputs, outputs;
  std::map<std::string, std::string> checkpoint_hashes;
  uint64_t seed = 0;
  double duration_seconds = 0.0;

  void save(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

// Exclusive guard on an output directory; throws StateError if another run
// holds it. Removed on destruction.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

}  // namespace rid
