#pragma once

#include <map>
#include <string>

#include "restorerid/nn.h"
#include "restorerid/tensor.h"

namespace rid {

// Self-describing weight container: magic + JSON header (version, kind,
// metadata, tensor index) + raw float32 payload.
struct Checkpoint {
  int version = 1;
  std::string kind;
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  void put_params(const ParamList<float>& params);
  // copies by name; throws StateError on missing tensor, ConfigError on shape mismatch
  void load_into(const ParamList<float>& params) const;

  double meta_double(const std::string& key, double fallback) const;
};

uint64_t file_hash(const std::string& path);

}  // namespace rid
