#include "restorerid/checkpoint.h"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "restorerid/errors.h"

using nlohmann::json;

namespace rid {

namespace {
constexpr char kMagic[8] = {'R', 'I', 'D', 'C', 'K', 'P', 'T', '1'};
}

void Checkpoint::save(const std::string& path) const {
  json header;
  header["version"] = version;
  header["kind"] = kind;
  header["meta"] = meta;
  uint64_t offset = 0;
  json index = json::array();
  for (const auto& [name, t] : tensors) {
    index.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += static_cast<uint64_t>(t.numel());
  }
  header["tensors"] = index;
  std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, 8);
  uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t.ptr()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!out) throw IoError("short write on checkpoint " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("missing checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(htext);

  Checkpoint ck;
  ck.version = header.at("version").get<int>();
  ck.kind = header.at("kind").get<std::string>();
  ck.meta = header.at("meta").get<std::map<std::string, std::string>>();
  for (const auto& e : header.at("tensors")) {
    std::string name = e.at("name").get<std::string>();
    std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint " + path);
    ck.tensors.emplace(std::move(name), std::move(t));
  }
  return ck;
}

void Checkpoint::put_params(const ParamList<float>& params) {
  for (const Param<float>* p : params) tensors[p->name] = p->value;
}

void Checkpoint::load_into(const ParamList<float>& params) const {
  for (Param<float>* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end())
      throw StateError("checkpoint missing tensor " + p->name);
    if (it->second.shape != p->value.shape)
      throw ConfigError("checkpoint shape mismatch for " + p->name);
    p->value = it->second;
    p->m = {};
    p->v = {};
  }
}

double Checkpoint::meta_double(const std::string& key, double fallback) const {
  auto it = meta.find(key);
  if (it == meta.end()) return fallback;
  return std::stod(it->second);
}

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  return h;
}

}  // namespace rid
