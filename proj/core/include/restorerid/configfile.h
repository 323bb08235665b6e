#pragma once

#include <map>
#include <string>

namespace rid {

// key=value files; '#' starts a comment, blank lines ignored
std::map<std::string, std::string> read_config(const std::string& path);
void write_config(const std::string& path, const std::map<std::string, std::string>& kv);

}  // namespace rid
