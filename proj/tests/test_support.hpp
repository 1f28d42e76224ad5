#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "atlas/util/bytes.hpp"

namespace atlas::test {

inline std::string fixture_path(const std::string& name) {
  return std::string(ATLAS_FIXTURE_DIR) + "/" + name;
}

inline std::string config_path(const std::string& name) {
  return std::string(ATLAS_CONFIG_DIR) + "/" + name;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Bytes read_hex_fixture(const std::string& name) {
  return from_hex(read_text(fixture_path(name)));
}

}  // namespace atlas::test
