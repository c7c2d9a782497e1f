#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#ifndef EMFI_TEST_DATA
#error "EMFI_TEST_DATA must point at tests/data"
#endif

namespace emfi::test {

inline std::string dataPath(const std::string& name) { return std::string(EMFI_TEST_DATA) + "/" + name; }

inline std::string readData(const std::string& name) {
  std::ifstream in(dataPath(name), std::ios::binary);
  if (!in) throw std::runtime_error("missing test data " + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace emfi::test
