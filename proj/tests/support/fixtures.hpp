#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace domlearn::testing {

inline std::string fixture_path(const std::string& relative) {
  return std::string(DOMLEARN_FIXTURE_DIR) + "/" + relative;
}

inline std::string read_fixture(const std::string& relative) {
  std::ifstream in(fixture_path(relative));
  if (!in) throw std::runtime_error("missing fixture " + relative);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace domlearn::testing
