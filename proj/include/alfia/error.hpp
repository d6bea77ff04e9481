#pragma once

#include <stdexcept>
#include <string>

namespace alfia {

// Single exception type for every contract violation in the library. The
// message is one line and meant to be machine-parsable by the CLI.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

}  // namespace alfia
