#pragma once

#include <stdexcept>
#include <string>

namespace avgn {

// Contract violations on operation inputs (shape mismatch, empty sets, ...).
class invalid_input : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed on-disk artifacts (manifests, checkpoints). Messages carry the
// offending location (line number, byte offset) where one exists.
class parse_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw invalid_input(msg);
}

}  // namespace avgn
