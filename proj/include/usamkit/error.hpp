#pragma once

#include <stdexcept>
#include <string>

namespace usamkit {

// Single exception type for all contract violations; messages carry context
// (file/line for parsers, cell lists for grid checks).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

}  // namespace usamkit
