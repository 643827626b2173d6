#pragma once

#include <stdexcept>
#include <string>

namespace scnn {

// Status codes shared by the C API and the CLI exit status.
enum class Status : int {
  Ok = 0,
  Usage = 1,    // bad arguments, bad config, misuse of an API
  Data = 2,     // unreadable/inconsistent data, shape mismatches
  Numeric = 3,  // divergence, non-finite values
};

class Error : public std::runtime_error {
 public:
  Error(Status code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Status code() const noexcept { return code_; }

 private:
  Status code_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(Status::Usage, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(Status::Data, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(Status::Numeric, msg); }

}  // namespace scnn
