#pragma once

#include <stdexcept>
#include <string>

namespace hrl {

enum class ErrorKind {
  invalid_horizon,
  episode_finished,
  invalid_state,
  invalid_layout,
  invalid_size,
  invalid_argument,
  format,
  version,
  config,
  numeric,
  coverage,
  io,
  contract,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hrl
