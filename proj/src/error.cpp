#include "hrl/error.hpp"

namespace hrl {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_horizon: return "invalid horizon";
    case ErrorKind::episode_finished: return "episode finished";
    case ErrorKind::invalid_state: return "invalid state";
    case ErrorKind::invalid_layout: return "invalid layout";
    case ErrorKind::invalid_size: return "invalid size";
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::format: return "format error";
    case ErrorKind::version: return "version error";
    case ErrorKind::config: return "config error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::coverage: return "coverage error";
    case ErrorKind::io: return "io error";
    case ErrorKind::contract: return "contract error";
  }
  return "error";
}

}  // namespace hrl
