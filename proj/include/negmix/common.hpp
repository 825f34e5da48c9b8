#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace negmix {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// All recoverable failures (bad input files, shape mismatches, invalid
// arguments) throw Error; the CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from NEGMIX_LOG (error|info|debug), read once. Default: error.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("NEGMIX_LOG");
    if (env == nullptr) return LogLevel::kError;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
    return LogLevel::kError;
  }();
  return level;
}

inline void log_error(const std::string& msg) {
  std::fprintf(stderr, "[negmix:error] %s\n", msg.c_str());
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo)
    std::fprintf(stderr, "[negmix:info] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::kDebug)
    std::fprintf(stderr, "[negmix:debug] %s\n", msg.c_str());
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace negmix
