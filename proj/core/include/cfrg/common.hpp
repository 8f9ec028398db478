#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cfrg {

// Scalar type used by the tensor engine and the metric kernels.
using real = double;

// User-facing failure classes; the CLI maps them onto exit codes.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class MetricError : public std::runtime_error {
 public:
  explicit MetricError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal invariant check. Failing one is a bug, not a usage error.
#define CFRG_CHECK(cond, msg)                                              \
  do {                                                                     \
    if (!(cond)) {                                                         \
      std::ostringstream oss_;                                             \
      oss_ << "internal check failed at " << __FILE__ << ":" << __LINE__   \
           << ": " << msg;                                                 \
      throw std::logic_error(oss_.str());                                  \
    }                                                                      \
  } while (0)

// FNV-1a, used for config hashes and the frozen-teacher weight hash.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace cfrg
