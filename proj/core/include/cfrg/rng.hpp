#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace cfrg {

// splitmix64; used to derive independent stream seeds from a root seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Keyed derivation: rng_seed(seed, tag, epoch, index, ...). Every consumer of
// randomness (shuffle, synthesis, init) owns a stream derived this way, so
// checkpoint resume and concurrent loading stay order-independent.
inline uint64_t derive_seed(uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
inline uint64_t derive_seed(uint64_t seed, uint64_t k, Rest... rest) {
  return derive_seed(splitmix64(seed ^ splitmix64(k)), rest...);
}

inline uint64_t tag_hash(const char* tag) {
  uint64_t h = 1469598103934665603ull;
  for (const char* p = tag; *p; ++p) h = (h ^ (uint64_t)(unsigned char)(*p)) * 1099511628211ull;
  return h;
}

class RngStream {
 public:
  RngStream() : engine_(0) {}
  explicit RngStream(uint64_t seed) : engine_(seed) {}

  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // inclusive bounds
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

  std::string serialize() const {
    std::ostringstream oss;
    oss << engine_;
    return oss.str();
  }
  void restore(const std::string& s) {
    std::istringstream iss(s);
    iss >> engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cfrg
