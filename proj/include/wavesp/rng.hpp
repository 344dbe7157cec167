#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace wavesp {

// Deterministic splitmix64 stream. Distribution sampling is implemented
// here rather than with <random> adapters so that sequences are identical
// across standard libraries and across runs.
class RngStream {
 public:
  RngStream() : state_(0x9e3779b97f4a7c15ull) {}

  // Derives an independent stream from a master seed and a stream name.
  RngStream(uint64_t master_seed, std::string_view name) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a over the name
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    state_ = mix(master_seed + 0x9e3779b97f4a7c15ull) ^ mix(h);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second sample of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Named streams derived from one master seed. Each name gets its own
// stateful stream, created on first use.
class RngContext {
 public:
  explicit RngContext(uint64_t master_seed = 0) : master_(master_seed) {}

  RngStream& stream(const std::string& name) {
    auto it = streams_.find(name);
    if (it == streams_.end()) {
      it = streams_.emplace(name, RngStream(master_, name)).first;
    }
    return it->second;
  }

  uint64_t master_seed() const { return master_; }

 private:
  uint64_t master_;
  std::map<std::string, RngStream> streams_;
};

}  // namespace wavesp
