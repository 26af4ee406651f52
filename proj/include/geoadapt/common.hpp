#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace geoadapt {

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError -> 1, NumericError -> 2, ContractMismatchError -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : ConfigError {
  using ConfigError::ConfigError;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RejectedGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hierarchical sub-seed derivation: mixes a master seed with named stream
// tags so every pipeline stage gets an independent, reproducible stream.
inline uint64_t derive_seed(uint64_t master, std::string_view tag) {
  return splitmix64(master ^ fnv1a64(tag));
}
inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index) {
  return splitmix64(splitmix64(master ^ fnv1a64(tag)) + index);
}

// Deterministic random stream. std::mt19937_64's output sequence is fixed by
// the standard; the distributions here are implemented by hand because the
// standard library distribution objects are implementation-defined.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) via rejection sampling.
  uint64_t bounded(uint64_t n) {
    if (n == 0) throw ConfigError("RandomStream::bounded: n must be positive");
    const uint64_t threshold = (~uint64_t{0} - n + 1) % n;  // 2^64 mod n
    for (;;) {
      uint64_t r = engine_();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller, caching the second draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform01();
    double u2 = uniform01();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Partial Fisher-Yates draw of k distinct indices from [0, n).
  std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
    if (k > n) throw ConfigError("sample_without_replacement: k exceeds n");
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + static_cast<size_t>(bounded(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Canonical decimal formatting: 17 significant digits round-trip any double.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// 64-byte aligned allocator so Eigen kernel dispatch (and therefore the
// floating-point reduction order) never depends on where the heap happened
// to place a buffer. Required for the bit-exact determinism guarantees.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr size_t alignment = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(size_t n) {
    if (n == 0) return nullptr;
    size_t bytes = (n * sizeof(T) + alignment - 1) / alignment * alignment;
    void* p = std::aligned_alloc(alignment, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, size_t) { std::free(p); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using AlignedVec = std::vector<double, AlignedAllocator<double>>;

}  // namespace geoadapt
