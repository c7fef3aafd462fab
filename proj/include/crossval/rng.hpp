#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace crossval {

// splitmix64 finalizer; used for key derivation and content fingerprints.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t h, uint64_t v) {
  return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic random stream. All distributions are implemented here on top
// of mt19937_64 (whose output sequence the standard fully specifies), so
// streams are bit-reproducible across platforms and standard libraries.
//
// Child streams derive from the stream's root key, never from its consumption
// state: child("tag", i) is the same stream no matter how much the parent has
// been used or on which worker thread the derivation happens.
class RngStream {
 public:
  explicit RngStream(uint64_t key) : key_(key), eng_(mix64(key)) {}

  uint64_t key() const { return key_; }

  RngStream child(std::string_view tag, uint64_t a = 0, uint64_t b = 0) const {
    uint64_t k = hash_combine(key_, fnv1a64(tag));
    k = hash_combine(k, a);
    k = hash_combine(k, b);
    return RngStream(k);
  }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform on {0, ..., n-1} by masked rejection
  uint64_t uniform_int(uint64_t n) {
    if (n <= 1) return 0;
    uint64_t mask = ~uint64_t{0} >> __builtin_clzll((n - 1) | 1);
    uint64_t v;
    do {
      v = eng_() & mask;
    } while (v >= n);
    return v;
  }

  // standard normal via Box-Muller with spare caching
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // unit-rate exponential
  double exponential() { return -std::log(1.0 - uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

  // k distinct indices from {0,...,n-1}, uniform, in draw order
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(uniform_int(static_cast<uint64_t>(n - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

  std::vector<int> permutation(int n) { return sample_without_replacement(n, n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t key_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace crossval
