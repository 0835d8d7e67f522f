#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace traject {

// Deterministic random stream with a fixed draw algorithm, so identical seeds
// give identical sequences across platforms and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller, cosine branch only (no cached state).
  double normal();

  // Uniform integer in [0, n).
  int uniform_int(int n);

  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 step, used for seed mixing.
std::uint64_t mix_u64(std::uint64_t x);

std::uint64_t hash_str(std::string_view s);

// Derives an independent stream seed from a base seed and tags.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a, std::uint64_t b);

}  // namespace traject
