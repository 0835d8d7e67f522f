#include "traject/rng.hpp"

#include <cmath>
#include <numbers>

#include "traject/common.hpp"

namespace traject {

double Rng::normal() {
  // u1 in (0, 1] keeps the log finite.
  const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int n) {
  require(n > 0, "uniform_int requires n > 0, got ", n);
  return static_cast<int>(engine_() % static_cast<std::uint64_t>(n));
}

std::uint64_t mix_u64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix_u64(base);
  for (std::uint64_t t : tags) h = mix_u64(h ^ t);
  return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return derive_seed(base, {hash_str(tag)});
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a) {
  return derive_seed(base, {hash_str(tag), a});
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a, std::uint64_t b) {
  return derive_seed(base, {hash_str(tag), a, b});
}

}  // namespace traject
