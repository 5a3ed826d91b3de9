#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace blanket {

// All engine errors derive from error so callers can catch one base type.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct cycle_error : error {
  using error::error;
};
struct support_error : error {
  using error::error;
};
struct type_error : error {
  using error::error;
};
struct unknown_address_error : error {
  using error::error;
};
struct missing_artifact_error : error {
  explicit missing_artifact_error(const std::string& family)
      : error("no trained artifact for family '" + family + "'"), family(family) {}
  std::string family;
};
struct version_error : error {
  using error::error;
};
struct chain_error : error {
  using error::error;
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// splitmix64, used for deriving named substreams and per-site seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

// FNV-1a; stable across processes (used for per-site rng derivation).
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(s.data(), s.size(), h);
}

inline bool approx_equal(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

}  // namespace blanket
