#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mgdr {

/// Raised on malformed or inconsistent input files / data sets.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised on invalid configuration (bad rates, empty simplex, bad windows, ...).
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// splitmix64 step; used to derive independent child seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic child seed for stream `index` of `master`.
inline std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master ^ (0x632be59bd9b4e019ULL * (index + 1));
  return splitmix64(s);
}

namespace detail {

/// Uniform draw on [0, 1) with 53 random bits (portable across platforms).
inline double uniform01(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller (portable across standard libraries).
inline double normal01(std::uint64_t& state) {
  double u1 = uniform01(state);
  while (u1 <= 0.0) u1 = uniform01(state);
  const double u2 = uniform01(state);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace detail

}  // namespace mgdr
