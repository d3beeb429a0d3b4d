#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace entnas {

#ifdef ENTNAS_REAL_FLOAT32
using real = float;
#else
using real = double;
#endif

enum class ErrorKind {
  Contract,  // violated precondition / shape mismatch
  Numeric,   // non-finite value produced
  Config,    // bad run configuration
  Format,    // malformed file contents
  Io,        // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

// splitmix64 finalizer; derives independent seed streams from one master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

// Explicit draw helpers instead of std:: distributions: no hidden state, so a
// serialized engine resumes bit-exactly and output does not depend on the
// standard library version.

inline real uniform_real(Rng& rng) {  // [0, 1)
  return static_cast<real>((rng() >> 11) * (1.0 / 9007199254740992.0));
}

inline real uniform_range(Rng& rng, real lo, real hi) { return lo + (hi - lo) * uniform_real(rng); }

inline real normal_real(Rng& rng) {  // Box-Muller, always consumes two draws
  const double u1 = ((rng() >> 11) + 1) * (1.0 / 9007199254740992.0);
  const double u2 = (rng() >> 11) * (1.0 / 9007199254740992.0);
  return static_cast<real>(std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2));
}

}  // namespace entnas
